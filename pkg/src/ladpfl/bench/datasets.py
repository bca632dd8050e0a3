"""Synthetic blobs, labelled CSV / IDX loaders and the held-out split."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, FormatError, InvalidParams
from ..model_engine import Dataset
from ..tensor_core import Purpose, RngStream, standard_normal

IDX_UBYTE_LABELS = 0x00000801
IDX_UBYTE_IMAGES = 0x00000803


def generate_synthetic(
    classes: int,
    samples_per_class: int,
    input_dim: int,
    separation: float,
    seed: int,
) -> Dataset:
    """Gaussian blobs with unit covariance.

    Class ``c`` is centred at ``separation`` times a random unit direction.
    Samples are ordered by class.
    """
    if classes < 2 or samples_per_class < 1 or input_dim < 1 or separation < 0:
        raise InvalidParams(
            f"need classes >= 2, samples_per_class >= 1, input_dim >= 1, separation >= 0; "
            f"got {classes}, {samples_per_class}, {input_dim}, {separation}"
        )
    root = RngStream(seed)
    directions = standard_normal((classes, input_dim), root.child(Purpose.DATA, 0))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centres = separation * directions
    n = classes * samples_per_class
    inputs = standard_normal((n, input_dim), root.child(Purpose.DATA, 1))
    labels = np.repeat(np.arange(classes), samples_per_class)
    inputs += centres[labels]
    return Dataset(inputs, labels, classes)


def stratified_split(dataset: Dataset, test_fraction: float, stream: RngStream) -> tuple[Dataset, Dataset]:
    """(train, test) with ``round(test_fraction * n_c)`` test samples per class."""
    gen = stream.generator()
    train_idx, test_idx = [], []
    for c in range(dataset.num_classes):
        idx = gen.permutation(np.flatnonzero(dataset.labels == c))
        n_test = int(round(test_fraction * len(idx)))
        if len(idx) > 1:
            n_test = min(max(n_test, 1), len(idx) - 1)
        test_idx.extend(idx[:n_test])
        train_idx.extend(idx[n_test:])
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def load_csv_labeled(path) -> Dataset:
    labels, rows = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise FormatError(f"{path}:{lineno}: need a label and at least one feature")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DimensionMismatch(f"{path}:{lineno}: expected {width - 1} features, got {len(row) - 1}")
            try:
                label = int(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if label < 0:
                raise FormatError(f"{path}:{lineno}: negative label {label}")
            labels.append(label)
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no samples")
    return Dataset(np.array(rows), np.array(labels))


def _read_idx(path, expected_magic: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError(f"{path}: truncated header", offset=len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0)
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise FormatError(f"{path}: truncated dimension header", offset=len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header_end])
    size = int(np.prod(dims, dtype=np.int64))
    if len(data) < header_end + size:
        raise FormatError(
            f"{path}: expected {size} payload bytes, found {len(data) - header_end}", offset=len(data)
        )
    if len(data) > header_end + size:
        raise FormatError(f"{path}: trailing bytes after payload", offset=header_end + size)
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header_end).reshape(dims)


def load_idx_pair(images_path, labels_path) -> Dataset:
    images = _read_idx(images_path, IDX_UBYTE_IMAGES)
    labels = _read_idx(labels_path, IDX_UBYTE_LABELS)
    if images.shape[0] != labels.shape[0]:
        raise DimensionMismatch(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64))


def load_dataset_file(path, format: str = "csv_labeled", labels_path=None) -> Dataset:
    if format == "csv_labeled":
        return load_csv_labeled(path)
    if format == "idx_pair":
        if labels_path is None:
            raise FormatError("idx_pair needs both an images path and a labels path")
        return load_idx_pair(path, labels_path)
    raise FormatError(f"unknown dataset format {format!r}")


def write_csv_labeled(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for label, row in zip(dataset.labels, dataset.inputs):
            writer.writerow([int(label), *(repr(float(v)) for v in row)])
