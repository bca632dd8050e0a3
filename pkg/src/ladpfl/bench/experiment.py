"""Single runs and strategy sweeps with CSV metrics and a JSON summary.

Each run writes into its output directory:

``metrics.csv``
    One row per round, columns :data:`METRICS_COLUMNS`. Floats are written
    with ``repr`` so every row parses back to the same :class:`MetricsRow`.
    Rows are flushed as soon as the round finishes.
``summary.json``
    Final accuracy, noise totals, final cumulative epsilon, per-layer
    selection frequency and the wall time (the only non-deterministic value,
    which is why it never appears in the CSV).
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

from ..errors import ValidationError
from ..fl_runtime import RoundRecord, TrainingResult, partition_data, run_training
from ..model_engine import Dataset
from ..tensor_core import Purpose, RngStream
from .config import ExperimentConfig
from .datasets import generate_synthetic, load_dataset_file, stratified_split

METRICS_FILE = "metrics.csv"
SUMMARY_FILE = "summary.json"


@dataclass(frozen=True)
class MetricsRow:
    strategy: str
    epsilon: float
    seed: int
    round: int
    test_accuracy: float
    test_loss: float
    active_clients: tuple[int, ...]
    layers_selected: int
    floor_hits: int
    total_noise_l2: float
    noise_l2_concat: float
    cumulative_epsilon: float

    @classmethod
    def from_record(cls, record: RoundRecord, strategy: str, epsilon: float, seed: int, p_floor: float):
        layers = record.layer_records
        return cls(
            strategy=strategy,
            epsilon=epsilon,
            seed=seed,
            round=record.round,
            test_accuracy=record.test_accuracy,
            test_loss=record.test_loss,
            active_clients=record.active_clients,
            layers_selected=sum(r.selected for r in layers),
            floor_hits=sum(r.selected and r.privacy_estimate <= p_floor for r in layers),
            total_noise_l2=record.total_noise_l2,
            noise_l2_concat=record.noise_l2_concat,
            cumulative_epsilon=record.cumulative_epsilon,
        )

    def to_csv(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                out.append(";".join(str(x) for x in v))
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_csv(cls, row: Sequence[str]) -> MetricsRow:
        if len(row) != len(METRICS_COLUMNS):
            raise ValueError(f"expected {len(METRICS_COLUMNS)} columns, got {len(row)}")
        values = dict(zip(METRICS_COLUMNS, row))
        parsed = {}
        for f in fields(cls):
            raw = values[f.name]
            if f.name == "active_clients":
                parsed[f.name] = tuple(int(x) for x in raw.split(";")) if raw else ()
            elif f.type in ("float", float):
                parsed[f.name] = float(raw)
            elif f.type in ("int", int):
                parsed[f.name] = int(raw)
            else:
                parsed[f.name] = raw
        return cls(**parsed)


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRow))


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != METRICS_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        return [MetricsRow.from_csv(row) for row in reader]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[MetricsRow]
    summary: dict
    training: TrainingResult
    output_dir: Path


def prepare_data(cfg: ExperimentConfig) -> tuple[list[Dataset], Dataset]:
    """Load or generate the data, hold out a test split and partition the rest."""
    ds = cfg.dataset
    if ds.file is not None:
        data = load_dataset_file(ds.file.path, ds.file.format, ds.file.labels_path)
    else:
        s = ds.synthetic
        data = generate_synthetic(
            s.classes, s.samples_per_class, s.input_dim, s.separation, cfg.seed if s.seed is None else s.seed
        )
    root = RngStream(cfg.seed)
    train, test = stratified_split(data, ds.test_fraction, root.child(Purpose.SPLIT))
    clients = partition_data(train, cfg.partition_spec(), root.child(Purpose.PARTITION))
    return clients, test


def _summary(cfg: ExperimentConfig, result: TrainingResult, wall_time: float) -> dict:
    records = result.records
    last = records[-1]
    counts = [0] * result.num_layers
    seen = [0] * result.num_layers
    for rec in records:
        for r in rec.layer_records:
            seen[r.layer_id] += 1
            counts[r.layer_id] += r.selected
    return {
        "strategy": cfg.dp.strategy,
        "epsilon": cfg.dp.epsilon,
        "delta": cfg.delta,
        "seed": cfg.seed,
        "rounds": len(records),
        "final_accuracy": last.test_accuracy,
        "final_loss": last.test_loss,
        "total_noise_l2": sum(r.noise_l2_concat for r in records),
        "total_noise_l2_layer_sum": sum(r.total_noise_l2 for r in records),
        "final_cumulative_epsilon": last.cumulative_epsilon,
        "layer_selection_frequency": [c / s if s else 0.0 for c, s in zip(counts, seen)],
        "max_layer_noise_l2": result.max_layer_noise_l2,
        "wall_time_s": wall_time,
    }


def run_experiment(
    cfg: ExperimentConfig,
    *,
    output_dir=None,
    workers: int | None = None,
    execution_order: Callable[[list[int]], list[int]] | None = None,
) -> ExperimentResult:
    """Run one configuration, writing ``metrics.csv`` and ``summary.json``."""
    out = Path(output_dir if output_dir is not None else cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    clients, test = prepare_data(cfg)
    training_cfg = cfg.training_config(test.input_dim, test.num_classes)
    rows: list[MetricsRow] = []

    with open(out / METRICS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        fh.flush()

        def on_round(record: RoundRecord) -> None:
            row = MetricsRow.from_record(record, cfg.dp.strategy, cfg.dp.epsilon, cfg.seed, cfg.dp.p_floor)
            rows.append(row)
            writer.writerow(row.to_csv())
            fh.flush()

        result = run_training(
            training_cfg, clients, test, workers=workers, on_round=on_round, execution_order=execution_order
        )

    summary = _summary(cfg, result, time.perf_counter() - started)
    (out / SUMMARY_FILE).write_text(json.dumps(summary, indent=2) + "\n")
    return ExperimentResult(cfg, rows, summary, result, out)


@dataclass(frozen=True)
class ComparisonCell:
    strategy: str
    epsilon: float
    seeds: tuple[int, ...]
    accuracy_mean: float
    accuracy_min: float
    accuracy_max: float
    noise_l2_mean: float
    cumulative_epsilon_mean: float


def _run_dir(base: Path, strategy: str, epsilon: float, seed: int) -> Path:
    return base / f"{strategy}_eps{epsilon!r}_seed{seed}"


def compare_strategies(
    base_cfg: ExperimentConfig,
    strategies: Sequence[str],
    epsilons: Sequence[float],
    seeds: Sequence[int],
    *,
    workers: int | None = None,
) -> list[ComparisonCell]:
    """Cartesian sweep; one table cell per (strategy, epsilon) over all seeds.

    Every run writes into ``<output_path>/<strategy>_eps<eps>_seed<seed>/`` and
    the table goes to ``<output_path>/comparison.csv``.
    """
    for name, values in (("strategies", strategies), ("epsilons", epsilons), ("seeds", seeds)):
        if not values:
            raise ValidationError(name, "must not be empty")
    base = Path(base_cfg.output_path)
    cells = []
    for strategy in strategies:
        for eps in epsilons:
            summaries = []
            for seed in seeds:
                cfg = base_cfg.with_run(seed=seed, strategy=strategy, epsilon=eps)
                res = run_experiment(cfg, output_dir=_run_dir(base, cfg.dp.strategy, cfg.dp.epsilon, seed), workers=workers)
                summaries.append(res.summary)
            acc = [s["final_accuracy"] for s in summaries]
            cells.append(
                ComparisonCell(
                    strategy=summaries[0]["strategy"],
                    epsilon=float(eps),
                    seeds=tuple(int(s) for s in seeds),
                    accuracy_mean=statistics.fmean(acc),
                    accuracy_min=min(acc),
                    accuracy_max=max(acc),
                    noise_l2_mean=statistics.fmean(s["total_noise_l2"] for s in summaries),
                    cumulative_epsilon_mean=statistics.fmean(s["final_cumulative_epsilon"] for s in summaries),
                )
            )
    write_comparison(cells, base / "comparison.csv")
    return cells


def write_comparison(cells: Sequence[ComparisonCell], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [f.name for f in fields(ComparisonCell)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for cell in cells:
            row = []
            for n in names:
                v = getattr(cell, n)
                row.append(";".join(map(str, v)) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else v)
            writer.writerow(row)


def format_comparison(cells: Sequence[ComparisonCell]) -> str:
    header = f"{'strategy':<14}{'eps':>8}{'accuracy (mean ± half-range)':>32}{'noise L2':>14}{'cum. eps':>12}"
    lines = [header, "-" * len(header)]
    for c in cells:
        half = (c.accuracy_max - c.accuracy_min) / 2
        acc = f"{c.accuracy_mean:.4f} ± {half:.4f}"
        lines.append(f"{c.strategy:<14}{c.epsilon:>8g}{acc:>32}{c.noise_l2_mean:>14.6g}{c.cumulative_epsilon_mean:>12.6g}")
    return "\n".join(lines)
