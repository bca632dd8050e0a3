"""JSON experiment configuration: parsing, defaults, validation, serialization.

Layout (every key optional; unknown keys are rejected)::

    {
      "seed": 0, "num_clients": 20, "activation_rate": 0.1, "rounds": 50,
      "local_epochs": 2, "learning_rate": 0.1, "batch_size": 50,
      "model": {"hidden_sizes": [64, 32], "activation": "relu"},
      "dp": {"epsilon": 0.2, "delta": null, "kl_bound": 1.0,
             "selection_threshold": 0.0, "clip_bound": 20.0,
             "p_floor": 1e-6, "strategy": "ladp", "decay_rate": null},
      "partition": {"mode": "general", "private_label": 0, "hbc_client": 0,
                    "dirichlet_alpha": 0.01, "labels_per_client": 4},
      "dataset": {"synthetic": {"classes": 3, "samples_per_class": 200,
                                "input_dim": 32, "separation": 5.0, "seed": null},
                  "test_fraction": 0.1},
      "output_path": "runs/default"
    }

``dp.delta = null`` resolves to ``1 / batch_size``; ``dp.decay_rate = null``
resolves to ``ln(10) / rounds``; ``synthetic.seed = null`` follows ``seed``.
A file source replaces ``synthetic`` with
``"file": {"path": ..., "format": "csv_labeled" | "idx_pair", "labels_path": ...}``;
relative paths are resolved against the config file's directory.

The field defaults above are generic. :func:`desk_default` is the tuned small
experiment that the comparison benchmarks run on.
"""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from ..dp_mechanism import DPConfig, Strategy
from ..errors import ParseError, ValidationError
from ..fl_runtime import PartitionMode, PartitionSpec, TrainingConfig
from ..model_engine import ModelSpec

DATASET_FORMATS = ("csv_labeled", "idx_pair")


@dataclass(frozen=True)
class ModelSection:
    hidden_sizes: tuple[int, ...] = (64, 32)
    activation: str = "relu"

    def spec(self, input_dim: int, num_classes: int) -> ModelSpec:
        return ModelSpec((input_dim, *self.hidden_sizes, num_classes), self.activation)


@dataclass(frozen=True)
class DPSection:
    epsilon: float = 0.2
    delta: float | None = None
    kl_bound: float = 1.0
    selection_threshold: float = 0.0
    clip_bound: float = 20.0
    p_floor: float = 1e-6
    strategy: str = "ladp"
    decay_rate: float | None = None


@dataclass(frozen=True)
class PartitionSection:
    mode: str = "general"
    private_label: int = 0
    hbc_client: int = 0
    dirichlet_alpha: float = 0.01
    labels_per_client: int = 4


@dataclass(frozen=True)
class SyntheticSource:
    classes: int = 3
    samples_per_class: int = 200
    input_dim: int = 32
    separation: float = 5.0
    seed: int | None = None


@dataclass(frozen=True)
class FileSource:
    path: str
    format: str = "csv_labeled"
    labels_path: str | None = None


@dataclass(frozen=True)
class DatasetSection:
    synthetic: SyntheticSource | None = field(default_factory=SyntheticSource)
    file: FileSource | None = None
    test_fraction: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    num_clients: int = 20
    activation_rate: float = 0.1
    rounds: int = 50
    local_epochs: int = 2
    learning_rate: float = 0.1
    batch_size: int = 50
    model: ModelSection = field(default_factory=ModelSection)
    dp: DPSection = field(default_factory=DPSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    output_path: str = "runs/default"

    @property
    def delta(self) -> float:
        return self.dp.delta if self.dp.delta is not None else 1.0 / self.batch_size

    @property
    def decay_rate(self) -> float:
        return self.dp.decay_rate if self.dp.decay_rate is not None else math.log(10.0) / self.rounds

    def dp_config(self) -> DPConfig:
        d = self.dp
        return DPConfig(
            epsilon=d.epsilon,
            delta=self.delta,
            kl_bound=d.kl_bound,
            selection_threshold=d.selection_threshold,
            clip_bound=d.clip_bound,
            p_floor=d.p_floor,
            strategy=Strategy(d.strategy),
            decay_rate=self.decay_rate,
        )

    def partition_spec(self) -> PartitionSpec:
        p = self.partition
        return PartitionSpec(
            mode=PartitionMode(p.mode),
            num_clients=self.num_clients,
            private_label=p.private_label,
            hbc_client=p.hbc_client,
            dirichlet_alpha=p.dirichlet_alpha,
            labels_per_client=p.labels_per_client,
        )

    def training_config(self, input_dim: int, num_classes: int) -> TrainingConfig:
        return TrainingConfig(
            seed=self.seed,
            model=self.model.spec(input_dim, num_classes),
            dp=self.dp_config(),
            rounds=self.rounds,
            activation_rate=self.activation_rate,
            local_epochs=self.local_epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
        )

    def with_run(self, *, seed: int | None = None, strategy: str | None = None, epsilon: float | None = None):
        """Copy with the per-run knobs of a sweep overridden."""
        dp = self.dp
        if strategy is not None:
            dp = replace(dp, strategy=str(Strategy(strategy).value))
        if epsilon is not None:
            dp = replace(dp, epsilon=float(epsilon))
        cfg = replace(self, dp=dp, seed=self.seed if seed is None else int(seed))
        validate(cfg)
        return cfg


def desk_default(**overrides) -> ExperimentConfig:
    """The small benchmark experiment used for strategy comparisons.

    Every client trains each round (averaging 20 uploads shrinks the per-round
    noise), clipping is tight so the sensitivity 2 eta E G_c stays small next
    to the weights, and two-sample batches give many clipped steps per epoch.
    R = 3 sits between the hidden-layer norms (about 6.5) and the output-layer
    norm (about 2.3), so only the hidden layers are perturbed under ladp. B is
    set below the typical KL drift of one round so P usually sits at the cap.
    """
    cfg = ExperimentConfig(
        activation_rate=1.0,
        batch_size=2,
        dp=DPSection(
            epsilon=0.2,
            delta=0.02,
            kl_bound=1e-10,
            selection_threshold=3.0,
            clip_bound=0.05,
            p_floor=1e-14,
        ),
        dataset=DatasetSection(synthetic=SyntheticSource(separation=6.0)),
        output_path="runs/desk_default",
    )
    cfg = replace(cfg, **overrides)
    validate(cfg)
    return cfg


# parsing ----------------------------------------------------------------------


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _section(raw: Any, path: str, allowed: set[str]) -> dict:
    if not isinstance(raw, dict):
        raise ValidationError(path or "<root>", "must be a JSON object")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ValidationError(where, "unknown key")
    return raw


def _typed(raw: dict, key: str, path: str, kind: str, default):
    if key not in raw:
        return default
    v = raw[key]
    where = f"{path}.{key}" if path else key
    if v is None and default is None:
        return None
    if kind == "int":
        if not _is_int(v):
            raise ValidationError(where, f"expected an integer, got {v!r}")
        return v
    if kind == "num":
        if not _is_num(v):
            raise ValidationError(where, f"expected a finite number, got {v!r}")
        return float(v)
    if kind == "str":
        if not isinstance(v, str):
            raise ValidationError(where, f"expected a string, got {v!r}")
        return v
    if kind == "int_list":
        if not isinstance(v, list) or not all(_is_int(x) for x in v):
            raise ValidationError(where, f"expected a list of integers, got {v!r}")
        return tuple(v)
    raise AssertionError(kind)


def _from_fields(cls, raw: Any, path: str, kinds: dict[str, str]):
    raw = _section(raw, path, set(kinds))
    defaults = cls.__dataclass_fields__
    values = {}
    for key, kind in kinds.items():
        f = defaults[key]
        default = f.default if f.default is not MISSING else None
        values[key] = _typed(raw, key, path, kind, default)
    return values


def _parse_dataset(raw: Any, base_dir: Path | None) -> DatasetSection:
    raw = _section(raw, "dataset", {"synthetic", "file", "test_fraction"})
    if "synthetic" in raw and "file" in raw:
        raise ValidationError("dataset", "give either 'synthetic' or 'file', not both")
    test_fraction = _typed(raw, "test_fraction", "dataset", "num", 0.1)
    if "file" in raw:
        f = _section(raw["file"], "dataset.file", {"path", "format", "labels_path"})
        if "path" not in f:
            raise ValidationError("dataset.file.path", "required")
        path = _typed(f, "path", "dataset.file", "str", "")
        labels = _typed(f, "labels_path", "dataset.file", "str", None)
        if base_dir is not None:
            path = str((base_dir / path).resolve())
            labels = str((base_dir / labels).resolve()) if labels is not None else None
        fmt = _typed(f, "format", "dataset.file", "str", "csv_labeled")
        return DatasetSection(synthetic=None, file=FileSource(path, fmt, labels), test_fraction=test_fraction)
    syn = SyntheticSource(
        **_from_fields(
            SyntheticSource,
            raw.get("synthetic", {}),
            "dataset.synthetic",
            {"classes": "int", "samples_per_class": "int", "input_dim": "int", "separation": "num", "seed": "int"},
        )
    )
    return DatasetSection(synthetic=syn, file=None, test_fraction=test_fraction)


_TOP_KINDS = {
    "seed": "int",
    "num_clients": "int",
    "activation_rate": "num",
    "rounds": "int",
    "local_epochs": "int",
    "learning_rate": "num",
    "batch_size": "int",
    "output_path": "str",
}
_DP_KINDS = {
    "epsilon": "num",
    "delta": "num",
    "kl_bound": "num",
    "selection_threshold": "num",
    "clip_bound": "num",
    "p_floor": "num",
    "strategy": "str",
    "decay_rate": "num",
}
_PARTITION_KINDS = {
    "mode": "str",
    "private_label": "int",
    "hbc_client": "int",
    "dirichlet_alpha": "num",
    "labels_per_client": "int",
}


def config_from_dict(raw: Any, base_dir: Path | None = None) -> ExperimentConfig:
    raw = _section(raw, "", set(_TOP_KINDS) | {"model", "dp", "partition", "dataset"})
    top = {k: _typed(raw, k, "", kind, getattr(ExperimentConfig, k)) for k, kind in _TOP_KINDS.items()}
    model = ModelSection(
        **_from_fields(ModelSection, raw.get("model", {}), "model", {"hidden_sizes": "int_list", "activation": "str"})
    )
    dp = DPSection(**_from_fields(DPSection, raw.get("dp", {}), "dp", _DP_KINDS))
    partition = PartitionSection(**_from_fields(PartitionSection, raw.get("partition", {}), "partition", _PARTITION_KINDS))
    dataset = _parse_dataset(raw.get("dataset", {}), base_dir)
    cfg = ExperimentConfig(model=model, dp=dp, partition=partition, dataset=dataset, **top)
    validate(cfg)
    return cfg


def loads_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw, base_dir)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    return loads_config(text, path.parent)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["model"]["hidden_sizes"] = list(cfg.model.hidden_sizes)
    if cfg.dataset.file is None:
        del out["dataset"]["file"]
    else:
        del out["dataset"]["synthetic"]
    return out


def dumps_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


# validation -------------------------------------------------------------------


def _require(ok: bool, where: str, message: str) -> None:
    if not ok:
        raise ValidationError(where, message)


def validate(cfg: ExperimentConfig) -> None:
    """Range checks with the offending field path; raises ValidationError."""
    _require(cfg.seed >= 0, "seed", "must be a non-negative integer")
    _require(cfg.num_clients >= 2, "num_clients", "must be >= 2")
    _require(0 < cfg.activation_rate <= 1, "activation_rate", "must lie in (0, 1]")
    _require(cfg.rounds >= 1, "rounds", "must be >= 1")
    _require(cfg.local_epochs >= 1, "local_epochs", "must be >= 1")
    _require(cfg.learning_rate > 0, "learning_rate", "must be > 0")
    _require(cfg.batch_size >= 1, "batch_size", "must be >= 1")
    _require(bool(cfg.output_path), "output_path", "must be non-empty")

    _require(all(h >= 1 for h in cfg.model.hidden_sizes), "model.hidden_sizes", "sizes must be >= 1")
    _require(cfg.model.activation == "relu", "model.activation", "only 'relu' is supported")

    d = cfg.dp
    _require(d.epsilon > 0, "dp.epsilon", "must be > 0")
    _require(0 < cfg.delta < 1, "dp.delta", f"must lie in (0, 1), got {cfg.delta!r}")
    _require(d.kl_bound > 0, "dp.kl_bound", "must be > 0")
    _require(d.selection_threshold >= 0, "dp.selection_threshold", "must be >= 0")
    _require(d.clip_bound > 0, "dp.clip_bound", "must be > 0")
    _require(0 < d.p_floor < d.kl_bound, "dp.p_floor", "must satisfy 0 < p_floor < kl_bound")
    _require(d.strategy in {s.value for s in Strategy}, "dp.strategy", f"unknown strategy {d.strategy!r}")
    _require(d.decay_rate is None or d.decay_rate >= 0, "dp.decay_rate", "must be >= 0")

    p = cfg.partition
    _require(p.mode in {m.value for m in PartitionMode}, "partition.mode", f"unknown mode {p.mode!r}")
    _require(0 <= p.hbc_client < cfg.num_clients, "partition.hbc_client", "must index an existing client")
    _require(p.private_label >= 0, "partition.private_label", "must be >= 0")
    _require(p.dirichlet_alpha > 0, "partition.dirichlet_alpha", "must be > 0")
    _require(p.labels_per_client >= 2, "partition.labels_per_client", "must be >= 2")

    ds = cfg.dataset
    _require(0 < ds.test_fraction < 1, "dataset.test_fraction", "must lie in (0, 1)")
    if ds.file is not None:
        _require(ds.file.format in DATASET_FORMATS, "dataset.file.format", f"must be one of {DATASET_FORMATS}")
        _require(Path(ds.file.path).is_file(), "dataset.file.path", f"no such file {ds.file.path!r}")
        if ds.file.format == "idx_pair":
            _require(ds.file.labels_path is not None, "dataset.file.labels_path", "required for idx_pair")
        if ds.file.labels_path is not None:
            _require(
                Path(ds.file.labels_path).is_file(),
                "dataset.file.labels_path",
                f"no such file {ds.file.labels_path!r}",
            )
    else:
        s = ds.synthetic
        _require(s.classes >= 2, "dataset.synthetic.classes", "must be >= 2")
        _require(s.samples_per_class >= 1, "dataset.synthetic.samples_per_class", "must be >= 1")
        _require(s.input_dim >= 1, "dataset.synthetic.input_dim", "must be >= 1")
        _require(s.separation >= 0, "dataset.synthetic.separation", "must be >= 0")
        _require(s.seed is None or s.seed >= 0, "dataset.synthetic.seed", "must be >= 0")
        _require(p.private_label < s.classes, "partition.private_label", "must be < dataset.synthetic.classes")
