from .config import (
    ExperimentConfig,
    config_from_dict,
    desk_default,
    dumps_config,
    load_config,
    loads_config,
)
from .datasets import (
    generate_synthetic,
    load_csv_labeled,
    load_dataset_file,
    load_idx_pair,
    stratified_split,
    write_csv_labeled,
)
from .experiment import (
    METRICS_COLUMNS,
    ComparisonCell,
    ExperimentResult,
    MetricsRow,
    compare_strategies,
    read_metrics,
    run_experiment,
)

__all__ = [
    "METRICS_COLUMNS",
    "ComparisonCell",
    "ExperimentConfig",
    "ExperimentResult",
    "MetricsRow",
    "compare_strategies",
    "config_from_dict",
    "desk_default",
    "dumps_config",
    "generate_synthetic",
    "load_config",
    "load_csv_labeled",
    "load_dataset_file",
    "load_idx_pair",
    "loads_config",
    "read_metrics",
    "run_experiment",
    "stratified_split",
    "write_csv_labeled",
]
