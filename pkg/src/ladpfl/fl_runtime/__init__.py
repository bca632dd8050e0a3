from .partition import PartitionMode, PartitionSpec, partition_data, partition_indices
from .training import (
    ClientState,
    LocalHyper,
    RoundRecord,
    ServerState,
    TrainingConfig,
    TrainingResult,
    aggregate,
    client_round,
    run_training,
    sample_clients,
)

__all__ = [
    "ClientState",
    "LocalHyper",
    "PartitionMode",
    "PartitionSpec",
    "RoundRecord",
    "ServerState",
    "TrainingConfig",
    "TrainingResult",
    "aggregate",
    "client_round",
    "partition_data",
    "partition_indices",
    "run_training",
    "sample_clients",
]
