"""Label-skew partitioners with private-label isolation.

Every mode keeps one designated honest-but-curious (HBC) client away from the
private label and assigns each input sample to exactly one client.

``general``
    Each label's samples are shuffled and dealt round-robin. Non-private
    labels go to every client; the private label only to non-HBC clients.
``distribution_1`` (label scarcity)
    Non-HBC clients hold ``labels_per_client`` labels including the private
    one; the HBC client holds ``labels_per_client - 1`` labels without it.
    Label sets are drawn so each non-private label has as even a holder count
    as possible. A label's samples are split over its holders with per-holder
    shares proportional to ``1 / |label set|``, which makes client totals equal
    when classes are balanced and holder counts divide evenly; leftovers are
    still assigned so nothing is dropped.
``distribution_2`` (Dirichlet quantity skew)
    For each label, client proportions ~ Dirichlet(alpha) over the eligible
    clients, and counts are a multinomial draw with those proportions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import MissingClass, TooFewClients, ValidationError
from ..model_engine import Dataset
from ..tensor_core import RngStream


class PartitionMode(str, enum.Enum):
    GENERAL = "general"
    DISTRIBUTION_1 = "distribution_1"
    DISTRIBUTION_2 = "distribution_2"


@dataclass(frozen=True)
class PartitionSpec:
    mode: PartitionMode = PartitionMode.GENERAL
    num_clients: int = 20
    private_label: int = 0
    hbc_client: int = 0
    dirichlet_alpha: float = 0.01
    labels_per_client: int = 4

    def __post_init__(self):
        object.__setattr__(self, "mode", PartitionMode(self.mode))
        if self.num_clients < 2:
            raise TooFewClients(f"need at least 2 clients, got {self.num_clients}")
        if not 0 <= self.hbc_client < self.num_clients:
            raise ValidationError("partition.hbc_client", "must index an existing client")
        if self.private_label < 0:
            raise ValidationError("partition.private_label", "must be a class index")
        if not self.dirichlet_alpha > 0:
            raise ValidationError("partition.dirichlet_alpha", "must be > 0")
        if self.labels_per_client < 2:
            raise ValidationError("partition.labels_per_client", "must be >= 2")


def _deal_round_robin(indices: np.ndarray, clients: list[int], buckets: list[list[int]]) -> None:
    for pos, idx in enumerate(indices):
        buckets[clients[pos % len(clients)]].append(int(idx))


def _split_by_weights(indices: np.ndarray, holders: list[int], weights: np.ndarray, buckets) -> None:
    """Largest-remainder split of ``indices`` over ``holders``."""
    n = len(indices)
    exact = weights / weights.sum() * n
    counts = np.floor(exact).astype(np.int64)
    remainder = n - int(counts.sum())
    # ties broken by holder order, which is already seeded
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:remainder]] += 1
    start = 0
    for client, count in zip(holders, counts):
        buckets[client].extend(int(i) for i in indices[start : start + count])
        start += count


def _label_sets(spec: PartitionSpec, num_classes: int, gen: np.random.Generator) -> list[list[int]]:
    others = [c for c in range(num_classes) if c != spec.private_label]
    k_regular = min(spec.labels_per_client, num_classes) - 1  # non-private labels of a regular client
    k_hbc = min(spec.labels_per_client - 1, len(others))
    usage = np.zeros(num_classes, dtype=np.int64)
    sets = []
    for client in range(spec.num_clients):
        want = k_hbc if client == spec.hbc_client else k_regular
        chosen = []
        for _ in range(want):
            candidates = [c for c in others if c not in chosen]
            least = min(usage[c] for c in candidates)
            pool = [c for c in candidates if usage[c] == least]
            pick = int(pool[gen.integers(len(pool))])
            chosen.append(pick)
            usage[pick] += 1
        if client != spec.hbc_client:
            chosen.append(spec.private_label)
        sets.append(sorted(chosen))
    uncovered = [c for c in others if usage[c] == 0]
    if uncovered:
        raise TooFewClients(
            f"{spec.num_clients} clients cannot cover labels {uncovered} "
            f"with {spec.labels_per_client} labels each"
        )
    return sets


def partition_indices(labels: np.ndarray, num_classes: int, spec: PartitionSpec, stream: RngStream) -> list[np.ndarray]:
    """Per-client index arrays into ``labels`` (each sorted ascending)."""
    labels = np.asarray(labels, dtype=np.int64)
    if spec.private_label >= num_classes:
        raise ValidationError("partition.private_label", f"must be < class count {num_classes}")
    counts = np.bincount(labels, minlength=num_classes)
    missing = [c for c in range(num_classes) if counts[c] == 0]
    if missing:
        raise MissingClass(f"no samples for classes {missing}")

    gen = stream.generator()
    n = spec.num_clients
    everyone = list(range(n))
    honest = [c for c in everyone if c != spec.hbc_client]
    buckets: list[list[int]] = [[] for _ in range(n)]
    per_label = [gen.permutation(np.flatnonzero(labels == c)) for c in range(num_classes)]

    if spec.mode is PartitionMode.GENERAL:
        for c, idx in enumerate(per_label):
            _deal_round_robin(idx, honest if c == spec.private_label else everyone, buckets)
    elif spec.mode is PartitionMode.DISTRIBUTION_1:
        sets = _label_sets(spec, num_classes, gen)
        for c, idx in enumerate(per_label):
            holders = [i for i in everyone if c in sets[i]]
            weights = np.array([1.0 / len(sets[i]) for i in holders])
            _split_by_weights(idx, holders, weights, buckets)
    else:
        alpha = spec.dirichlet_alpha
        for c, idx in enumerate(per_label):
            eligible = honest if c == spec.private_label else everyone
            proportions = gen.dirichlet(np.full(len(eligible), alpha))
            # guard against proportions summing to 1 - tiny for multinomial
            proportions = proportions / proportions.sum()
            shares = gen.multinomial(len(idx), proportions)
            start = 0
            for client, count in zip(eligible, shares):
                buckets[client].extend(int(i) for i in idx[start : start + count])
                start += count

    return [np.array(sorted(b), dtype=np.int64) for b in buckets]


def partition_data(dataset: Dataset, spec: PartitionSpec, stream: RngStream) -> list[Dataset]:
    parts = partition_indices(dataset.labels, dataset.num_classes, spec, stream)
    return [dataset.subset(idx) for idx in parts]
