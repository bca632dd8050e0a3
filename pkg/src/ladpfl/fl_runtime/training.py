"""Synchronous federated training: sampling, local rounds, FedAvg, evaluation.

Random streams are derived from the run seed by path, never shared:

    (INIT,)                     initial global model
    (SAMPLE_CLIENTS, t)         active set of round t
    (SHUFFLE, client, t, e)     batch order of a client's epoch e in round t
    (NOISE, client, t, layer)   noise for one layer of one client upload

so a round's outcome does not depend on worker count or execution order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..dp_mechanism import DPConfig, LayerNoiseRecord, Strategy, protect_model
from ..errors import EmptyClientDataset, EmptyCollection, InvalidRate, NonPositiveInput
from ..model_engine import Dataset, Layer, ModelParams, ModelSpec, evaluate, init_params, local_train
from ..privacy_accountant import AccountantState, accumulate, sampling_fraction
from ..tensor_core import Purpose, RngStream


@dataclass(frozen=True)
class LocalHyper:
    eta: float
    epochs: int
    batch_size: int

    def __post_init__(self):
        if self.epochs < 1:
            raise NonPositiveInput(f"local epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise NonPositiveInput(f"batch size must be >= 1, got {self.batch_size}")
        if not self.eta >= 0:
            raise NonPositiveInput(f"learning rate must be >= 0, got {self.eta}")


@dataclass(frozen=True)
class TrainingConfig:
    seed: int
    model: ModelSpec
    dp: DPConfig
    rounds: int = 50
    activation_rate: float = 0.1
    local_epochs: int = 2
    learning_rate: float = 0.1
    batch_size: int = 50

    @property
    def hyper(self) -> LocalHyper:
        return LocalHyper(self.learning_rate, self.local_epochs, self.batch_size)


@dataclass
class ClientState:
    client_id: int
    dataset: Dataset
    dp: DPConfig
    rng: RngStream


@dataclass
class ServerState:
    global_model: ModelParams
    round: int = 0
    collection: list[tuple[int, ModelParams, int]] = field(default_factory=list)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    test_accuracy: float
    test_loss: float
    active_clients: tuple[int, ...]
    total_noise_l2: float
    noise_l2_concat: float
    cumulative_epsilon: float
    client_records: tuple[tuple[int, tuple[LayerNoiseRecord, ...]], ...]

    @property
    def layer_records(self) -> list[LayerNoiseRecord]:
        return [r for _, recs in self.client_records for r in recs]


@dataclass
class TrainingResult:
    records: list[RoundRecord]
    global_model: ModelParams
    num_layers: int

    @property
    def max_layer_noise_l2(self) -> float:
        """Largest single-layer noise norm of the run; an empirical N_c."""
        return max((r.noise_l2 for rec in self.records for r in rec.layer_records), default=0.0)


def sample_clients(num_clients: int, activation_rate: float, stream: RngStream) -> list[int]:
    """``round(N * rate)`` distinct ids (at least one), ascending."""
    if not 0 < activation_rate <= 1:
        raise InvalidRate(f"activation rate must lie in (0, 1], got {activation_rate!r}")
    if num_clients < 1:
        raise InvalidRate("no clients to sample from")
    k = max(1, int(round(num_clients * activation_rate)))
    if k >= num_clients:
        return list(range(num_clients))
    chosen = stream.generator().choice(num_clients, size=k, replace=False)
    return sorted(int(c) for c in chosen)


def client_round(
    state: ClientState, global_model: ModelParams, round_index: int, hyper: LocalHyper
) -> tuple[ModelParams, list[LayerNoiseRecord]]:
    """One client's work for a round: reset, clipped local SGD, protection."""
    if len(state.dataset) == 0:
        raise EmptyClientDataset(f"client {state.client_id} has no data")
    cid = state.client_id
    local = local_train(
        global_model,
        state.dataset,
        hyper.eta,
        hyper.epochs,
        hyper.batch_size,
        state.dp.clip_bound,
        state.rng.child(Purpose.SHUFFLE, cid, round_index),
    )
    return protect_model(
        local,
        global_model,
        state.dp,
        hyper.eta,
        hyper.epochs,
        round_index,
        state.rng.child(Purpose.NOISE, cid, round_index),
    )


def aggregate(collection: Sequence[tuple[int, ModelParams, int]]) -> ModelParams:
    """Dataset-size weighted mean of the uploaded models.

    Computed as ``first + sum_i w_i (model_i - first)``: the same weighted mean,
    but identical uploads reproduce the input bit for bit.
    """
    if not collection:
        raise EmptyCollection("nothing to aggregate")
    sizes = np.array([size for _, _, size in collection], dtype=np.float64)
    total = sizes.sum()
    if not total > 0:
        raise EmptyCollection("aggregated clients hold no data")
    weights = sizes / total
    ref = collection[0][1]
    for _, model, _ in collection[1:]:
        ref.check_congruent(model)
    if all(ref.bit_equal(model) for _, model, _ in collection[1:]):
        # ref + 0 would turn -0.0 into +0.0
        return ref
    layers = []
    for j, ref_layer in enumerate(ref):
        dw = np.zeros_like(ref_layer.weight)
        db = np.zeros_like(ref_layer.bias)
        for w, (_, model, _) in zip(weights, collection):
            dw += w * (model[j].weight - ref_layer.weight)
            db += w * (model[j].bias - ref_layer.bias)
        layers.append(Layer(ref_layer.weight + dw, ref_layer.bias + db))
    return ModelParams(tuple(layers))


def default_workers() -> int:
    env = os.environ.get("LADP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _accountant(cfg: TrainingConfig, client_datasets: Sequence[Dataset]) -> AccountantState:
    mean_size = max(1, sum(len(d) for d in client_datasets) // len(client_datasets))
    q = sampling_fraction(min(cfg.batch_size, mean_size), mean_size)
    if cfg.dp.strategy is Strategy.NONE:
        return AccountantState(0.0, 0.0, q)
    return AccountantState(cfg.dp.epsilon, cfg.dp.delta, q)


def run_training(
    cfg: TrainingConfig,
    client_datasets: Sequence[Dataset],
    test_set: Dataset,
    *,
    workers: int | None = None,
    on_round: Callable[[RoundRecord], None] | None = None,
    execution_order: Callable[[list[int]], list[int]] | None = None,
) -> TrainingResult:
    """Run ``cfg.rounds`` synchronous rounds and evaluate after each one.

    Clients without data never enter the sampling pool. ``execution_order``
    may permute the order in which active clients are trained (testing hook);
    results are always collected and aggregated in ascending client order.
    """
    root = RngStream(cfg.seed)
    server = ServerState(init_params(cfg.model, root.child(Purpose.INIT)))
    clients = [ClientState(i, d, cfg.dp, root) for i, d in enumerate(client_datasets)]
    pool = [c.client_id for c in clients if len(c.dataset) > 0]
    if not pool:
        raise EmptyClientDataset("every client dataset is empty")
    accountant = _accountant(cfg, client_datasets)
    hyper = cfg.hyper
    workers = workers or default_workers()
    records: list[RoundRecord] = []

    with ThreadPoolExecutor(max_workers=workers) as executor:
        for t in range(cfg.rounds):
            server.round = t
            picks = sample_clients(len(pool), cfg.activation_rate, root.child(Purpose.SAMPLE_CLIENTS, t))
            active = [pool[i] for i in picks]
            run_order = execution_order(list(active)) if execution_order else active
            global_model = server.global_model
            outputs = dict(
                zip(
                    run_order,
                    executor.map(lambda cid: client_round(clients[cid], global_model, t, hyper), run_order),
                )
            )
            server.collection = [(cid, outputs[cid][0], len(clients[cid].dataset)) for cid in active]
            server.global_model = aggregate(server.collection)
            server.collection = []

            accountant = accumulate(accountant)
            accuracy, loss = evaluate(server.global_model, test_set)
            client_records = tuple((cid, tuple(outputs[cid][1])) for cid in active)
            norms = [r.noise_l2 for _, recs in client_records for r in recs]
            record = RoundRecord(
                round=t,
                test_accuracy=accuracy,
                test_loss=loss,
                active_clients=tuple(active),
                total_noise_l2=float(sum(norms)),
                noise_l2_concat=math.sqrt(sum(n * n for n in norms)),
                cumulative_epsilon=accountant.cumulative_epsilon,
                client_records=client_records,
            )
            records.append(record)
            if on_round is not None:
                on_round(record)

    return TrainingResult(records, server.global_model, cfg.model.num_layers)
