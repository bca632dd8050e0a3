"""Layer-wise adaptive Gaussian noise and the static/decaying baselines.

The adaptive path works per dense layer (weight and bias concatenated):

1. keep only layers whose L2 norm reaches the selection threshold R;
2. score each kept layer by P = clamp(KL(softmax(local) || softmax(global)),
   p_floor, B);
3. perturb it with N(0, sigma^2) noise, sigma = c * df / (eps * P), where
   df = 2 * eta * E * G_c and c is the smallest constant admitted by the
   piecewise (eps, delta, B) bound in :func:`compute_c`.

A low score means the local layer still looks like the global one, so it gets
more noise. The cap B bounds how small the noise can get.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidDelta,
    InvalidEpsilon,
    LadpError,
    NegativeStd,
    NonPositiveInput,
    ShapeMismatch,
)
from .model_engine import ModelParams
from .tensor_core import RngStream, kl_softmax, l2_norm, sample_gaussian

BRANCH_THRESHOLD = math.sqrt(2.0 / (math.pi * math.e**4))


class Strategy(str, enum.Enum):
    LADP = "ladp"
    FULL_DP = "full_dp"
    TIME_VARYING = "time_varying"
    NONE = "none"


@dataclass(frozen=True)
class DPConfig:
    epsilon: float
    delta: float
    kl_bound: float = 1.0
    selection_threshold: float = 0.0
    clip_bound: float = 20.0
    p_floor: float = 1e-6
    strategy: Strategy = Strategy.LADP
    decay_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not self.epsilon > 0:
            raise InvalidEpsilon(f"epsilon must be > 0, got {self.epsilon!r}")
        if not 0 < self.delta < 1:
            raise InvalidDelta(f"delta must lie in (0, 1), got {self.delta!r}")
        if not self.kl_bound > 0:
            raise NonPositiveInput(f"kl_bound must be > 0, got {self.kl_bound!r}")
        if not self.selection_threshold >= 0:
            raise NonPositiveInput("selection_threshold must be >= 0")
        if not self.clip_bound > 0:
            raise NonPositiveInput("clip_bound must be > 0")
        if not 0 < self.p_floor < self.kl_bound:
            raise NonPositiveInput("p_floor must satisfy 0 < p_floor < kl_bound")
        if not self.decay_rate >= 0:
            raise NonPositiveInput("decay_rate must be >= 0")


@dataclass(frozen=True)
class LayerNoiseRecord:
    layer_id: int
    selected: bool
    privacy_estimate: float = 0.0
    sigma: float = 0.0
    noise_l2: float = 0.0


def _check_budget(epsilon: float, delta: float) -> None:
    if not epsilon > 0:
        raise InvalidEpsilon(f"epsilon must be > 0, got {epsilon!r}")
    if not 0 < delta < 1:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta!r}")


def compute_c(epsilon: float, delta: float, kl_bound: float) -> float:
    """Smallest admissible noise constant c_i for (epsilon, delta, B).

    Two regimes, split at delta = sqrt(2 / (pi e^4)):

    * small delta: (sqrt(l) + sqrt(l + 8 eps)) * B / 4, with l = ln(2 / (pi delta^2))
    * large delta: (1 + sqrt(1 + 2 eps)) * B / 2
    """
    _check_budget(epsilon, delta)
    if not kl_bound > 0:
        raise NonPositiveInput(f"kl_bound must be > 0, got {kl_bound!r}")
    if delta <= BRANCH_THRESHOLD:
        log_term = math.log(2.0 / (math.pi * delta * delta))
        return (math.sqrt(log_term) + math.sqrt(log_term + 8.0 * epsilon)) * kl_bound / 4.0
    return (1.0 + math.sqrt(1.0 + 2.0 * epsilon)) * kl_bound / 2.0


def gaussian_constant(delta: float) -> float:
    """Classical Gaussian-mechanism constant sqrt(2 ln(1.25 / delta))."""
    if not 0 < delta < 1:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta!r}")
    return math.sqrt(2.0 * math.log(1.25 / delta))


def sensitivity(eta: float, local_epochs: int, clip_bound: float) -> float:
    if not (eta > 0 and local_epochs > 0 and clip_bound > 0):
        raise NonPositiveInput(
            f"eta, local_epochs and clip_bound must be > 0: {eta!r}, {local_epochs!r}, {clip_bound!r}"
        )
    return 2.0 * eta * local_epochs * clip_bound


def layer_norms(params: ModelParams) -> list[float]:
    return [l2_norm(params.layer_vector(j)) for j in range(len(params))]


def select_layers(params: ModelParams, threshold: float) -> set[int]:
    """Layer ids whose (weight, bias) L2 norm is at least ``threshold``."""
    if not threshold >= 0:
        raise NonPositiveInput(f"threshold must be >= 0, got {threshold!r}")
    return {j for j, norm in enumerate(layer_norms(params)) if norm >= threshold}


def estimate_privacy(local_layer, global_layer, kl_bound: float, p_floor: float) -> float:
    local_layer = np.asarray(local_layer, dtype=np.float64)
    global_layer = np.asarray(global_layer, dtype=np.float64)
    if local_layer.shape != global_layer.shape:
        raise ShapeMismatch(f"{local_layer.shape} vs {global_layer.shape}")
    kl = kl_softmax(local_layer.ravel(), global_layer.ravel())
    return min(max(kl, p_floor), kl_bound)


def noise_sigma(c: float, delta_f: float, epsilon: float, p: float) -> float:
    if not (c > 0 and delta_f > 0 and epsilon > 0 and p > 0):
        raise NonPositiveInput(f"all inputs must be > 0: c={c!r} df={delta_f!r} eps={epsilon!r} P={p!r}")
    return c * delta_f / (epsilon * p)


def inject_noise(layer, sigma: float, stream: RngStream) -> tuple[np.ndarray, float]:
    """Add i.i.d. N(0, sigma^2) noise; returns the noisy tensor and the noise norm."""
    layer = np.asarray(layer, dtype=np.float64)
    if not sigma >= 0:
        raise NegativeStd(f"sigma must be >= 0, got {sigma!r}")
    if sigma == 0:
        return layer, 0.0
    noise = sample_gaussian(layer.shape, 0.0, sigma, stream)
    return layer + noise, l2_norm(noise)


def full_dp_sigma(cfg: DPConfig, delta_f: float) -> float:
    return gaussian_constant(cfg.delta) * delta_f / cfg.epsilon


def protect_model(
    local: ModelParams,
    global_ref: ModelParams,
    cfg: DPConfig,
    eta: float,
    local_epochs: int,
    round_index: int,
    stream: RngStream,
) -> tuple[ModelParams, list[LayerNoiseRecord]]:
    """Perturb ``local`` according to ``cfg.strategy``.

    Layer ``j`` draws its noise from ``stream.child(j)``. Unselected layers are
    returned as the very same arrays. For the baselines the recorded privacy
    estimate is informational only; it does not influence sigma.
    """
    local.check_congruent(global_ref)
    if cfg.strategy is Strategy.NONE:
        return local, []

    delta_f = sensitivity(eta, local_epochs, cfg.clip_bound)
    if cfg.strategy is Strategy.LADP:
        selected = select_layers(local, cfg.selection_threshold)
        c = compute_c(cfg.epsilon, cfg.delta, cfg.kl_bound)
    elif cfg.strategy is Strategy.FULL_DP:
        selected = set(range(len(local)))
        base_sigma = full_dp_sigma(cfg, delta_f)
    elif cfg.strategy is Strategy.TIME_VARYING:
        selected = set(range(len(local)))
        base_sigma = full_dp_sigma(cfg, delta_f) * math.exp(-cfg.decay_rate * round_index)
    else:  # pragma: no cover - enum is exhaustive
        raise LadpError(f"unknown strategy {cfg.strategy!r}")

    protected = local
    records = []
    for j in range(len(local)):
        if j not in selected:
            records.append(LayerNoiseRecord(j, False))
            continue
        vec = local.layer_vector(j)
        p = estimate_privacy(vec, global_ref.layer_vector(j), cfg.kl_bound, cfg.p_floor)
        sigma = noise_sigma(c, delta_f, cfg.epsilon, p) if cfg.strategy is Strategy.LADP else base_sigma
        noisy, norm = inject_noise(vec, sigma, stream.child(j))
        protected = protected.with_layer_vector(j, noisy)
        records.append(LayerNoiseRecord(j, True, p, sigma, norm))
    return protected, records
