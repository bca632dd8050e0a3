"""Sequential (naive-composition) budget accounting and the convergence-bound calculator."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import EtaOutOfWindow, InvalidBudget, InvalidConstants, InvalidSizes


def sigma_from_budget(epsilon: float, delta: float) -> float:
    """Noise multiplier sqrt(2 ln(1.25/delta)) / epsilon of the Gaussian mechanism."""
    if not epsilon > 0 or not 0 < delta < 1:
        raise InvalidBudget(f"need epsilon > 0 and 0 < delta < 1, got {epsilon!r}, {delta!r}")
    return math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def sampling_fraction(batch_size: int, dataset_size: int) -> float:
    if not 1 <= batch_size <= dataset_size:
        raise InvalidSizes(f"need 1 <= batch ({batch_size}) <= dataset ({dataset_size})")
    return batch_size / dataset_size


@dataclass(frozen=True)
class AccountantState:
    """Budget spent after ``rounds_elapsed`` rounds of (q*eps, q*delta) releases.

    The cumulative fields are always recomputed as ``q * rounds * per_round``
    rather than summed incrementally, so they never drift.
    """

    per_round_epsilon: float
    per_round_delta: float
    sampling_q: float
    rounds_elapsed: int = 0
    cumulative_epsilon: float = 0.0
    cumulative_delta: float = 0.0

    def __post_init__(self):
        if not 0 < self.sampling_q <= 1:
            raise InvalidSizes(f"sampling_q must lie in (0, 1], got {self.sampling_q!r}")
        if self.per_round_epsilon < 0 or self.per_round_delta < 0:
            raise InvalidBudget("per-round budgets must be non-negative")


def accumulate(state: AccountantState) -> AccountantState:
    rounds = state.rounds_elapsed + 1
    return replace(
        state,
        rounds_elapsed=rounds,
        cumulative_epsilon=state.sampling_q * rounds * state.per_round_epsilon,
        cumulative_delta=state.sampling_q * rounds * state.per_round_delta,
    )


def noise_bound(num_layers: int, per_layer_bound: float) -> float:
    """Upper bound J * N_c on the norm of the summed per-layer noise."""
    return num_layers * per_layer_bound


@dataclass(frozen=True)
class ConvergenceConstants:
    L: float
    mu: float
    G_c: float
    N_c: float
    J: int
    eta: float

    def __post_init__(self):
        if not (self.L > 0 and self.G_c > 0 and self.J > 0):
            raise InvalidConstants("L, G_c and J must be positive")
        if not self.N_c >= 0:
            raise InvalidConstants("N_c must be non-negative")
        if not self.mu > self.L:
            raise InvalidConstants(f"need mu > L, got mu={self.mu!r}, L={self.L!r}")


@dataclass(frozen=True)
class EtaWindow:
    lower: float
    upper: float

    def __contains__(self, eta: float) -> bool:
        return self.lower < eta < self.upper


def eta_window(consts: ConvergenceConstants) -> EtaWindow | None:
    """Open interval of admissible learning rates, or None when it is empty."""
    upper = 2.0 * consts.J * consts.N_c / consts.G_c
    lower = upper - (consts.mu - consts.L) / (consts.L * consts.G_c * consts.mu)
    lower = max(lower, 0.0)
    if not upper > lower:
        return None
    return EtaWindow(lower, upper)


@dataclass(frozen=True)
class ConvergenceBound:
    bound: float
    ratio: float
    psi: float
    phi: float

    @property
    def ratio_valid(self) -> bool:
        """Whether the contraction ratio lies in (0, 1) as the bound presumes."""
        return 0.0 < self.ratio < 1.0


def convergence_bound(consts: ConvergenceConstants, t: int, initial_gap: float) -> ConvergenceBound:
    """Expected optimality gap after ``t`` rounds.

    bound = ratio**t * gap + (psi + 2 phi) / 2 * sum_{n<t} ratio**n with
    psi = 2 J N_c - eta G_c, phi = L eta^2 G_c^2 / 2 + 2 L J^2 N_c^2 and
    ratio = (L + psi mu L) / mu. A ratio outside (0, 1) is reported through
    ``ratio_valid`` instead of raising. For eta strictly inside the window,
    0 < psi < (mu - L) / (L mu), which already pins the ratio to (L/mu, 1);
    the flag only guards against rounding at the window edges.
    """
    window = eta_window(consts)
    if window is None or consts.eta not in window:
        raise EtaOutOfWindow(f"eta={consts.eta!r} outside admissible window {window}")
    if t < 0 or initial_gap < 0:
        raise InvalidConstants("t and initial_gap must be non-negative")
    L, mu, J, N_c, G_c, eta = consts.L, consts.mu, consts.J, consts.N_c, consts.G_c, consts.eta
    psi = 2.0 * J * N_c - eta * G_c
    phi = L * eta**2 * G_c**2 / 2.0 + 2.0 * L * J**2 * N_c**2
    ratio = (L + psi * mu * L) / mu
    if ratio == 1.0:
        geometric = float(t)
    else:
        geometric = (1.0 - ratio**t) / (1.0 - ratio)
    bound = ratio**t * initial_gap + (psi + 2.0 * phi) / 2.0 * geometric
    return ConvergenceBound(bound, ratio, psi, phi)
