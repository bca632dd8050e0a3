"""Dense float64 tensor helpers and path-keyed random streams.

Tensors are plain ``numpy.ndarray`` objects in float64; this module only adds
the handful of operations the rest of the package relies on, with the input
validation those callers expect.

Randomness goes through :class:`RngStream`. A stream is identified by a root
seed plus a path of non-negative integers (for example ``(NOISE, client,
round, layer)``). The path is fed to ``numpy.random.SeedSequence`` as its
spawn key, which hashes it into the key of a Philox counter-based generator.
Two streams with the same ``(seed, path)`` therefore replay the same values no
matter which thread asks first or in which order, and streams that differ in
any path element are independent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import MismatchedLength, NegativeStd, NotADistribution

_SEED_MASK = (1 << 64) - 1
_TINY = np.finfo(np.float64).tiny


class Purpose(enum.IntEnum):
    """First path element of every stream used by the simulator."""

    INIT = 0
    SAMPLE_CLIENTS = 1
    SHUFFLE = 2
    NOISE = 3
    PARTITION = 4
    SPLIT = 5
    DATA = 6


def as_tensor(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)


def l2_norm(t) -> float:
    t = as_tensor(t)
    return float(math.sqrt(float(np.dot(t.ravel(), t.ravel()))))


def flatten(t) -> np.ndarray:
    """Row-major 1-D view of ``t`` (a copy only when ``t`` is not contiguous)."""
    return as_tensor(t).reshape(-1)


def softmax(t) -> np.ndarray:
    t = as_tensor(t)
    if t.ndim != 1:
        raise MismatchedLength(f"softmax expects a 1-D tensor, got shape {t.shape}")
    e = np.exp(t - np.max(t))
    out = e / np.sum(e)
    # exp underflows to 0 for gaps beyond ~745; keep every entry strictly positive
    return np.maximum(out, _TINY)


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats for strictly positive distributions of equal length."""
    p = as_tensor(p).ravel()
    q = as_tensor(q).ravel()
    if p.shape != q.shape:
        raise MismatchedLength(f"length {p.size} vs {q.size}")
    for name, d in (("p", p), ("q", q)):
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise NotADistribution(f"{name} must be strictly positive and finite")
        if abs(float(np.sum(d)) - 1.0) > 1e-9:
            raise NotADistribution(f"{name} sums to {float(np.sum(d))!r}, not 1")
    value = float(np.sum(p * (np.log(p) - np.log(q))))
    return max(value, 0.0)


def log_softmax(t) -> np.ndarray:
    t = as_tensor(t)
    if t.ndim != 1:
        raise MismatchedLength(f"log_softmax expects a 1-D tensor, got shape {t.shape}")
    shifted = t - np.max(t)
    return shifted - np.log(np.sum(np.exp(shifted)))


def kl_softmax(x, y) -> float:
    """KL(softmax(x) || softmax(y)) evaluated from the logits.

    With d = x - y this is sum_i p_i d_i - log(sum_i q_i exp(d_i)); the second
    term goes through log1p/expm1 so nearly identical inputs keep their
    relative precision instead of cancelling in log(p) - log(q).
    """
    x = as_tensor(x).ravel()
    y = as_tensor(y).ravel()
    if x.shape != y.shape:
        raise MismatchedLength(f"length {x.size} vs {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NotADistribution("logits must be finite")
    p = np.exp(log_softmax(x))
    q = np.exp(log_softmax(y))
    d = x - y
    d = d - np.max(d)  # KL is shift invariant; keeps expm1 from overflowing
    value = float(np.dot(p, d) - np.log1p(np.dot(q, np.expm1(d))))
    return max(value, 0.0)


@dataclass(frozen=True)
class RngStream:
    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _SEED_MASK)
        path = tuple(int(p) for p in self.path)
        if any(p < 0 for p in path):
            raise ValueError(f"stream path elements must be non-negative: {path}")
        object.__setattr__(self, "path", path)

    def child(self, *elements: int) -> RngStream:
        return RngStream(self.seed, self.path + tuple(int(e) for e in elements))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))

    def permutation(self, n: int) -> np.ndarray:
        return self.generator().permutation(n)


def _box_muller(gen: np.random.Generator, n: int) -> np.ndarray:
    pairs = (n + 1) // 2
    u = gen.random((2, pairs))
    radius = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1 - u in (0, 1]
    angle = 2.0 * np.pi * u[1]
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:n]


def standard_normal(shape, stream: RngStream) -> np.ndarray:
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    n = int(np.prod(shape, dtype=np.int64))
    return _box_muller(stream.generator(), n).reshape(shape)


def sample_gaussian(shape, mean: float, std: float, stream: RngStream) -> np.ndarray:
    """I.i.d. N(mean, std^2) draws of the given shape from ``stream``."""
    if not std >= 0:
        raise NegativeStd(f"std must be >= 0, got {std!r}")
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if std == 0:
        return np.full(shape, float(mean))
    return float(mean) + float(std) * standard_normal(shape, stream)
