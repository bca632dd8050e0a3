"""Dense ReLU classifier with exact backpropagation, clipping and local SGD.

A model is a stack of dense layers; every hidden layer applies ReLU and the
output layer feeds a softmax cross-entropy loss averaged over the batch.
For privacy purposes one "layer" is the pair (weight, bias); the helpers
:meth:`ModelParams.layer_vector` and :meth:`ModelParams.with_layer_vector`
expose that pair as a single concatenated vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import EmptyDataset, NonPositiveClip, ShapeMismatch
from .tensor_core import RngStream


@dataclass(frozen=True)
class ModelSpec:
    layer_sizes: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ShapeMismatch("layer_sizes needs at least an input and an output size")
        if any(s <= 0 for s in sizes):
            raise ShapeMismatch(f"layer sizes must be positive: {sizes}")
        if self.activation != "relu":
            raise ShapeMismatch(f"unsupported activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]

    @property
    def size(self) -> int:
        return self.weight.size + self.bias.size


@dataclass(frozen=True)
class ModelParams:
    """Per-layer parameters; layer ids are the positions 0..J-1."""

    layers: tuple[Layer, ...]

    def __iter__(self) -> Iterator[Layer]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, j: int) -> Layer:
        return self.layers[j]

    @property
    def num_parameters(self) -> int:
        return sum(layer.size for layer in self.layers)

    def layer_vector(self, j: int) -> np.ndarray:
        layer = self.layers[j]
        return np.concatenate([layer.weight.ravel(), layer.bias])

    def with_layer_vector(self, j: int, vector: np.ndarray) -> ModelParams:
        layer = self.layers[j]
        if vector.shape != (layer.size,):
            raise ShapeMismatch(f"layer {j} expects {layer.size} values, got {vector.shape}")
        n_w = layer.weight.size
        new = Layer(vector[:n_w].reshape(layer.weight.shape).copy(), vector[n_w:].copy())
        return ModelParams(self.layers[:j] + (new,) + self.layers[j + 1 :])

    def flat(self) -> np.ndarray:
        return np.concatenate([self.layer_vector(j) for j in range(len(self))])

    def shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        return [(layer.weight.shape, layer.bias.shape) for layer in self.layers]

    def check_congruent(self, other: ModelParams) -> None:
        if self.shapes() != other.shapes():
            raise ShapeMismatch(f"{self.shapes()} vs {other.shapes()}")

    def bit_equal(self, other: ModelParams) -> bool:
        return self.shapes() == other.shapes() and all(
            a.weight.tobytes() == b.weight.tobytes() and a.bias.tobytes() == b.bias.tobytes()
            for a, b in zip(self.layers, other.layers)
        )


# Gradients share the structure of the parameters they differentiate.
Gradients = ModelParams


@dataclass(frozen=True)
class Dataset:
    """Labelled samples: ``inputs`` is [n, d] float64, ``labels`` is [n] int64.

    Also used as a mini-batch.
    """

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int = field(default=0)

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if inputs.ndim != 2 or inputs.shape[0] != labels.shape[0]:
            raise ShapeMismatch(f"inputs {inputs.shape} vs labels {labels.shape}")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        if not self.num_classes:
            k = int(labels.max()) + 1 if labels.size else 0
            object.__setattr__(self, "num_classes", k)
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ShapeMismatch(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.inputs.shape[1])

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


Batch = Dataset


def init_params(spec: ModelSpec, stream: RngStream) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    gen = stream.generator()
    layers = []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        w = gen.uniform(-a, a, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out)))
    return ModelParams(tuple(layers))


def zeros_like(params: ModelParams) -> ModelParams:
    return ModelParams(tuple(Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in params))


def _check_batch(params: ModelParams, batch: Batch) -> None:
    if len(batch) == 0:
        raise EmptyDataset("batch is empty")
    if batch.input_dim != params[0].weight.shape[1]:
        raise ShapeMismatch(f"input dim {batch.input_dim} vs model {params[0].weight.shape[1]}")
    n_out = params[-1].weight.shape[0]
    if batch.labels.max() >= n_out:
        raise ShapeMismatch(f"label {int(batch.labels.max())} outside {n_out} classes")


def _forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    activations = [x]
    h = x
    last = len(params) - 1
    for j, layer in enumerate(params):
        z = h @ layer.weight.T + layer.bias
        h = z if j == last else np.maximum(z, 0.0)
        activations.append(h)
    return h, activations


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_loss(params: ModelParams, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy of ``batch`` and the raw logits."""
    _check_batch(params, batch)
    logits, _ = _forward(params, batch.inputs)
    logp = _log_softmax(logits)
    loss = -float(np.mean(logp[np.arange(len(batch)), batch.labels]))
    return loss, logits


def loss_and_gradients(params: ModelParams, batch: Batch) -> tuple[float, Gradients]:
    _check_batch(params, batch)
    n = len(batch)
    logits, acts = _forward(params, batch.inputs)
    logp = _log_softmax(logits)
    rows = np.arange(n)
    loss = -float(np.mean(logp[rows, batch.labels]))

    delta = np.exp(logp)
    delta[rows, batch.labels] -= 1.0
    delta /= n
    grads = [None] * len(params)
    for j in range(len(params) - 1, -1, -1):
        h_in = acts[j]
        grads[j] = Layer(delta.T @ h_in, delta.sum(axis=0))
        if j > 0:
            delta = (delta @ params[j].weight) * (acts[j] > 0)
    return loss, ModelParams(tuple(grads))


def backward(params: ModelParams, batch: Batch) -> Gradients:
    return loss_and_gradients(params, batch)[1]


def global_norm(g: Gradients) -> float:
    total = 0.0
    for layer in g:
        total += float(np.dot(layer.weight.ravel(), layer.weight.ravel()))
        total += float(np.dot(layer.bias, layer.bias))
    return math.sqrt(total)


def clip_gradients(g: Gradients, clip_bound: float) -> Gradients:
    """Scale ``g`` by ``1 / max(1, ||g|| / clip_bound)`` using one global norm."""
    if not clip_bound > 0:
        raise NonPositiveClip(f"clip bound must be positive, got {clip_bound!r}")
    norm = global_norm(g)
    if norm <= clip_bound:
        return g
    scale = clip_bound / norm
    clipped = ModelParams(tuple(Layer(l.weight * scale, l.bias * scale) for l in g))
    # rounding can leave the result a hair above the bound; never hand that back
    if global_norm(clipped) > clip_bound:
        scale = np.nextafter(scale, 0.0)
        while True:
            clipped = ModelParams(tuple(Layer(l.weight * scale, l.bias * scale) for l in g))
            if global_norm(clipped) <= clip_bound:
                break
            scale = np.nextafter(scale, 0.0)
    return clipped


def sgd_step(params: ModelParams, g: Gradients, eta: float) -> ModelParams:
    params.check_congruent(g)
    return ModelParams(
        tuple(Layer(p.weight - eta * d.weight, p.bias - eta * d.bias) for p, d in zip(params, g))
    )


def evaluate(params: ModelParams, dataset: Dataset) -> tuple[float, float]:
    """(accuracy, mean loss); ties in the logits go to the lowest class index."""
    if len(dataset) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    loss, logits = forward_loss(params, dataset)
    predictions = np.argmax(logits, axis=1)
    return float(np.mean(predictions == dataset.labels)), loss


def local_train(
    params: ModelParams,
    dataset: Dataset,
    eta: float,
    epochs: int,
    batch_size: int,
    clip_bound: float,
    stream: RngStream,
) -> ModelParams:
    """``epochs`` passes of clipped mini-batch SGD.

    Each epoch reshuffles with the child stream ``stream.child(epoch)``, so the
    batch order depends only on the stream, never on call order.
    """
    if len(dataset) == 0:
        raise EmptyDataset("local dataset is empty")
    batch_size = max(1, min(int(batch_size), len(dataset)))
    for epoch in range(epochs):
        order = stream.child(epoch).permutation(len(dataset))
        for start in range(0, len(dataset), batch_size):
            batch = dataset.subset(order[start : start + batch_size])
            _, g = loss_and_gradients(params, batch)
            params = sgd_step(params, clip_gradients(g, clip_bound), eta)
    return params
