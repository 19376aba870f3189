"""Dense feedforward MLP with bias-augmented inputs.

Every scalar weight, biases included, is one "synapse": the weight matrix
of a layer has shape (output_dim, input_dim + 1) with column 0 holding the
bias, and inputs are augmented with a leading 1 at forward time.
"""

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError

FORMAT_VERSION = 1


class ActivationKind(str, Enum):
    TANH = "tanh"
    RELU = "relu"
    IDENTITY = "identity"

    def apply(self, z):
        if self is ActivationKind.TANH:
            return np.tanh(z)
        if self is ActivationKind.RELU:
            return np.maximum(z, 0.0)
        return z

    def derivative(self, z):
        """Elementwise derivative at pre-activation z (ReLU uses 0 at 0)."""
        if self is ActivationKind.TANH:
            t = np.tanh(z)
            return 1.0 - t * t
        if self is ActivationKind.RELU:
            return (z > 0.0).astype(z.dtype)
        return np.ones_like(z)


class LossKind(str, Enum):
    MEAN_SQUARED_EUCLIDEAN = "mean_squared_euclidean"
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: ActivationKind

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError(f"layer dims must be positive, got {self.input_dim}x{self.output_dim}")

    @property
    def weight_shape(self):
        # column 0 is the bias column
        return (self.output_dim, self.input_dim + 1)


@dataclass
class Dataset:
    """Unaugmented samples: X is N x d, Y is N x c (one-hot or a +/-1 column)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.X.ndim != 2 or self.Y.ndim != 2:
            raise ShapeError(f"X and Y must be 2-D, got {self.X.shape} and {self.Y.shape}")
        if self.X.shape[0] != self.Y.shape[0]:
            raise ShapeError(f"X has {self.X.shape[0]} rows but Y has {self.Y.shape[0]}")
        if self.X.shape[0] < 1:
            raise ShapeError("dataset must contain at least one sample")

    @property
    def n(self):
        return self.X.shape[0]

    def subset(self, indices):
        return Dataset(self.X[indices], self.Y[indices])

    def label_classes(self):
        """Integer class per row: argmax for one-hot, sign threshold for a scalar column."""
        if self.Y.shape[1] == 1:
            return (self.Y[:, 0] > 0.0).astype(np.int64)
        return np.argmax(self.Y, axis=1)


class Mlp:
    """Layered dense network; weights[k] has shape (out_k, in_k + 1)."""

    def __init__(self, layers, weights, loss):
        layers = list(layers)
        if not layers:
            raise ConfigError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.output_dim != b.input_dim:
                raise ShapeError(f"layer chain broken: {a.output_dim} -> {b.input_dim}")
        if len(weights) != len(layers):
            raise ShapeError(f"{len(layers)} layers but {len(weights)} weight matrices")
        self.layers = layers
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        for spec, w in zip(self.layers, self.weights):
            if w.shape != spec.weight_shape:
                raise ShapeError(f"weight shape {w.shape} != expected {spec.weight_shape}")
            if not np.all(np.isfinite(w)):
                raise ConfigError("weights must be finite")
        self.loss_kind = LossKind(loss)

    @property
    def input_dim(self):
        return self.layers[0].input_dim

    @property
    def output_dim(self):
        return self.layers[-1].output_dim

    @property
    def synapse_count(self):
        return sum(w.size for w in self.weights)

    def get_flat_weights(self):
        """All synapses in canonical order: layer-major, then neuron, then weight index."""
        return np.concatenate([w.ravel() for w in self.weights])

    def set_flat_weights(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.synapse_count,):
            raise ShapeError(f"expected {self.synapse_count} weights, got {flat.shape}")
        offset = 0
        for w in self.weights:
            w[...] = flat[offset:offset + w.size].reshape(w.shape)
            offset += w.size

    def copy(self):
        return Mlp(self.layers, [w.copy() for w in self.weights], self.loss_kind)

    # --- serialization ---

    def to_json_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "layers": [
                {"input_dim": s.input_dim, "output_dim": s.output_dim, "activation": s.activation.value}
                for s in self.layers
            ],
            "loss": self.loss_kind.value,
            "weights": [w.tolist() for w in self.weights],
        }

    @classmethod
    def from_json_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported net format_version: {d.get('format_version')}")
        layers = [
            LayerSpec(s["input_dim"], s["output_dim"], ActivationKind(s["activation"]))
            for s in d["layers"]
        ]
        return cls(layers, [np.array(w) for w in d["weights"]], LossKind(d["loss"]))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


@dataclass(frozen=True)
class InitScheme:
    """Zero fill, or i.i.d. Uniform(low, high)."""

    kind: str  # "zero" | "uniform"
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "uniform"):
            raise ConfigError(f"unknown init scheme: {self.kind}")
        if self.kind == "uniform" and not self.low < self.high:
            raise ConfigError(f"uniform init needs low < high, got [{self.low}, {self.high}]")


def init_weights(layer_specs, scheme, seed, loss=LossKind.MEAN_SQUARED_EUCLIDEAN):
    """Build an Mlp with weights drawn deterministically from (scheme, seed)."""
    rng = np.random.default_rng(seed)
    weights = []
    for spec in layer_specs:
        if scheme.kind == "zero":
            weights.append(np.zeros(spec.weight_shape))
        else:
            weights.append(rng.uniform(scheme.low, scheme.high, size=spec.weight_shape))
    return Mlp(layer_specs, weights, loss)


def _check_input(net, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"input shape {X.shape} incompatible with net input dim {net.input_dim}")
    if not np.all(np.isfinite(X)):
        raise ShapeError("non-finite values in input")
    return X


def forward(net, X):
    """Forward pass; returns the N x c output matrix (final activation applied)."""
    a = _check_input(net, X)
    ones = np.ones((a.shape[0], 1))
    for spec, w in zip(net.layers, net.weights):
        z = np.hstack([ones, a]) @ w.T
        a = spec.activation.apply(z)
    return a


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(net, data):
    """Mean loss over the dataset (squared Euclidean or softmax cross-entropy)."""
    out = forward(net, data.X)
    if out.shape != data.Y.shape:
        raise ShapeError(f"output shape {out.shape} != label shape {data.Y.shape}")
    if net.loss_kind is LossKind.MEAN_SQUARED_EUCLIDEAN:
        diff = out - data.Y
        return float(np.sum(diff * diff) / data.n)
    log_p = _log_softmax(out)
    return float(-np.sum(log_p * data.Y) / data.n)


def predict_classes(net, X):
    """Predicted class per row: sign threshold for 1-D output, else argmax."""
    out = forward(net, X)
    if out.shape[1] == 1:
        return (out[:, 0] > 0.0).astype(np.int64)
    return np.argmax(out, axis=1)


def accuracy(net, data):
    """Fraction of rows whose predicted class equals the label class."""
    return float(np.mean(predict_classes(net, data.X) == data.label_classes()))
