"""Batch gradient descent with backpropagation, plus a finite-difference
gradient checker. This is the comparison arm for the image-recognition
experiments."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import mlp as mlp_mod
from .errors import ConfigError, DivergenceError
from .mlp import LossKind
from .trainer import MetricsLog, MetricsRow


@dataclass
class GdConfig:
    learning_rate: float
    epochs: int
    metrics_every: int = 10
    seed: int = 0
    # plateau stop: end early once val loss improves by < min_improvement
    # over `patience` consecutive epochs (requires a validation set)
    plateau: Optional[dict] = None  # {"min_improvement": float, "patience": int}

    def validate(self):
        # zero is permitted as a degenerate no-op configuration
        if self.learning_rate < 0.0:
            raise ConfigError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.metrics_every < 1:
            raise ConfigError("metrics_every must be positive")
        if self.plateau is not None:
            if self.plateau.get("patience", 0) < 1 or self.plateau.get("min_improvement", -1) < 0:
                raise ConfigError(f"bad plateau config: {self.plateau}")


def backprop_gradients(net, data):
    """Gradient of the mean loss w.r.t. every weight matrix.

    Returns a list of arrays with the same shapes as net.weights. The
    softmax is fused into the cross-entropy output gradient; ReLU uses
    subgradient 0 at 0.
    """
    X = np.asarray(data.X, dtype=np.float64)
    N = data.n
    ones = np.ones((N, 1))

    # forward, keeping augmented inputs and pre-activations per layer
    augmented = []
    zs = []
    a = X
    for spec, w in zip(net.layers, net.weights):
        a_aug = np.hstack([ones, a])
        augmented.append(a_aug)
        z = a_aug @ w.T
        zs.append(z)
        a = spec.activation.apply(z)

    out = a
    if net.loss_kind is LossKind.MEAN_SQUARED_EUCLIDEAN:
        dL_dout = 2.0 * (out - data.Y) / N
        delta = dL_dout * net.layers[-1].activation.derivative(zs[-1])
    else:
        # fused softmax cross-entropy; the output layer is Identity by design
        shifted = out - out.max(axis=1, keepdims=True)
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        delta = (p - data.Y) / N
        delta = delta * net.layers[-1].activation.derivative(zs[-1])

    grads = [None] * len(net.weights)
    for k in range(len(net.weights) - 1, -1, -1):
        grads[k] = delta.T @ augmented[k]
        if k > 0:
            # drop the bias column when propagating the error backward
            delta = (delta @ net.weights[k][:, 1:]) * net.layers[k - 1].activation.derivative(zs[k - 1])
    return grads


def finite_difference_gradients(net, data, h=1e-5):
    """Central-difference gradient of the mean loss, weight by weight.

    Independent check for backprop_gradients; O(synapses) loss evaluations.
    """
    grads = []
    for w in net.weights:
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            up = mlp_mod.loss(net, data)
            w[idx] = orig - h
            down = mlp_mod.loss(net, data)
            w[idx] = orig
            g[idx] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def train_gd(net, data, val, cfg):
    """Full-batch gradient descent: w <- w - lr * grad, for cfg.epochs epochs
    (earlier if the plateau criterion fires). Returns (net, MetricsLog) with
    the same CSV schema as the synaptic trainer (reward column empty)."""
    cfg.validate()
    log = MetricsLog()
    best_val = np.inf
    stale = 0

    for epoch in range(1, cfg.epochs + 1):
        grads = backprop_gradients(net, data)
        for w, g in zip(net.weights, grads):
            w -= cfg.learning_rate * g

        train_loss = mlp_mod.loss(net, data)
        if not np.isfinite(train_loss):
            bad = next((k for k, w in enumerate(net.weights) if not np.all(np.isfinite(w))), None)
            raise DivergenceError(
                f"non-finite loss at epoch {epoch}", iteration=epoch, layer_index=bad)

        val_loss = val_acc = None
        stop = False
        if val is not None:
            val_loss = mlp_mod.loss(net, val)
            if cfg.plateau is not None:
                if val_loss < best_val - cfg.plateau["min_improvement"]:
                    best_val = val_loss
                    stale = 0
                else:
                    stale += 1
                    if stale >= cfg.plateau["patience"]:
                        stop = True

        if epoch % cfg.metrics_every == 0 or epoch == cfg.epochs or stop:
            train_acc = mlp_mod.accuracy(net, data)
            if val is not None:
                val_acc = mlp_mod.accuracy(net, val)
            log.append(MetricsRow(
                iteration=epoch,
                train_loss=train_loss,
                reward=None,
                train_acc=train_acc,
                val_loss=val_loss,
                val_acc=val_acc,
                alpha_s=None,
                batch_boundary=False,
            ))
        if stop:
            break

    return net, log
