"""Fully connected regressor trained with backpropagation and Adam."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..rng import stream

log = logging.getLogger(__name__)


class Divergence(FloatingPointError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def _relu(z):
    return np.maximum(z, 0.0)


@dataclass
class MLP:
    """Weights and biases per layer; hidden layers use ReLU, output is linear.

    Targets are standardized internally with ``y_mean``/``y_scale`` so the
    output layer works near unit scale; :meth:`predict` returns original units.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    y_mean: float = 0.0
    y_scale: float = 1.0
    history: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, n_in: int, hidden=(100, 50), seed: int = 0) -> "MLP":
        sizes = [n_in, *hidden, 1]
        weights, biases = [], []
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / fan_in)
            rng = stream(seed, "mlp-layer", layer)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, X):
        """Output in standardized units plus the activations needed for the gradient."""
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if k == last else _relu(z)
            acts.append(h)
        return h[:, 0], acts

    def loss_and_grads(self, X, t):
        """Mean squared error against standardized targets ``t`` and its gradient."""
        out, acts = self.forward(X)
        n = X.shape[0]
        err = out - t
        loss = float(err @ err / n)
        delta = (2.0 / n) * err[:, None]
        grads_w, grads_b = [], []
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w.append(acts[k].T @ delta)
            grads_b.append(delta.sum(axis=0))
            if k:
                delta = (delta @ self.weights[k].T) * (acts[k] > 0)
        grads_w.reverse()
        grads_b.reverse()
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads += [gw, gb]
        return loss, grads

    def predict(self, X: np.ndarray) -> np.ndarray:
        out, _ = self.forward(X)
        return out * self.y_scale + self.y_mean


def train_mlp(
    X: np.ndarray,
    y: np.ndarray,
    hidden=(100, 50),
    epochs: int = 200,
    batch: int = 32,
    learning_rate: float = 1e-3,
    seed: int = 0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> MLP:
    """Mini-batch Adam on mean squared error; batches reshuffled every epoch."""
    n, p = X.shape
    net = MLP.init(p, hidden, seed)
    net.y_mean = float(y.mean())
    scale = float(y.std())
    net.y_scale = scale if scale > 0 else 1.0
    t = (y - net.y_mean) / net.y_scale
    params = net.params
    m = [np.zeros_like(q) for q in params]
    v = [np.zeros_like(q) for q in params]
    step = 0
    batch = max(1, min(batch, n))
    for epoch in range(epochs):
        order = stream(seed, "mlp-shuffle", epoch).permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, grads = net.loss_and_grads(X[idx], t[idx])
            if not np.isfinite(loss):
                raise Divergence(f"loss became {loss} in epoch {epoch}", net.history)
            total += loss * len(idx)
            step += 1
            c1 = 1.0 - beta1**step
            c2 = 1.0 - beta2**step
            for q, g, mq, vq in zip(params, grads, m, v):
                mq *= beta1
                mq += (1.0 - beta1) * g
                vq *= beta2
                vq += (1.0 - beta2) * g * g
                q -= learning_rate * (mq / c1) / (np.sqrt(vq / c2) + adam_eps)
        net.history.append(total / n)
    return net
