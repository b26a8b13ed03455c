"""Multilayer perceptrons over the autodiff kernel.

Hidden layers use ELU, the output layer is identity. Weights are stored
(out, in). Initialization is scaled uniform fan-in, U(-1/sqrt(in), 1/sqrt(in)),
from the caller's seeded generator so runs are reproducible.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, elu, linear


class Mlp:
    def __init__(self, weights, biases):
        self.weights = list(weights)
        self.biases = list(biases)
        for i in range(len(self.weights) - 1):
            if self.weights[i].shape[0] != self.weights[i + 1].shape[1]:
                raise ShapeError(
                    f"layer {i}: out-dim {self.weights[i].shape[0]} does not chain "
                    f"into layer {i + 1} in-dim {self.weights[i + 1].shape[1]}")

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x):
        """Tape-recorded forward pass; x is a Tensor of shape (n, in_dim)."""
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if h.shape[-1] != w.shape[1]:
                raise ShapeError(
                    f"layer {i}: expected input dim {w.shape[1]}, got {h.shape[-1]}")
            h = linear(h, w, b)
            if i != last:
                h = elu(h)
        return h

    def forward_np(self, x):
        """Plain-numpy forward pass for inference; no graph is built."""
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if h.shape[-1] != w.shape[1]:
                raise ShapeError(
                    f"layer {i}: expected input dim {w.shape[1]}, got {h.shape[-1]}")
            h = h @ w.data.T + b.data
            if i != last:
                h = np.where(h > 0.0, h, np.expm1(np.minimum(h, 0.0)))
        return h

    def state_dict(self, prefix=""):
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}w{i}"] = w.data
            out[f"{prefix}b{i}"] = b.data
        return out

    def load_state(self, arrays, prefix=""):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w.data = np.asarray(arrays[f"{prefix}w{i}"], dtype=np.float64).reshape(w.shape)
            b.data = np.asarray(arrays[f"{prefix}b{i}"], dtype=np.float64).reshape(b.shape)


def init_mlp(sizes, rng):
    """Build an Mlp with layer sizes [in, h1, ..., out]."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(Tensor(rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                              requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return Mlp(weights, biases)
