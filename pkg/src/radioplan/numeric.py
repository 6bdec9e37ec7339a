"""MLP primitives with exact reverse-mode gradients and a gradient checker.

Everything is 64-bit floats on numpy arrays. The model sizes here are tiny,
so there is no reason to trade precision for speed, and fp64 keeps the
finite-difference comparisons free of dtype noise.

The activation is applied after every affine layer, including the last one.
Callers that need an unconstrained output (regression heads) use
``Activation.IDENTITY``. The backward pass is hand-rolled over this fixed
layer structure rather than a general tape graph; the architecture using it
never changes shape at runtime, so a fixed schedule is simpler to verify.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np


class DimensionMismatch(ValueError):
    """Input or gradient shape does not match the parameter layout."""


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"


@dataclass
class MlpParams:
    """Per-layer weights (in_dim, out_dim), biases (out_dim,), one activation."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatch("weights and biases must pair up, one layer minimum")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise DimensionMismatch(f"layer {i} weight/bias shapes inconsistent")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DimensionMismatch(f"layer {i - 1} output does not feed layer {i}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i} has non-finite parameters")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Flat view [W0, b0, W1, b1, ...] sharing storage with the layers."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def xavier_init(layer_dims: Sequence[int], activation: Activation, rng: np.random.Generator) -> MlpParams:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims, layer_dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases, activation=activation)


@dataclass
class MlpTape:
    """Cached per-layer inputs and pre-activations from one forward pass."""

    inputs: list[np.ndarray]
    pres: list[np.ndarray]
    squeeze: bool


def _activate(pre: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(pre, 0.0)
    return pre


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpTape]:
    """Layered affine + activation; returns output and the backward tape."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise DimensionMismatch(
            f"input width {x.shape[-1] if x.ndim else 0} != expected {params.in_dim}"
        )
    inputs, pres = [], []
    h = x
    for w, b in zip(params.weights, params.biases):
        inputs.append(h)
        pre = h @ w + b
        pres.append(pre)
        h = _activate(pre, params.activation)
    y = h[0] if squeeze else h
    return y, MlpTape(inputs=inputs, pres=pres, squeeze=squeeze)


def mlp_backward(
    params: MlpParams, tape: MlpTape, dy: np.ndarray
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Exact gradients of the forward map.

    Returns (dx, [(dW, db) per layer]); parameter gradients are summed over
    the batch dimension.
    """
    dy = np.asarray(dy, dtype=np.float64)
    if tape.squeeze:
        dy = dy[None, :]
    if dy.shape != (tape.inputs[0].shape[0], params.out_dim):
        raise DimensionMismatch("dy shape does not match the forward output")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.weights)
    d = dy
    for layer in range(len(params.weights) - 1, -1, -1):
        if params.activation is Activation.RELU:
            d = d * (tape.pres[layer] > 0.0)
        dw = tape.inputs[layer].T @ d
        db = d.sum(axis=0)
        grads[layer] = (dw, db)
        d = d @ params.weights[layer].T
    dx = d[0] if tape.squeeze else d
    return dx, grads


def zeros_like_params(params: MlpParams) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(params.weights, params.biases)]


def grad_check(
    loss_fn: Callable[[], float],
    params: Sequence[np.ndarray],
    analytic: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Worst relative error between analytic grads and central differences.

    loss_fn is a no-argument closure over the arrays in `params`; each entry
    is perturbed in place, re-evaluated, then restored. `analytic` carries
    the corresponding gradient arrays.
    """
    worst = 0.0
    for arr, grad in zip(params, analytic):
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = loss_fn()
            flat[i] = saved - eps
            down = loss_fn()
            flat[i] = saved
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
