"""Reference gradients: instantaneous backprop and central finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import LayeredNet, ShapeError

FD_EPS = 1e-5


@dataclass(frozen=True)
class LossSpec:
    """Half squared error ``V(x, y) = 0.5 * |x - y|^2`` on the output layer."""

    kind: str = "half_squared_error"

    def __post_init__(self):
        if self.kind != "half_squared_error":
            raise ValueError(f"unsupported loss {self.kind!r}")

    def value(self, x, y) -> float:
        r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return 0.5 * float(r @ r)

    def grad(self, x, y) -> np.ndarray:
        """Derivative of the loss with respect to the output ``x``."""
        return np.asarray(x, dtype=float) - np.asarray(y, dtype=float)


HALF_SQUARED = LossSpec()


def _check_io(net: LayeredNet, u, y=None):
    u = np.asarray(u, dtype=float)
    if u.shape != (net.widths[0],):
        raise ShapeError(f"input has shape {u.shape}, net expects ({net.widths[0]},)")
    if y is not None:
        y = np.asarray(y, dtype=float)
        if y.shape != (net.widths[-1],):
            raise ShapeError(f"target has shape {y.shape}, net expects ({net.widths[-1]},)")
    return u, y


def forward_instant(net: LayeredNet, u) -> list[np.ndarray]:
    """Activations ``x_0 .. x_L`` of the static (zero-delay) network."""
    u, _ = _check_io(net, u)
    xs = [u]
    for W in net.weights:
        xs.append(net.activation.value(W @ xs[-1]))
    return xs


def backprop_exact(net: LayeredNet, u, y, loss: LossSpec = HALF_SQUARED) -> list[np.ndarray]:
    """Gradients of ``loss(f(u), y)`` with respect to each ``W_l``."""
    u, y = _check_io(net, u, y)
    act = net.activation
    xs = [u]
    pre = []
    for W in net.weights:
        pre.append(W @ xs[-1])
        xs.append(act.value(pre[-1]))
    delta = loss.grad(xs[-1], y) * act.d1(pre[-1])
    grads = [None] * net.depth
    for l in range(net.depth - 1, -1, -1):
        grads[l] = np.outer(delta, xs[l])
        if l:
            delta = act.d1(pre[l - 1]) * (net.weights[l].T @ delta)
    return grads


def loss_at(net: LayeredNet, u, y, loss: LossSpec = HALF_SQUARED) -> float:
    return loss.value(forward_instant(net, u)[-1], y)


def grad_fd(net: LayeredNet, u, y, loss: LossSpec = HALF_SQUARED, eps: float = FD_EPS) -> list[np.ndarray]:
    """Central-difference gradient, one weight at a time."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    u, y = _check_io(net, u, y)
    weights = [W.copy() for W in net.weights]
    grads = []
    for l, W in enumerate(weights):
        g = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            orig = W[idx]
            W[idx] = orig + eps
            hi = loss_at(net.with_weights(weights), u, y, loss)
            W[idx] = orig - eps
            lo = loss_at(net.with_weights(weights), u, y, loss)
            W[idx] = orig
            g[idx] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def relative_error(a, b, floor: float = 1e-300) -> float:
    """``|a - b| / max(|a|, |b|)`` in the Frobenius norm; 0 when both vanish."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale <= floor:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)
