"""Massless and heavily damped limits of the constraint dynamics.

As ``m_x, m_W -> 0`` with ``theta m_W -> gamma`` the rescaled multipliers
``delta = exp(-theta t) lam`` solve the triangular system ``T delta = -V_x``
and the weights follow ``wdot = -(1/gamma) delta_j G^j_w``, which is plain
gradient descent with the deltas computed by backprop.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .constraints import ConstraintNet, NotFeedforwardError, jacobian_arcs, jacobian_xi


def back_substitute(U, b) -> np.ndarray:
    """Solve ``U z = b`` for upper-triangular ``U`` by a bottom-up sweep."""
    U = np.asarray(U, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    z = np.zeros(n)
    for i in range(n - 1, -1, -1):
        if U[i, i] == 0.0:
            raise np.linalg.LinAlgError(f"zero pivot at row {i}")
        z[i] = (b[i] - U[i, i + 1:] @ z[i + 1:]) / U[i, i]
    return z


def _full_loss_gradient(cnet: ConstraintNet, V_x) -> np.ndarray:
    V_x = np.asarray(V_x, dtype=float)
    if V_x.shape == (cnet.nu,):
        return V_x
    if V_x.shape == (cnet.eta,):
        g = np.zeros(cnet.nu)
        g[cnet.nu - cnet.eta:] = V_x
        return g
    raise ValueError(f"V_x must have length nu={cnet.nu} or eta={cnet.eta}")


def bp_limit_deltas(cnet: ConstraintNet, xi, V_x, M=None) -> np.ndarray:
    """Solve ``T delta = -V_x`` with ``T[i, j] = dG^j/dxi_i``.

    ``V_x`` may cover all neurons or only the outputs.
    """
    if not cnet.is_feedforward:
        raise NotFeedforwardError("T is triangular only for feedforward wiring")
    M = cnet.M if M is None else M
    T = jacobian_xi(cnet, xi, M)
    return back_substitute(T, -_full_loss_gradient(cnet, V_x))


def bp_limit_weight_rate(cnet: ConstraintNet, xi, delta, gamma: float, M=None) -> np.ndarray:
    """Weight velocity ``-(1/gamma) delta_j dG^j/dw`` as a ``nu x nu`` matrix on the arcs.

    Entrywise this is ``(1/gamma) sigma'(a_i) delta_i xi_j`` for arc ``j -> i``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    M = cnet.M if M is None else M
    GW = jacobian_arcs(cnet, xi, M)
    return cnet.matrix_of(-(GW.T @ np.asarray(delta, dtype=float)) / gamma)


def _rk4(f, y0, dt, steps):
    ys = np.empty((steps + 1,) + np.shape(y0))
    y = np.array(y0, dtype=float)
    ys[0] = y
    for n in range(steps):
        k1 = f(y)
        k2 = f(y + dt / 2 * k1)
        k3 = f(y + dt / 2 * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[n + 1] = y
    return ys


def gradient_flow(
    grad: Callable[[np.ndarray], np.ndarray],
    W0,
    gamma: float,
    dt: float,
    steps: int,
    method: str = "rk4",
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``Wdot = -(1/gamma) grad(W)``; returns ``(times, W_path)``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    f = lambda W: -np.asarray(grad(W)) / gamma  # noqa: E731
    ts = dt * np.arange(steps + 1)
    if method == "rk4":
        return ts, _rk4(f, W0, dt, steps)
    if method == "euler":
        ys = np.empty((steps + 1,) + np.shape(W0))
        ys[0] = W0
        for n in range(steps):
            ys[n + 1] = ys[n] + dt * f(ys[n])
        return ts, ys
    raise ValueError(f"unknown method {method!r}")


def damped_second_order(
    grad: Callable[[np.ndarray], np.ndarray],
    W0,
    m_W: float,
    theta: float,
    dt: float,
    steps: int,
    Wdot0=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """RK4 for ``Wddot + theta Wdot = -(1/m_W) grad(W)``, starting at rest by default.

    Returns ``(times, W_path, Wdot_path)``.
    """
    if m_W <= 0 or theta < 0:
        raise ValueError("need m_W > 0 and theta >= 0")
    W0 = np.asarray(W0, dtype=float)
    V0 = np.zeros_like(W0) if Wdot0 is None else np.asarray(Wdot0, dtype=float)
    n = W0.size

    def f(y):
        W = y[:n].reshape(W0.shape)
        V = y[n:]
        acc = -theta * V - np.ravel(grad(W)) / m_W
        return np.concatenate([V, acc])

    ys = _rk4(f, np.concatenate([W0.ravel(), V0.ravel()]), dt, steps)
    ts = dt * np.arange(steps + 1)
    return ts, ys[:, :n].reshape((-1,) + W0.shape), ys[:, n:].reshape((-1,) + W0.shape)
