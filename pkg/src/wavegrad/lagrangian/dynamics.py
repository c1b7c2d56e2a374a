"""Euler-Lagrange dynamics of a constraint network.

Neuron outputs ``x`` and arc weights ``w`` move under the kinetic action
``0.5 (m_x |xdot|^2 + m_W |wdot|^2) * varpi(t)`` with ``varpi = exp(theta t)``
and the potential ``F = -varpi * V(x_out, y(t))``. The multipliers are the
solution of ``A lam = v`` obtained by asking the second time derivative of
every constraint to vanish along the motion.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from ..oracle import HALF_SQUARED, LossSpec
from .constraints import (
    RANK_RTOL,
    ConstraintNet,
    NotFeedforwardError,
    constraint_tau,
    curvature,
    eval_constraints,
    jacobian_arcs,
    jacobian_xi,
)

CONSISTENCY_TOL = 1e-10


class SingularMultiplierSystem(np.linalg.LinAlgError):
    def __init__(self, message: str, smallest_pivot: float):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class InconsistentInitialState(ValueError):
    """Cauchy data violate the constraints or their first time derivative."""


class DivergenceError(RuntimeError):
    pass


@dataclass
class ELState:
    x: np.ndarray
    xdot: np.ndarray
    W: np.ndarray
    Wdot: np.ndarray
    t: float = 0.0
    m_x: float = 1.0
    m_W: float = 1.0
    theta: float = 0.0

    def varpi(self) -> tuple[float, float]:
        """``(varpi, d varpi / dt)`` for ``varpi = exp(theta t)``."""
        p = math.exp(self.theta * self.t)
        return p, self.theta * p

    def copy(self) -> "ELState":
        return replace(self, x=self.x.copy(), xdot=self.xdot.copy(),
                       W=self.W.copy(), Wdot=self.Wdot.copy())


@dataclass
class MultiplierSystem:
    A: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    pivots: np.ndarray = field(repr=False, default=None)

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.A @ self.lam - self.v))


def output_loss_gradient(cnet: ConstraintNet, x, t: float, loss: LossSpec = HALF_SQUARED) -> np.ndarray:
    """``V_x`` over all neurons (zero away from the outputs)."""
    g = np.zeros(cnet.nu)
    if cnet.eta:
        out = np.asarray(cnet.outputs)
        g[out] = loss.grad(np.asarray(x)[out], cnet.target(t))
    return g


def constraint_rate(cnet: ConstraintNet, state: ELState) -> np.ndarray:
    """First time derivative ``g'`` of the constraints along the state's velocity."""
    T = jacobian_xi(cnet, state.x, state.W)
    GW = jacobian_arcs(cnet, state.x, state.W)
    return constraint_tau(cnet, state.t) + T.T @ state.xdot + GW @ cnet.weights_of(state.Wdot)


def _require_feedforward(cnet: ConstraintNet):
    if not cnet.is_feedforward:
        raise NotFeedforwardError("multiplier dynamics need feedforward wiring")


def solve_multipliers(
    cnet: ConstraintNet,
    state: ELState,
    loss: LossSpec = HALF_SQUARED,
    stabilize: float | None = None,
) -> MultiplierSystem:
    """Assemble and solve ``A lam = v``.

    ``A_ij = G^i_xi . G^j_xi / m_x + G^i_w . G^j_w / m_W`` and
    ``v = varpi * curvature - varpi' * g'_vel + G_xi L^x_F / m_x + G_w L^W_F / m_W``
    where ``g'_vel`` is the velocity part of the constraint rate. With
    ``stabilize = beta`` the constraint acceleration is steered to
    ``-(2 beta g' + beta^2 g)`` instead of zero.
    """
    _require_feedforward(cnet)
    if not (state.m_x > 0 and state.m_W > 0):
        raise ValueError("masses must be positive; use the limit operations instead")
    x, W = state.x, state.W
    p, pdot = state.varpi()
    T = jacobian_xi(cnet, x, W)
    GW = jacobian_arcs(cnet, x, W)
    wdot = cnet.weights_of(state.Wdot)
    A = T.T @ T / state.m_x + GW @ GW.T / state.m_W

    L_x = -p * output_loss_gradient(cnet, x, state.t, loss)
    # F carries no weight dependence, so L^W_F vanishes
    v = (p * curvature(cnet, state.t, x, W, state.xdot, state.Wdot)
         - pdot * (T.T @ state.xdot + GW @ wdot)
         + T.T @ L_x / state.m_x)
    if stabilize is not None:
        g = eval_constraints(cnet, state.t, x, W)
        gdot = constraint_rate(cnet, state)
        v = v + p * (2.0 * stabilize * gdot + stabilize**2 * g)

    lam, pivots = _spd_solve(A, v)
    if lam is None:
        raise _singular(A)
    return MultiplierSystem(A, v, lam, pivots)


def el_rhs(
    cnet: ConstraintNet,
    state: ELState,
    lam,
    loss: LossSpec = HALF_SQUARED,
) -> tuple[np.ndarray, np.ndarray]:
    """Accelerations ``(xddot, Wddot)`` from the Euler-Lagrange equations."""
    if not (state.m_x > 0 and state.m_W > 0):
        raise ValueError("masses must be positive; use the limit operations instead")
    lam = np.asarray(lam, dtype=float)
    p, pdot = state.varpi()
    T = jacobian_xi(cnet, state.x, state.W)
    GW = jacobian_arcs(cnet, state.x, state.W)
    L_x = -p * output_loss_gradient(cnet, state.x, state.t, loss)
    xdd = (-state.m_x * pdot * state.xdot - T @ lam + L_x) / (state.m_x * p)
    wdot = cnet.weights_of(state.Wdot)
    wdd = (-state.m_W * pdot * wdot - GW.T @ lam) / (state.m_W * p)
    return xdd, cnet.matrix_of(wdd)


def accelerations(cnet, state, loss=HALF_SQUARED, stabilize=None):
    sys = solve_multipliers(cnet, state, loss, stabilize)
    xdd, Wdd = el_rhs(cnet, state, sys.lam, loss)
    return xdd, Wdd, sys


def _spd_solve(A, v):
    """LAPACK positive-definite factor-and-solve; returns ``(lam, pivots)``."""
    chol, lam, info = lapack.dposv(A, v, lower=1)
    scale = float(A.flat[::A.shape[0] + 1].max()) if A.size else 0.0
    if info != 0:
        return None, None
    pivots = chol.flat[::chol.shape[0] + 1] ** 2
    if pivots.size and pivots.min() <= RANK_RTOL * scale:
        return None, pivots
    return lam, pivots


def _singular(A) -> SingularMultiplierSystem:
    ev = float(np.min(np.linalg.eigvalsh(A)))
    return SingularMultiplierSystem(f"multiplier matrix not positive definite (min eigenvalue {ev:.3e})", ev)


class _FusedRhs:
    """``(t, x, w, xdot, wdot) -> (xddot, wddot, lam)`` in arc coordinates.

    Same equations as :func:`solve_multipliers` followed by :func:`el_rhs`,
    specialised for speed; integration calls this four times per step.
    With ``S = diag(sigma') M`` the Jacobians are ``T^T = I - S`` and
    ``G_w w' = -sigma' * (M' x)``, and ``G_w G_w^T`` is diagonal because every
    arc feeds exactly one constraint.
    """

    def __init__(self, cnet: ConstraintNet, base: ELState, loss: LossSpec, stabilize: float | None):
        nu = cnet.nu
        self.cnet = cnet
        self.m_x, self.m_W, self.theta = base.m_x, base.m_W, base.theta
        self.loss = loss
        self.beta = stabilize
        self.rows, self.cols = cnet.arc_index
        self.flat = self.rows * nu + self.cols
        self.hidden = (np.arange(nu) >= cnet.omega).astype(float)
        self.out = np.asarray(cnet.outputs)
        self.eye = np.eye(nu)
        self.diag = np.arange(nu) * (nu + 1)
        self.adj = (cnet.matrix_of(np.ones(cnet.n_arcs)) != 0).astype(float)
        # off-arc entries of the scratch buffers stay zero
        self.M_buf = np.zeros((nu, nu))
        self.Md_buf = np.zeros((nu, nu))
        self.XV = np.empty((nu, 2))

    def __call__(self, t, x, w, xdot, wdot):
        cnet = self.cnet
        om, rows, cols = cnet.omega, self.rows, self.cols
        M, Md = self.M_buf, self.Md_buf
        M.flat[self.flat] = w
        Md.flat[self.flat] = wdot
        XV = self.XV
        XV[:, 0] = x
        XV[:, 1] = xdot
        a, Mxd = (M @ XV).T
        Dx, Dxd = (Md @ XV).T
        s0, s1, s2 = cnet.activation.derivatives(a)
        s1 = s1 * self.hidden
        s2 = s2 * self.hidden
        Tt = self.eye - s1[:, None] * M

        p = math.exp(self.theta * t)
        pdot = self.theta * p
        c = -s2 * (Mxd + Dx) ** 2 - 2.0 * s1 * Dxd
        # T^T xdot + G_w wdot
        vel = xdot - s1 * (Mxd + Dx)
        e0 = None
        if om or cnet.eta:
            e0, e1, e2, y = cnet.signal.jet(t)
            c[:om] = -e2
        self._last = (x, s0, e0)
        L_x = np.zeros(cnet.nu)
        if cnet.eta:
            L_x[self.out] = -p * self.loss.grad(x[self.out], y)
        v = p * c - pdot * vel + Tt @ L_x / self.m_x
        if self.beta is not None:
            g = x - s0
            gdot = vel.copy()
            if om:
                g[:om] = x[:om] - e0
                gdot[:om] -= e1
            v += p * (2.0 * self.beta * gdot + self.beta**2 * g)
        A = (Tt @ Tt.T) / self.m_x
        A.flat[self.diag] += s1 * s1 * (self.adj @ (x * x)) / self.m_W
        lam, _ = _spd_solve(A, v)
        if lam is None:
            raise _singular(A)
        xdd = (-self.m_x * pdot * xdot - Tt.T @ lam + L_x) / (self.m_x * p)
        # G_w^T lam on arc (j, k) is -sigma'_j lam_j x_k
        wdd = (-self.m_W * pdot * wdot + (s1 * lam)[rows] * x[cols]) / (self.m_W * p)
        return xdd, wdd, lam

    def drift(self) -> float:
        """``max |g|`` at the point of the most recent call."""
        x, s0, e0 = self._last
        g = x - s0
        if self.cnet.omega:
            g[:self.cnet.omega] = x[:self.cnet.omega] - e0
        return float(np.abs(g).max(initial=0.0))


def forward_solve(cnet: ConstraintNet, M, tau: float) -> np.ndarray:
    """Outputs satisfying every constraint at time ``tau`` (feedforward only)."""
    _require_feedforward(cnet)
    M = np.asarray(M, dtype=float)
    x = np.zeros(cnet.nu)
    x[:cnet.omega] = cnet.input_signal(tau)
    for j in range(cnet.omega, cnet.nu):
        x[j] = cnet.activation.value(M[j] @ x)
    return x


def consistent_init(
    cnet: ConstraintNet,
    t0: float = 0.0,
    m_x: float = 1.0,
    m_W: float = 1.0,
    theta: float = 0.0,
    W0=None,
    lift_velocity: bool = False,
) -> ELState:
    """Cauchy data with ``G = 0``, ``G_tau = 0``, ``xdot = 0`` and ``Wdot = 0`` at ``t0``.

    ``G_tau`` is ``-edot`` on the input neurons whatever the weights, so a
    moving input at ``t0`` cannot be made consistent this way and raises.
    With ``lift_velocity`` the outputs are instead started with the
    velocity that keeps ``g' = 0`` (inputs move with ``e``, the rest follow).
    """
    W = cnet.M.copy() if W0 is None else np.array(W0, dtype=float)
    x = forward_solve(cnet, W, t0)
    xdot = np.zeros(cnet.nu)
    G_tau = constraint_tau(cnet, t0)
    if np.max(np.abs(G_tau), initial=0.0) > CONSISTENCY_TOL:
        if not lift_velocity:
            raise InconsistentInitialState(
                f"G_tau(t0) = {G_tau[:cnet.omega]} is nonzero: inputs move at t0; "
                "start where the input derivative vanishes or lift the velocity"
            )
        xdot[:cnet.omega] = cnet.input_signal(t0, 1)
        s1 = cnet.activation.d1(W @ x)
        for j in range(cnet.omega, cnet.nu):
            xdot[j] = s1[j] * (W[j] @ xdot)
    return ELState(x, xdot, W, np.zeros_like(W), float(t0), float(m_x), float(m_W), float(theta))


def check_consistent(cnet: ConstraintNet, state: ELState, tol: float = CONSISTENCY_TOL) -> None:
    g = eval_constraints(cnet, state.t, state.x, state.W)
    gd = constraint_rate(cnet, state)
    if np.max(np.abs(g), initial=0.0) > tol or np.max(np.abs(gd), initial=0.0) > tol:
        raise InconsistentInitialState(
            f"initial state violates constraints: max|g|={np.max(np.abs(g)):.2e}, "
            f"max|g'|={np.max(np.abs(gd)):.2e}"
        )


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    W: np.ndarray  # arc weights, shape (n, n_arcs)
    lam: np.ndarray
    drift: np.ndarray
    final: ELState
    max_drift: float

    def write_csv(self, cnet: ConstraintNet, path: str | Path) -> None:
        """Columns: ``t``, ``x0..``, ``w_j_k`` per arc, ``lam0..``, ``drift``."""
        head = (["t"] + [f"x{i}" for i in range(cnet.nu)]
                + [f"w_{j}_{k}" for j, k in cnet.arcs]
                + [f"lam{i}" for i in range(cnet.nu)] + ["drift"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for i in range(len(self.t)):
                w.writerow([repr(float(v)) for v in
                            np.concatenate([[self.t[i]], self.x[i], self.W[i], self.lam[i], [self.drift[i]]])])


def integrate(
    cnet: ConstraintNet,
    state0: ELState,
    dt: float,
    steps: int,
    loss: LossSpec = HALF_SQUARED,
    stabilize: float | None = None,
    abort_drift: float = 1e-2,
    record_every: int = 1,
) -> Trajectory:
    """Classical RK4 on ``(x, w, xdot, wdot)`` with a fixed step.

    ``drift`` holds ``max_i |g_i|`` at every recorded time, starting with
    the initial state; ``max_drift`` is the peak over all steps.
    """
    _require_feedforward(cnet)
    check_consistent(cnet, state0)
    nu, nA = cnet.nu, cnet.n_arcs
    base = state0.copy()

    def pack(s: ELState) -> np.ndarray:
        return np.concatenate([s.x, cnet.weights_of(s.W), s.xdot, cnet.weights_of(s.Wdot)])

    def unpack(y: np.ndarray, t: float) -> ELState:
        return replace(base, x=y[:nu], W=cnet.matrix_of(y[nu:nu + nA]),
                       xdot=y[nu + nA:2 * nu + nA], Wdot=cnet.matrix_of(y[2 * nu + nA:]), t=t)

    rhs = _FusedRhs(cnet, state0, loss, stabilize)

    def f(t: float, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x, w = y[:nu], y[nu:nu + nA]
        xd, wd = y[nu + nA:2 * nu + nA], y[2 * nu + nA:]
        xdd, wdd, lam = rhs(t, x, w, xd, wd)
        return np.concatenate([xd, wd, xdd, wdd]), lam

    y = pack(state0)
    t = state0.t
    k1, lam = f(t, y)
    ts, xs, ws, lams, drifts = [t], [y[:nu].copy()], [y[nu:nu + nA].copy()], [lam], [rhs.drift()]
    peak = drifts[0]
    for n in range(1, steps + 1):
        k2, _ = f(t + dt / 2, y + dt / 2 * k1)
        k3, _ = f(t + dt / 2, y + dt / 2 * k2)
        k4, _ = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = state0.t + n * dt
        k1, lam = f(t, y)
        d = rhs.drift()
        if not math.isfinite(d) or d > abort_drift:
            raise DivergenceError(f"constraint drift {d:.3e} at t={t:.4f} exceeds {abort_drift:.1e}")
        peak = max(peak, d)
        if n % record_every == 0 or n == steps:
            ts.append(t)
            xs.append(y[:nu].copy())
            ws.append(y[nu:nu + nA].copy())
            lams.append(lam)
            drifts.append(d)
    return Trajectory(np.array(ts), np.array(xs), np.array(ws), np.array(lams),
                      np.array(drifts), unpack(y, t), peak)
