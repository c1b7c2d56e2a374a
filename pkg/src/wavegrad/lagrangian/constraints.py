"""Constraint networks on digraphs and the derivatives of their constraints.

Neuron ``j`` carries the constraint

    G^j = xi_j - e_j(tau)                    for input neurons (j < omega)
    G^j = xi_j - sigma(sum_k M[j, k] xi_k)   otherwise

with ``M[j, k]`` the weight on arc ``k -> j``. Indices are zero-based here
and in the JSON form. Only entries of ``M`` on declared arcs are dynamic.

Array conventions:

* ``jacobian_xi`` returns ``T`` with ``T[i, j] = dG^j / dxi_i``; upper
  triangular with unit diagonal for feedforward wiring.
* ``jacobian_M`` returns ``D`` with ``D[j, a, b] = dG^j / dM[a, b]``.
* ``jacobian_arcs`` restricts ``D`` to the arc list: ``(nu, n_arcs)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..net import Activation, LayeredNet, ShapeError
from ..signals import SignalSpec

RANK_RTOL = 1e-10


class NotFeedforwardError(ValueError):
    """The operation needs strictly lower-triangular wiring."""


@dataclass(frozen=True, eq=False)
class ConstraintNet:
    nu: int
    omega: int
    eta: int
    arcs: tuple[tuple[int, int], ...]
    M: np.ndarray
    activation: Activation
    signal: SignalSpec | None = None
    _rows: np.ndarray = field(init=False, repr=False)
    _cols: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (0 <= self.omega and 0 <= self.eta and self.omega + self.eta <= self.nu):
            raise ValueError(f"need omega + eta <= nu, got {self.omega}+{self.eta} > {self.nu}")
        M = np.array(self.M, dtype=float)
        if M.shape != (self.nu, self.nu):
            raise ShapeError(f"M has shape {M.shape}, expected ({self.nu}, {self.nu})")
        arcs = tuple(sorted({(int(j), int(k)) for j, k in self.arcs}))
        for j, k in arcs:
            if not (0 <= j < self.nu and 0 <= k < self.nu):
                raise ValueError(f"arc {k}->{j} out of range")
            if j == k:
                raise ValueError("self loops are not allowed in a simple digraph")
            if j < self.omega:
                raise ValueError(f"input neuron {j} cannot receive arc from {k}")
        mask = np.zeros((self.nu, self.nu), dtype=bool)
        if arcs:
            mask[tuple(np.array(arcs).T)] = True
        if np.any(M[~mask] != 0.0):
            raise ValueError("M has nonzero entries off the declared arcs")
        if self.signal is not None:
            if self.signal.input_width != self.omega:
                raise ShapeError("signal input width differs from omega")
            if self.eta and self.signal.output_width != self.eta:
                raise ShapeError("signal output width differs from eta")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "arcs", arcs)
        rows = np.array([a[0] for a in arcs], dtype=int)
        cols = np.array([a[1] for a in arcs], dtype=int)
        object.__setattr__(self, "_rows", rows)
        object.__setattr__(self, "_cols", cols)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def arc_index(self) -> tuple[np.ndarray, np.ndarray]:
        return self._rows, self._cols

    @property
    def outputs(self) -> range:
        return range(self.nu - self.eta, self.nu)

    @property
    def is_feedforward(self) -> bool:
        return all(k < j for j, k in self.arcs)

    def weights_of(self, M) -> np.ndarray:
        """Arc weights of ``M`` as a flat vector, in arc order."""
        return np.asarray(M, dtype=float)[self._rows, self._cols]

    def matrix_of(self, w) -> np.ndarray:
        M = np.zeros((self.nu, self.nu))
        M[self._rows, self._cols] = w
        return M

    def with_M(self, M) -> "ConstraintNet":
        return ConstraintNet(self.nu, self.omega, self.eta, self.arcs, np.array(M, dtype=float),
                             self.activation, self.signal)

    def with_signal(self, signal: SignalSpec) -> "ConstraintNet":
        return ConstraintNet(self.nu, self.omega, self.eta, self.arcs, self.M, self.activation, signal)

    def input_signal(self, tau: float, order: int = 0) -> np.ndarray:
        if self.omega == 0:
            return np.zeros(0)
        if self.signal is None:
            raise ValueError("constraint net has no input signal")
        fn = (self.signal.value, self.signal.derivative, self.signal.second_derivative)[order]
        return fn(tau)[0]

    def target(self, tau: float) -> np.ndarray:
        if self.eta == 0:
            return np.zeros(0)
        if self.signal is None:
            raise ValueError("constraint net has no supervision signal")
        return self.signal.value(tau)[1]

    def to_dict(self) -> dict:
        doc = {
            "nu": self.nu, "omega": self.omega, "eta": self.eta,
            "arcs": [list(a) for a in self.arcs],
            "M": self.M.tolist(),
            "activation": self.activation.name,
        }
        if self.signal is not None:
            doc["signal"] = self.signal.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ConstraintNet":
        signal = SignalSpec.from_dict(doc["signal"]) if "signal" in doc else None
        return cls(int(doc["nu"]), int(doc["omega"]), int(doc["eta"]),
                   tuple(tuple(a) for a in doc["arcs"]), np.array(doc["M"], dtype=float),
                   Activation.from_name(doc["activation"]), signal)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "ConstraintNet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def chain(weights: Sequence[float], activation: Activation | str = "tanh",
          signal: SignalSpec | None = None) -> ConstraintNet:
    """Neurons ``0 -> 1 -> ... -> n``: one input, one output, ``weights[i]`` on arc ``i -> i+1``."""
    if isinstance(activation, str):
        activation = Activation.from_name(activation)
    nu = len(weights) + 1
    M = np.zeros((nu, nu))
    arcs = []
    for i, w in enumerate(weights):
        M[i + 1, i] = w
        arcs.append((i + 1, i))
    return ConstraintNet(nu, 1, 1, tuple(arcs), M, activation, signal)


def layer_offsets(widths: Sequence[int]) -> list[int]:
    return list(np.concatenate([[0], np.cumsum(widths)]).astype(int))


def from_layered(net: LayeredNet, signal: SignalSpec | None = None) -> ConstraintNet:
    """Encode a layered net: layer ``l`` occupies neurons ``off[l] .. off[l+1]-1``."""
    off = layer_offsets(net.widths)
    nu = off[-1]
    M = np.zeros((nu, nu))
    arcs = []
    for l, W in enumerate(net.weights):
        r0, c0 = off[l + 1], off[l]
        M[r0:r0 + W.shape[0], c0:c0 + W.shape[1]] = W
        arcs.extend((r0 + i, c0 + j) for i in range(W.shape[0]) for j in range(W.shape[1]))
    return ConstraintNet(nu, net.widths[0], net.widths[-1], tuple(arcs), M, net.activation, signal)


def layer_blocks(net: LayeredNet, full) -> list[np.ndarray]:
    """Cut a ``nu x nu`` array back into per-layer ``W_l``-shaped blocks."""
    off = layer_offsets(net.widths)
    full = np.asarray(full)
    return [full[off[l + 1]:off[l + 2], off[l]:off[l + 1]].copy() for l in range(net.depth)]


def _split(cnet: ConstraintNet, xi, M):
    xi = np.asarray(xi, dtype=float)
    M = np.asarray(M, dtype=float)
    if xi.shape != (cnet.nu,) or M.shape != (cnet.nu, cnet.nu):
        raise ShapeError("state shapes do not match the constraint net")
    return xi, M


def preactivation(cnet: ConstraintNet, xi, M) -> np.ndarray:
    xi, M = _split(cnet, xi, M)
    return M @ xi


def eval_constraints(cnet: ConstraintNet, tau: float, xi, M) -> np.ndarray:
    xi, M = _split(cnet, xi, M)
    w = cnet.omega
    G = xi - cnet.activation.value(M @ xi)
    G[:w] = xi[:w] - cnet.input_signal(tau)
    return G


def constraint_tau(cnet: ConstraintNet, tau: float) -> np.ndarray:
    """``dG/dtau``: only input neurons depend on time."""
    g = np.zeros(cnet.nu)
    g[:cnet.omega] = -cnet.input_signal(tau, 1)
    return g


def constraint_tautau(cnet: ConstraintNet, tau: float) -> np.ndarray:
    g = np.zeros(cnet.nu)
    g[:cnet.omega] = -cnet.input_signal(tau, 2)
    return g


def jacobian_xi(cnet: ConstraintNet, xi, M) -> np.ndarray:
    xi, M = _split(cnet, xi, M)
    s1 = cnet.activation.d1(M @ xi)
    # T[i, j] = delta_ij - sigma'(a_j) M[j, i] for non-input j
    T = -(s1[:, None] * M).T
    T[:, :cnet.omega] = 0.0
    T[np.diag_indices(cnet.nu)] += 1.0
    return T


def jacobian_M(cnet: ConstraintNet, xi, M) -> np.ndarray:
    xi, M = _split(cnet, xi, M)
    nu = cnet.nu
    s1 = cnet.activation.d1(M @ xi)
    D = np.zeros((nu, nu, nu))
    j = np.arange(cnet.omega, nu)
    D[j, j, :] = -s1[j, None] * xi[None, :]
    return D


def jacobian_arcs(cnet: ConstraintNet, xi, M) -> np.ndarray:
    """``dG^j / dw_p`` for arc weights ``w_p = M[r_p, c_p]``; shape ``(nu, n_arcs)``."""
    xi, M = _split(cnet, xi, M)
    rows, cols = cnet.arc_index
    s1 = cnet.activation.d1(M @ xi)
    GW = np.zeros((cnet.nu, cnet.n_arcs))
    GW[rows, np.arange(cnet.n_arcs)] = -s1[rows] * xi[cols]
    return GW


def hessians(cnet: ConstraintNet, xi, M) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense second derivatives in the (xi, arc-weight) coordinates.

    Returns ``(Hxx, HxW, HWW)`` shaped ``(nu, nu, nu)``, ``(nu, nu, n_arcs)``
    and ``(nu, n_arcs, n_arcs)``; the leading index is the constraint.
    Meant for small nets and verification; the dynamics use the contracted
    forms in :func:`curvature`.
    """
    xi, M = _split(cnet, xi, M)
    nu, nA = cnet.nu, cnet.n_arcs
    rows, cols = cnet.arc_index
    a = M @ xi
    s1 = cnet.activation.d1(a)
    s2 = cnet.activation.d2(a)
    Hxx = np.zeros((nu, nu, nu))
    HxW = np.zeros((nu, nu, nA))
    HWW = np.zeros((nu, nA, nA))
    for j in range(cnet.omega, nu):
        Hxx[j] = -s2[j] * np.outer(M[j], M[j])
        mine = np.flatnonzero(rows == j)
        for p in mine:
            b = cols[p]
            HxW[j, :, p] = -s2[j] * M[j] * xi[b]
            HxW[j, b, p] -= s1[j]
            HWW[j, p, mine] = -s2[j] * xi[b] * xi[cols[mine]]
    return Hxx, HxW, HWW


def curvature(cnet: ConstraintNet, tau: float, xi, M, xdot, Mdot) -> np.ndarray:
    """Velocity-quadratic part of the second time derivative of every constraint.

    ``G_tt + 2 (G_tx xdot + G_tw wdot + G_xw xdot wdot) + G_xx xdot xdot + G_ww wdot wdot``;
    the mixed time terms vanish because time enters through inputs only.
    """
    xi, M = _split(cnet, xi, M)
    xdot = np.asarray(xdot, dtype=float)
    Mdot = np.asarray(Mdot, dtype=float)
    a = M @ xi
    s1 = cnet.activation.d1(a)
    s2 = cnet.activation.d2(a)
    Mx = M @ xdot
    Dx = Mdot @ xi
    Dxd = Mdot @ xdot
    c_xx = -s2 * Mx**2
    c_xw = -(s2 * Mx * Dx + s1 * Dxd)
    c_ww = -s2 * Dx**2
    c = c_xx + 2.0 * c_xw + c_ww
    c[:cnet.omega] = 0.0
    return constraint_tautau(cnet, tau) + c


def check_full_rank(cnet: ConstraintNet, xi, M, rtol: float = RANK_RTOL) -> bool:
    """Rank test on the stacked Jacobian ``[G_xi; G_w]`` (``nu + n_arcs`` rows, ``nu`` columns)."""
    J = np.vstack([jacobian_xi(cnet, xi, M), jacobian_arcs(cnet, xi, M).T])
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return cnet.nu == 0
    return int(np.sum(s > rtol * s[0])) == cnet.nu


def gram_posdef_check(vectors, rtol: float = RANK_RTOL) -> bool:
    """Positive definiteness of the Gram matrix of ``vectors`` (one per row).

    Uses the pivots of an unpivoted Cholesky sweep; fails as soon as a pivot
    drops to ``rtol`` times the largest diagonal entry.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    return posdef_pivots(V @ V.T, rtol) is not None


def posdef_pivots(A, rtol: float = RANK_RTOL) -> np.ndarray | None:
    """Cholesky pivots of symmetric ``A``, or ``None`` when one is below ``rtol * max(diag)``."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    scale = float(np.max(np.abs(np.diag(A)))) if n else 0.0
    if n and scale == 0.0:
        return None
    pivots = np.empty(n)
    for k in range(n):
        p = A[k, k]
        if not p > rtol * scale:
            return None
        pivots[k] = p
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:]) / p
    return pivots
