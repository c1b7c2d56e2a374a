"""Forward and backward waves in a network whose layers each take one tick.

Layer ``l+1`` receives ``sigma(W_l x_l)`` one tick after ``x_l`` was there,
and the delta error descends one layer per tick. The per-layer weight
gradient is the outer product of whatever delta and activation happen to be
co-resident at that layer, so an input frame and a supervision frame meet
with a lag that depends on the layer.

Time bookkeeping: a fresh state sits at ``t = -1`` with every slot empty.
Each :func:`tick` advances ``t`` by one and loads the sample for the new
time into the input slot, so ``u_0`` enters at ``t = 0``, reaches layer
``l`` at ``t = l`` and the first output delta is formed at ``t = L``.
"""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .net import LayeredNet, ShapeError
from .oracle import HALF_SQUARED, LossSpec, backprop_exact, relative_error
from .signals import SignalSpec

EMPTY = None


@dataclass
class WaveState:
    t: int
    x: list[np.ndarray]
    pre: list[np.ndarray]
    delta: list[np.ndarray]
    x_frame: list[int | None]
    delta_frame: list[int | None]

    @classmethod
    def empty(cls, net: LayeredNet) -> "WaveState":
        n = net.widths
        L = net.depth
        return cls(
            t=-1,
            x=[np.zeros(k) for k in n],
            pre=[np.zeros(k) for k in n],
            delta=[np.zeros(k) for k in n],
            x_frame=[EMPTY] * (L + 1),
            delta_frame=[EMPTY] * (L + 1),
        )

    @property
    def depth(self) -> int:
        return len(self.x) - 1

    @property
    def filled_fwd(self) -> list[bool]:
        return [f is not EMPTY for f in self.x_frame]

    @property
    def filled_bwd(self) -> list[bool]:
        # the input slot never carries a delta
        return [l > 0 and f is not EMPTY for l, f in enumerate(self.delta_frame)]

    def snapshot(self) -> "WaveState":
        return copy.deepcopy(self)


@dataclass
class WaveGradient:
    """Co-resident products ``g[l] = delta[l] x[l-1]^T`` for ``l = 1..L``.

    Lists are indexed by layer; slot 0 is unused and holds ``None``.
    """

    t: int
    g: list[np.ndarray | None]
    valid: list[bool]
    frame_fwd: list[int | None]
    frame_bwd: list[int | None]

    def frame_gap(self, l: int) -> int | None:
        """``frame_bwd - frame_fwd``, i.e. ``(l-1) - (L-l)`` once valid."""
        if not self.valid[l]:
            return None
        return self.frame_bwd[l] - self.frame_fwd[l]


class AccessLog:
    """Records ``(layer, field)`` reads made while a tick computes one layer."""

    def __init__(self):
        self.reads: dict[tuple[str, int], set[tuple[str, int]]] = {}

    def record(self, target: tuple[str, int], source: tuple[str, int]) -> None:
        self.reads.setdefault(target, set()).add(source)




def tick(
    net: LayeredNet,
    state: WaveState,
    u,
    y,
    loss: LossSpec = HALF_SQUARED,
    log: AccessLog | None = None,
) -> WaveGradient:
    """Advance every wave by one layer, in place, and return the new gradients.

    All new values are computed from the old state before anything is
    committed, so each value moves exactly one layer.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != (net.widths[0],):
        raise ShapeError(f"input has shape {u.shape}, expected ({net.widths[0]},)")
    if y.shape != (net.widths[-1],):
        raise ShapeError(f"target has shape {y.shape}, expected ({net.widths[-1]},)")
    if state.depth != net.depth:
        raise ShapeError("state and net disagree on depth")
    L = net.depth
    act = net.activation
    t_new = state.t + 1

    x_new = [u.copy()] + [None] * L
    pre_new = [np.zeros_like(u)] + [None] * L
    xf_new: list[int | None] = [t_new] + [EMPTY] * L
    for l in range(L):
        # layer l+1 reads only layer l and W_l
        pre_new[l + 1] = net.weights[l] @ state.x[l]
        x_new[l + 1] = act.value(pre_new[l + 1])
        xf_new[l + 1] = state.x_frame[l]
        if log is not None:
            log.record(("x", l + 1), ("x", l))
            log.record(("x", l + 1), ("W", l))

    d_new = [np.zeros(k) for k in net.widths]
    df_new: list[int | None] = [EMPTY] * (L + 1)
    for l in range(1, L):
        # layer l reads delta[l+1], W_l and its own pre-activation
        d_new[l] = act.d1(state.pre[l]) * (net.weights[l].T @ state.delta[l + 1])
        if state.delta_frame[l + 1] is not EMPTY and state.x_frame[l] is not EMPTY:
            df_new[l] = state.delta_frame[l + 1]
        if log is not None:
            log.record(("delta", l), ("delta", l + 1))
            log.record(("delta", l), ("W", l))
            log.record(("delta", l), ("x", l))
    # output delta uses the activation arriving at the top in this same tick
    d_new[L] = loss.grad(x_new[L], y) * act.d1(pre_new[L])
    if xf_new[L] is not EMPTY:
        df_new[L] = t_new
    if log is not None:
        log.record(("delta", L), ("x", L - 1))
        log.record(("delta", L), ("W", L - 1))

    state.t = t_new
    state.x, state.pre, state.x_frame = x_new, pre_new, xf_new
    state.delta, state.delta_frame = d_new, df_new
    return gradient_of(state)


def gradient_of(state: WaveState) -> WaveGradient:
    L = state.depth
    g: list[np.ndarray | None] = [None] * (L + 1)
    valid = [False] * (L + 1)
    ff: list[int | None] = [None] * (L + 1)
    fb: list[int | None] = [None] * (L + 1)
    for l in range(1, L + 1):
        g[l] = np.outer(state.delta[l], state.x[l - 1])
        ff[l] = state.x_frame[l - 1]
        fb[l] = state.delta_frame[l]
        valid[l] = ff[l] is not EMPTY and fb[l] is not EMPTY
    return WaveGradient(state.t, g, valid, ff, fb)


@dataclass
class TraceRecord:
    state: WaveState
    grad: WaveGradient
    reference: list[np.ndarray] | None = None
    rel_err: list[float | None] = field(default_factory=list)
    # weights after this tick's update, when learning
    weights: list[np.ndarray] | None = None


def reference_frame(t: int, L: int) -> int:
    """Frame whose exact gradient a wave gradient at time ``t`` is scored against.

    Forward and backward frame tags at layer ``l`` sit symmetrically around
    ``t - (L-1)/2`` for odd ``L``, which is also the frame handled exactly at
    the synchronization layer.
    """
    return t - (L - 1) // 2


def run(
    net: LayeredNet,
    spec: SignalSpec,
    ticks: int,
    learn: float | None = None,
    loss: LossSpec = HALF_SQUARED,
    score: bool = True,
) -> tuple[list[TraceRecord], LayeredNet]:
    """Drive ``ticks`` ticks of ``spec`` through a fresh state.

    With ``learn`` set, every valid ``g[l]`` is applied as
    ``W_{l-1} -= learn * g[l]`` right after the tick that produced it.
    With ``score``, each record carries the relative error of every valid
    layer against the exact gradient of :func:`reference_frame`.
    Returns the trace and the final network.
    """
    if ticks < 1:
        raise ValueError("ticks must be at least 1")
    state = WaveState.empty(net)
    trace: list[TraceRecord] = []
    L = net.depth
    for _ in range(ticks):
        u, y = spec.sample(state.t + 1)
        wg = tick(net, state, u, y, loss)
        rec = TraceRecord(state.snapshot(), wg)
        if score:
            f = reference_frame(wg.t, L)
            if f >= 0:
                ur, yr = spec.sample(f)
                rec.reference = backprop_exact(net, ur, yr, loss)
            rec.rel_err = [None] + [
                relative_error(wg.g[l], rec.reference[l - 1])
                if wg.valid[l] and rec.reference is not None else None
                for l in range(1, L + 1)
            ]
        trace.append(rec)
        if learn is not None and any(wg.valid[1:]):
            weights = [W.copy() for W in net.weights]
            for l in range(1, L + 1):
                if wg.valid[l]:
                    weights[l - 1] -= learn * wg.g[l]
            net = net.with_weights(weights)
        if learn is not None:
            rec.weights = [W.copy() for W in net.weights]
    return trace, net


def sync_layer(L: int) -> int | None:
    """Layer where forward and backward step counts coincide, if any."""
    if L < 1:
        raise ValueError("depth must be positive")
    return (L + 1) // 2 if L % 2 else None


def frame_mismatch(l: int, L: int) -> int:
    """``|(l-1) - (L-l)|``: forward steps versus backward steps at layer ``l``."""
    if not 1 <= l <= L:
        raise ValueError(f"layer {l} outside 1..{L}")
    return abs((l - 1) - (L - l))


def sync_interval(tau_s: float, L: int) -> float:
    """Per-layer tick ``dt`` for which ``tau_s = (L-1) dt``."""
    if L < 2:
        raise ValueError("need at least two layers")
    if not tau_s > 0:
        raise ValueError("tau_s must be positive")
    return tau_s / (L - 1)


def sync_delay(L: int) -> int:
    if L < 1 or L % 2 == 0:
        raise ValueError("synchronization delay is defined for odd depth only")
    return (L - 1) // 2


CSV_COLUMNS = (
    "t", "l", "frame_fwd", "frame_bwd", "valid",
    "x_norm", "delta_norm", "g_norm", "rel_err_vs_oracle",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_trace_csv(trace: Sequence[TraceRecord], path: str | Path) -> None:
    """One row per tick per layer ``1..L``; empty cells mark missing values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rec in trace:
            st, wg = rec.state, rec.grad
            for l in range(1, st.depth + 1):
                err = rec.rel_err[l] if rec.rel_err else None
                w.writerow([_fmt(v) for v in (
                    wg.t, l, wg.frame_fwd[l], wg.frame_bwd[l], wg.valid[l],
                    float(np.linalg.norm(st.x[l])), float(np.linalg.norm(st.delta[l])),
                    float(np.linalg.norm(wg.g[l])), err,
                )])


def frames_document(trace: Iterable[TraceRecord]) -> dict:
    frames = []
    depth = 0
    for rec in trace:
        st = rec.state
        depth = st.depth
        frames.append({
            "t": st.t,
            "x_frame": st.x_frame,
            "delta_frame": st.delta_frame,
            "filled_fwd": st.filled_fwd,
            "filled_bwd": st.filled_bwd,
        })
    return {"depth": depth, "frames": frames}


def write_frames_json(trace: Iterable[TraceRecord], path: str | Path) -> None:
    Path(path).write_text(json.dumps(frames_document(trace), indent=1))
