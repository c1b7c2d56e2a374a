"""Paired input/supervision streams with a tunable rate of change.

Three shapes are supported: a constant pair, a staircase of levels joined by
linear ramps, and a sinusoid around a base pair. ``sample`` is evaluated on
integer ticks; constant and sinusoid streams also expose a continuous-time
value with analytic first and second derivatives for the ODE side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _vec(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


@dataclass(frozen=True, eq=False)
class SignalSpec:
    kind: str
    u: np.ndarray = field(default_factory=lambda: np.zeros(1))
    y: np.ndarray = field(default_factory=lambda: np.zeros(1))
    # stepwise: list of (u, y) levels visited cyclically
    levels: tuple[tuple[np.ndarray, np.ndarray], ...] = ()
    dwell: int = 1
    ramp: int = 1
    amplitude: float = 0.0
    period: float = math.inf

    def __post_init__(self):
        if self.kind not in ("constant", "stepwise", "sinusoid"):
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.kind == "stepwise":
            if len(self.levels) < 1:
                raise ValueError("stepwise signal needs at least one level")
            if self.dwell < 1 or self.ramp < 1:
                raise ValueError("dwell and ramp must be at least one tick")
        if self.kind == "sinusoid" and not self.period > 0:
            raise ValueError("period must be positive")

    @classmethod
    def constant(cls, u, y) -> "SignalSpec":
        return cls("constant", u=_vec(u), y=_vec(y))

    @classmethod
    def sinusoid(cls, u, y, amplitude: float, period: float) -> "SignalSpec":
        """``(u, y) + amplitude * sin(2 pi t / period)``, an infinite period meaning constant."""
        return cls("sinusoid", u=_vec(u), y=_vec(y), amplitude=float(amplitude), period=float(period))

    @classmethod
    def stepwise(cls, levels: Sequence, dwell: int, ramp: int = 1) -> "SignalSpec":
        """Hold each ``(u, y)`` level for ``dwell`` ticks, then move to the next over ``ramp`` ticks.

        The level list is cycled.
        """
        lv = tuple((_vec(u), _vec(y)) for u, y in levels)
        first = lv[0]
        return cls("stepwise", u=first[0], y=first[1], levels=lv, dwell=int(dwell), ramp=int(ramp))

    @property
    def input_width(self) -> int:
        return self.u.shape[0]

    @property
    def output_width(self) -> int:
        return self.y.shape[0]

    def _phase(self, t) -> float:
        if math.isinf(self.period):
            return 0.0
        return 2.0 * math.pi * math.fmod(t, self.period) / self.period

    def sample(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """The pair ``(u_t, y_t)``; a pure function of ``(spec, t)``."""
        if t < 0:
            raise ValueError("ticks start at zero")
        if self.kind == "constant":
            return self.u.copy(), self.y.copy()
        if self.kind == "sinusoid":
            s = self.amplitude * math.sin(self._phase(t))
            return self.u + s, self.y + s
        cycle = self.dwell + self.ramp
        k, r = divmod(int(t), cycle)
        cur = self.levels[k % len(self.levels)]
        nxt = self.levels[(k + 1) % len(self.levels)]
        if r < self.dwell:
            return cur[0].copy(), cur[1].copy()
        a = (r - self.dwell + 1) / self.ramp
        return (1 - a) * cur[0] + a * nxt[0], (1 - a) * cur[1] + a * nxt[1]

    # continuous time, used by the constraint dynamics

    def _continuous(self, t: float, order: int) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "constant" or (self.kind == "sinusoid" and math.isinf(self.period)):
            if order == 0:
                return self.u.copy(), self.y.copy()
            return np.zeros_like(self.u), np.zeros_like(self.y)
        if self.kind != "sinusoid":
            raise ValueError("only constant and sinusoid signals are differentiable")
        w = 2.0 * math.pi / self.period
        ph = self._phase(t)
        if order == 0:
            s = self.amplitude * math.sin(ph)
            return self.u + s, self.y + s
        if order == 1:
            s = self.amplitude * w * math.cos(ph)
        else:
            s = -self.amplitude * w * w * math.sin(ph)
        return np.full_like(self.u, s), np.full_like(self.y, s)

    def jet(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(u, udot, uddot, y)`` at time ``t`` in one evaluation."""
        if self.kind == "constant" or (self.kind == "sinusoid" and math.isinf(self.period)):
            z = np.zeros_like(self.u)
            return self.u.copy(), z, z.copy(), self.y.copy()
        if self.kind != "sinusoid":
            raise ValueError("only constant and sinusoid signals are differentiable")
        w = 2.0 * math.pi / self.period
        ph = self._phase(t)
        a = self.amplitude
        sn = a * math.sin(ph)
        d1 = np.empty(self.u.shape[0])
        d1.fill(a * w * math.cos(ph))
        d2 = np.empty(self.u.shape[0])
        d2.fill(-w * w * sn)
        return self.u + sn, d1, d2, self.y + sn

    def value(self, t: float):
        return self._continuous(t, 0)

    def derivative(self, t: float):
        return self._continuous(t, 1)

    def second_derivative(self, t: float):
        return self._continuous(t, 2)

    def to_dict(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.kind == "stepwise":
            doc["levels"] = [[u.tolist(), y.tolist()] for u, y in self.levels]
            doc.update(dwell=self.dwell, ramp=self.ramp)
        else:
            doc.update(u=self.u.tolist(), y=self.y.tolist())
        if self.kind == "sinusoid":
            doc.update(amplitude=self.amplitude,
                       period=None if math.isinf(self.period) else self.period)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SignalSpec":
        kind = doc["kind"]
        if kind == "constant":
            return cls.constant(doc["u"], doc["y"])
        if kind == "sinusoid":
            period = doc.get("period")
            return cls.sinusoid(doc["u"], doc["y"], doc.get("amplitude", 0.0),
                                math.inf if period is None else period)
        if kind == "stepwise":
            return cls.stepwise(doc["levels"], doc["dwell"], doc.get("ramp", 1))
        raise ValueError(f"unknown signal kind {kind!r}")


def sample(spec: SignalSpec, t: int):
    return spec.sample(t)


def speed_measure(spec: SignalSpec, window: int, horizon: int | None = None) -> float:
    """Largest sup-norm change of ``(u, y)`` across ``window`` ticks.

    The maximum runs over start ticks ``0 .. horizon - 1``; by default one
    full period (or level cycle) is scanned, which covers every distinct
    window of a periodic stream.
    """
    if window < 1:
        raise ValueError("window must be at least one tick")
    if horizon is None:
        if spec.kind == "constant" or (spec.kind == "sinusoid" and math.isinf(spec.period)):
            horizon = 1
        elif spec.kind == "sinusoid":
            horizon = int(math.ceil(spec.period))
        else:
            horizon = (spec.dwell + spec.ramp) * len(spec.levels)
    best = 0.0
    for t in range(horizon):
        u0, y0 = spec.sample(t)
        u1, y1 = spec.sample(t + window)
        best = max(best, float(np.max(np.abs(u1 - u0))), float(np.max(np.abs(y1 - y0))))
    return best
