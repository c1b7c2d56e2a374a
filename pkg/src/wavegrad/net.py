"""Dense layered networks and the C2 activations they share."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_INIT_SCALE = 0.5


class ShapeError(ValueError):
    """Operand shapes do not chain."""


class ActivationKind(str, Enum):
    IDENTITY = "identity"
    LOGISTIC = "logistic"
    TANH = "tanh"


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class Activation:
    """A scalar nonlinearity with its first and second derivatives.

    All three maps act elementwise on arrays.
    """

    kind: ActivationKind

    @classmethod
    def from_name(cls, name: str | ActivationKind) -> "Activation":
        return cls(ActivationKind(name))

    @property
    def name(self) -> str:
        return self.kind.value

    def value(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind is ActivationKind.IDENTITY:
            return z.copy()
        if self.kind is ActivationKind.TANH:
            return np.tanh(z)
        return _logistic(z)

    def d1(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind is ActivationKind.IDENTITY:
            return np.ones_like(z)
        if self.kind is ActivationKind.TANH:
            return 1.0 - np.tanh(z) ** 2
        s = _logistic(z)
        return s * (1.0 - s)

    def d2(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind is ActivationKind.IDENTITY:
            return np.zeros_like(z)
        if self.kind is ActivationKind.TANH:
            th = np.tanh(z)
            return -2.0 * th * (1.0 - th**2)
        s = _logistic(z)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    def derivatives(self, z):
        """``(sigma, sigma', sigma'')`` evaluated together."""
        z = np.asarray(z, dtype=float)
        if self.kind is ActivationKind.IDENTITY:
            return z.copy(), np.ones_like(z), np.zeros_like(z)
        s = np.tanh(z) if self.kind is ActivationKind.TANH else _logistic(z)
        if self.kind is ActivationKind.TANH:
            d1 = 1.0 - s * s
            return s, d1, -2.0 * s * d1
        d1 = s * (1.0 - s)
        return s, d1, d1 * (1.0 - 2.0 * s)

    __call__ = value


IDENTITY = Activation(ActivationKind.IDENTITY)
LOGISTIC = Activation(ActivationKind.LOGISTIC)
TANH = Activation(ActivationKind.TANH)


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {v.shape}")
    return v


def affine_forward(W, x, act: Activation) -> np.ndarray:
    """Return ``act(W @ x)``."""
    W = np.asarray(W, dtype=float)
    x = _as_vector(x)
    if W.ndim != 2 or W.shape[1] != x.shape[0]:
        raise ShapeError(f"cannot apply matrix {W.shape} to vector {x.shape}")
    return act.value(W @ x)


@dataclass(frozen=True, eq=False)
class LayeredNet:
    """Weights ``W_0 .. W_{L-1}`` with ``W_l`` of shape ``(n_{l+1}, n_l)``.

    Treat instances as immutable; :meth:`with_weights` builds a modified copy.
    """

    widths: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    activation: Activation

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("a layered net needs at least two widths")
        if any(int(n) < 1 for n in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")
        if len(self.weights) != len(self.widths) - 1:
            raise ShapeError(
                f"{len(self.widths) - 1} weight matrices expected, got {len(self.weights)}"
            )
        for l, W in enumerate(self.weights):
            expected = (self.widths[l + 1], self.widths[l])
            if W.shape != expected:
                raise ShapeError(f"W_{l} has shape {W.shape}, expected {expected}")
            if not np.all(np.isfinite(W)):
                raise ValueError(f"W_{l} has non-finite entries")
            W.setflags(write=False)

    @property
    def depth(self) -> int:
        return len(self.weights)

    def with_weights(self, weights: Sequence[np.ndarray]) -> "LayeredNet":
        return LayeredNet(
            self.widths,
            tuple(np.array(W, dtype=float) for W in weights),
            self.activation,
        )

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "activation": self.activation.name,
            "weights": [W.tolist() for W in self.weights],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LayeredNet":
        widths = [int(n) for n in doc["widths"]]
        weights = [np.array(W, dtype=float).reshape(widths[l + 1], widths[l])
                   for l, W in enumerate(doc["weights"])]
        return new_layered(widths, doc["activation"], init=weights)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "LayeredNet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def new_layered(
    widths: Sequence[int],
    activation: Activation | str = "tanh",
    init: int | Sequence | None = None,
    scale: float = DEFAULT_INIT_SCALE,
) -> LayeredNet:
    """Build a layered net.

    ``init`` is either a seed (uniform weights in ``[-scale, scale]``), an
    explicit list of matrices, or ``None`` for seed 0.
    """
    widths = tuple(int(n) for n in widths)
    if len(widths) < 2:
        raise ValueError("widths must list at least the input and output layer")
    if isinstance(activation, str):
        activation = Activation.from_name(activation)
    if init is None or isinstance(init, (int, np.integer)):
        rng = np.random.default_rng(0 if init is None else int(init))
        weights = tuple(
            rng.uniform(-scale, scale, size=(widths[l + 1], widths[l]))
            for l in range(len(widths) - 1)
        )
    else:
        weights = tuple(np.array(W, dtype=float) for W in init)
    return LayeredNet(widths, weights, activation)
