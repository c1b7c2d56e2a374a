"""Backprop as forward/backward waves in time-delayed networks, and the
constrained Lagrangian dynamics whose massless limit recovers it."""

from .net import Activation, LayeredNet, ShapeError, affine_forward, new_layered
from .oracle import LossSpec, backprop_exact, forward_instant, grad_fd
from .signals import SignalSpec, sample, speed_measure
from .wave import (
    WaveGradient,
    WaveState,
    frame_mismatch,
    run,
    sync_delay,
    sync_interval,
    sync_layer,
    tick,
)

__version__ = "0.1.0"
