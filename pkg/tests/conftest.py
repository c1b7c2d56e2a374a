import numpy as np
import pytest

from wavegrad.net import new_layered


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_net():
    return new_layered([3, 4, 2], "tanh", init=7)


def random_io(net, seed):
    r = np.random.default_rng(seed)
    return r.uniform(-1, 1, net.widths[0]), r.uniform(-1, 1, net.widths[-1])


def random_cnet(seed, nu=None, activation="tanh", period=7.0):
    """Random feedforward constraint net: arcs run from lower to higher index."""
    from wavegrad.lagrangian import ConstraintNet
    from wavegrad.net import Activation
    from wavegrad.signals import SignalSpec

    r = np.random.default_rng(seed)
    nu = int(r.integers(2, 9)) if nu is None else nu
    omega = int(r.integers(1, nu))
    eta = int(r.integers(1, nu - omega + 1))
    arcs = [(j, k) for j in range(omega, nu) for k in range(j) if r.random() < 0.6]
    # every computed neuron gets at least one incoming arc
    have = {j for j, _ in arcs}
    arcs += [(j, int(r.integers(0, j))) for j in range(omega, nu) if j not in have]
    M = np.zeros((nu, nu))
    for j, k in arcs:
        M[j, k] = r.uniform(-1, 1)
    sig = SignalSpec.sinusoid(r.uniform(-1, 1, omega), r.uniform(-1, 1, eta), 0.4, period)
    return ConstraintNet(nu, omega, eta, tuple(arcs), M, Activation.from_name(activation), sig)


def random_state(cnet, seed, t=0.3):
    """Constraint-satisfying outputs with random velocities."""
    from wavegrad.lagrangian import ELState, forward_solve

    r = np.random.default_rng([seed, 9])
    x = forward_solve(cnet, cnet.M, t)
    Wd = cnet.matrix_of(r.normal(size=cnet.n_arcs))
    return ELState(x, r.normal(size=cnet.nu), cnet.M.copy(), Wd, t,
                   m_x=float(r.uniform(0.5, 2)), m_W=float(r.uniform(0.5, 2)),
                   theta=float(r.uniform(0, 1)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
