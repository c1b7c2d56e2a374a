import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavegrad.lagrangian import (
    ConstraintNet,
    chain,
    check_full_rank,
    constraint_tau,
    constraint_tautau,
    curvature,
    eval_constraints,
    from_layered,
    gram_posdef_check,
    hessians,
    jacobian_arcs,
    jacobian_M,
    jacobian_xi,
    layer_blocks,
    posdef_pivots,
)
from wavegrad.lagrangian.constraints import layer_offsets
from wavegrad.net import ShapeError, TANH, new_layered
from wavegrad.signals import SignalSpec

from conftest import random_cnet


def _point(cnet, seed):
    r = np.random.default_rng(seed)
    return r.uniform(-1, 1, cnet.nu), cnet.M.copy()


def test_chain_layout():
    c = chain([0.5, -0.2, 0.3])
    assert (c.nu, c.omega, c.eta) == (4, 1, 1)
    assert c.arcs == ((1, 0), (2, 1), (3, 2))
    assert c.M[2, 1] == -0.2
    assert list(c.outputs) == [3]
    assert c.is_feedforward


def test_validation():
    M = np.zeros((3, 3))
    with pytest.raises(ValueError):
        ConstraintNet(3, 2, 2, ((2, 0),), M, TANH)
    with pytest.raises(ValueError):
        ConstraintNet(3, 1, 1, ((1, 1),), M, TANH)
    with pytest.raises(ValueError):
        ConstraintNet(3, 1, 1, ((0, 1),), M, TANH)
    bad = M.copy()
    bad[2, 0] = 1.0
    with pytest.raises(ValueError):
        ConstraintNet(3, 1, 1, ((1, 0),), bad, TANH)
    with pytest.raises(ShapeError):
        ConstraintNet(3, 1, 1, (), np.zeros((2, 2)), TANH)
    with pytest.raises(ShapeError):
        chain([0.1], signal=SignalSpec.constant([0.0, 0.0], [0.0]))


def test_cyclic_net_is_not_feedforward():
    M = np.zeros((3, 3))
    M[1, 2] = M[2, 1] = 0.5
    assert not ConstraintNet(3, 1, 1, ((1, 2), (2, 1)), M, TANH).is_feedforward


def test_json_roundtrip(tmp_path):
    c = random_cnet(3)
    c.save(tmp_path / "c.json")
    assert set(json.loads((tmp_path / "c.json").read_text())) == {
        "nu", "omega", "eta", "arcs", "M", "activation", "signal"}
    back = ConstraintNet.load(tmp_path / "c.json")
    assert back.arcs == c.arcs
    np.testing.assert_array_equal(back.M, c.M)
    np.testing.assert_array_equal(back.input_signal(1.1), c.input_signal(1.1))


def test_weights_roundtrip():
    c = random_cnet(4)
    np.testing.assert_array_equal(c.matrix_of(c.weights_of(c.M)), c.M)


def test_from_layered_blocks():
    net = new_layered([2, 3, 2], init=1)
    c = from_layered(net)
    assert layer_offsets(net.widths) == [0, 2, 5, 7]
    assert c.n_arcs == 2 * 3 + 3 * 2
    for W, B in zip(net.weights, layer_blocks(net, c.M)):
        np.testing.assert_array_equal(W, B)


def test_constraints_vanish_on_forward_solution():
    net = new_layered([2, 3, 1], init=2)
    sig = SignalSpec.sinusoid([0.1, 0.2], [0.0], 0.5, 6.0)
    c = from_layered(net, sig)
    from wavegrad.lagrangian import forward_solve
    x = forward_solve(c, c.M, 0.8)
    assert np.max(np.abs(eval_constraints(c, 0.8, x, c.M))) < 1e-15


@pytest.mark.parametrize("seed", range(5))
def test_jacobians_match_finite_differences(seed):
    c = random_cnet(seed)
    xi, M = _point(c, seed)
    h = 1e-6
    T = jacobian_xi(c, xi, M)
    for i in range(c.nu):
        e = np.zeros(c.nu)
        e[i] = h
        fd = (eval_constraints(c, 0.2, xi + e, M) - eval_constraints(c, 0.2, xi - e, M)) / (2 * h)
        np.testing.assert_allclose(T[i], fd, atol=1e-9)
    GW = jacobian_arcs(c, xi, M)
    w = c.weights_of(M)
    for p in range(c.n_arcs):
        e = np.zeros(c.n_arcs)
        e[p] = h
        fd = (eval_constraints(c, 0.2, xi, c.matrix_of(w + e))
              - eval_constraints(c, 0.2, xi, c.matrix_of(w - e))) / (2 * h)
        np.testing.assert_allclose(GW[:, p], fd, atol=1e-9)
    D = jacobian_M(c, xi, M)
    rows, cols = c.arc_index
    np.testing.assert_allclose(D[:, rows, cols], GW, atol=0)


def test_time_derivatives():
    c = random_cnet(8)
    xi, M = _point(c, 8)
    t, h = 0.4, 1e-5
    fd = (eval_constraints(c, t + h, xi, M) - eval_constraints(c, t - h, xi, M)) / (2 * h)
    np.testing.assert_allclose(constraint_tau(c, t), fd, atol=1e-9)
    fd2 = (constraint_tau(c, t + h) - constraint_tau(c, t - h)) / (2 * h)
    np.testing.assert_allclose(constraint_tautau(c, t), fd2, atol=1e-8)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("act", ["tanh", "logistic"])
def test_curvature_is_second_derivative_along_a_line(seed, act):
    # along x(s) = xi + s xdot, w(s) = w + s wdot, g''(0) is exactly the curvature
    c = random_cnet(seed, activation=act)
    xi, M = _point(c, seed + 100)
    r = np.random.default_rng(seed)
    xd = r.normal(size=c.nu)
    Md = c.matrix_of(r.normal(size=c.n_arcs))
    t, h = 0.3, 1e-4

    def g(s):
        return eval_constraints(c, t + s, xi + s * xd, M + s * Md)

    fd = (g(h) - 2 * g(0) + g(-h)) / h**2
    np.testing.assert_allclose(curvature(c, t, xi, M, xd, Md), fd, rtol=1e-6, atol=1e-6)

    Hxx, HxW, HWW = hessians(c, xi, M)
    wd = c.weights_of(Md)
    dense = (constraint_tautau(c, t) + np.einsum("jab,a,b->j", Hxx, xd, xd)
             + 2 * np.einsum("jap,a,p->j", HxW, xd, wd) + np.einsum("jpq,p,q->j", HWW, wd, wd))
    np.testing.assert_allclose(curvature(c, t, xi, M, xd, Md), dense, atol=1e-13)


def test_pivots_and_gram():
    A = np.array([[4.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(posdef_pivots(A), [4.0, 2.0])
    assert posdef_pivots(np.array([[1.0, 1.0], [1.0, 1.0]])) is None
    assert posdef_pivots(np.zeros((2, 2))) is None
    assert gram_posdef_check(np.eye(3))
    assert not gram_posdef_check([[1.0, 2.0], [2.0, 4.0]])


def test_full_rank_at_zero_weights():
    # T is the identity here, so the stack is full rank even with no coupling
    c = chain([0.0, 0.0])
    assert check_full_rank(c, np.zeros(3), c.M)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_unit_triangular_and_full_rank(seed):
    c = random_cnet(seed)
    xi, M = _point(c, seed)
    T = jacobian_xi(c, xi, M)
    np.testing.assert_array_equal(np.diag(T), np.ones(c.nu))
    assert np.all(np.tril(T, -1) == 0)
    assert check_full_rank(c, xi, M)
