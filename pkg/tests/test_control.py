import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import exhaustive_control
from scipy.linalg import expm

from symvar.control import (
    ControlProblem,
    ControlSignal,
    adjoint,
    bilinear_dynamics,
    box_candidates,
    control_distance,
    epsilon_optimal,
    expression_cost,
    expression_dynamics,
    linear_dynamics,
    needle_derivative_check,
    quadratic_cost,
    simulate,
)
from symvar.errors import Blowup, GridMismatch, HypothesesViolated
from symvar.group import named_group

SWAP = named_group("swap", 2)


def _scalar_problem():
    h, hg = quadratic_cost([0.0])
    return ControlProblem(lambda t, x, u: u.copy(), h, hg, [-1.0, 0.0, 1.0], [1.0], T=1.0, jac=lambda t, x, u: np.zeros((1, 1)))


def _swap_problem():
    h, hg = quadratic_cost([0.0, 0.0])
    K = [[-1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [1.0, -1.0]]
    return ControlProblem(lambda t, x, u: u.copy(), h, hg, K, [1.0, 1.0], T=1.0, jac=lambda t, x, u: np.zeros((2, 2)), group=SWAP)


def test_control_distance_examples():
    a = ControlSignal(np.arange(10) % 3, 2.0)
    assert control_distance(a, a) == 0.0
    b = ControlSignal(np.array([1, 2, 0, 0, 1, 2, 0, 1, 2, 0]), 2.0)
    c = ControlSignal(np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 0]), 2.0)
    assert control_distance(b, c) == pytest.approx(0.6)
    one = ControlSignal(np.zeros(4, int), 1.0)
    assert control_distance(one, ControlSignal(np.ones(4, int), 1.0)) == 1.0
    with pytest.raises(GridMismatch):
        control_distance(one, ControlSignal(np.zeros(5, int), 1.0))


def test_distance_compares_values_when_K_given():
    K = np.array([[1.0], [1.0], [2.0]])
    a, b = ControlSignal(np.array([0, 2]), 1.0), ControlSignal(np.array([1, 2]), 1.0)
    assert control_distance(a, b) == 0.5
    assert control_distance(a, b, K) == 0.0


def test_simulate_trivial_dynamics():
    h, hg = quadratic_cost([0.0, 0.0])
    zero = ControlProblem(lambda t, x, u: np.zeros(2), h, hg, [0.0], [3.0, -1.0])
    traj = simulate(zero, ControlSignal(np.zeros(5, int), 1.0))
    assert np.all(traj.states == [3.0, -1.0])
    const = ControlProblem(lambda t, x, u: np.array([u[0], 2 * u[0]]), h, hg, [0.7], [3.0, -1.0], T=2.5)
    traj = simulate(const, ControlSignal(np.zeros(7, int), 2.5))
    assert np.allclose(traj.final, [3.0 + 0.7 * 2.5, -1.0 + 1.4 * 2.5], rtol=0, atol=1e-14)


def test_simulate_exponential():
    h, hg = quadratic_cost([0.0])
    P = ControlProblem(lambda t, x, u: x.copy(), h, hg, [0.0], [1.5], T=1.0)
    traj = simulate(P, ControlSignal(np.zeros(64, int), 1.0))
    assert traj.final[0] == pytest.approx(1.5 * np.e, rel=1e-8)


def test_adjoint_matches_matrix_exponential():
    A = np.array([[0.0, 1.0, 0.0], [-2.0, -0.3, 0.5], [0.1, 0.0, -1.0]])
    f, jac = linear_dynamics(A, np.eye(3)[:, :1])
    h, hg = expression_cost("x1**2 + 3*x2 + x3**4", 3)
    P = ControlProblem(f, h, hg, [0.0, 1.0], [1.0, 0.5, -0.2], T=1.5, jac=jac)
    sig = ControlSignal(np.zeros(64, int), 1.5)
    traj = simulate(P, sig)
    adj = adjoint(P, traj, sig)
    pT = hg(traj.final)
    assert np.allclose(adj.p[-1], pT, atol=1e-10, rtol=0)
    for i in (0, 17, 100, len(adj.times) - 1):
        t = adj.times[i]
        assert np.allclose(adj.p[i], expm(A.T * (1.5 - t)) @ pT, rtol=1e-8, atol=1e-8)


def test_adjoint_trivial_cases():
    h, hg = quadratic_cost([2.0])
    P = ControlProblem(lambda t, x, u: u.copy(), h, hg, [-1.0, 1.0], [0.0], jac=lambda t, x, u: np.zeros((1, 1)))
    sig = ControlSignal(np.array([0, 1, 1, 0]), 1.0)
    traj = simulate(P, sig)
    adj = adjoint(P, traj, sig)
    assert np.all(adj.p == hg(traj.final))
    flat = ControlProblem(lambda t, x, u: x * u, lambda x: 5.0, lambda x: np.zeros(1), [-1.0, 1.0], [1.0], jac=lambda t, x, u: u.reshape(1, 1))
    traj = simulate(flat, sig)
    assert np.all(adjoint(flat, traj, sig).p == 0)


def test_scalar_problem_matches_exhaustive_oracle():
    P = _scalar_problem()
    res = epsilon_optimal(P, 1e-3, 8)
    best, arg = exhaustive_control(lambda x, u: x + u / 8, lambda x: float(x @ x), [1.0], P.K, 8)
    assert res.cost <= best + 1e-3
    assert np.all(res.signal.values(P.K) == -1.0)
    assert abs(res.trajectory.final[0]) <= 1e-14
    assert res.hamiltonian["max_slack"] <= 1e-3


def test_swap_problem_uses_invariant_values_only():
    P = _swap_problem()
    assert P.invariant_candidates().tolist() == [0, 1]
    res = epsilon_optimal(P, 1e-3, 8)
    vals = res.signal.values(P.K)
    assert all(v[0] == v[1] for v in vals)
    assert np.all(vals == -1.0)
    inv = P.K[P.invariant_candidates()]
    best, _ = exhaustive_control(lambda x, u: x + u / 8, lambda x: float(x @ x), [1.0, 1.0], inv, 8)
    assert res.cost <= best + 1e-3


def test_constant_cost_accepts_start():
    P = ControlProblem(lambda t, x, u: u.copy(), lambda x: 1.0, lambda x: np.zeros(1), [-1.0, 0.0, 1.0], [0.0])
    res = epsilon_optimal(P, 1e-3, 6)
    assert res.needles == [] and res.hamiltonian["holds"]


def test_descent_history_and_single_cell_steps():
    f, jac = expression_dynamics(["x2", "-x1 + u1"], 2, 1)
    h, hg = quadratic_cost([1.0, 0.0])
    P = ControlProblem(f, h, hg, [-1.0, 0.0, 1.0], [0.0, 0.0], T=3.0, jac=jac)
    res = epsilon_optimal(P, 1e-4, 12)
    hist = res.history
    assert all(b < a - 1e-4 * 3.0 / 12 for a, b in zip(hist, hist[1:]))
    # replaying the needles reproduces single-cell distances
    sig = ControlSignal(np.full(12, P.invariant_candidates()[0]), 3.0)
    for cell, k in res.needles:
        nxt = sig.with_cell(cell, k)
        assert control_distance(sig, nxt) == pytest.approx(3.0 / 12)
        sig = nxt
    assert np.array_equal(sig.idx, res.signal.idx)
    # exact discrete certificate: no single-cell invariant needle gains more than eps * width
    width = 3.0 / 12
    for cell in range(12):
        for k in P.invariant_candidates():
            trial = simulate(P, res.signal.with_cell(cell, k))
            assert res.cost - h(trial.final) <= 1e-4 * width
    # the pointwise Hamiltonian condition follows only up to the O(width) needle remainder
    assert res.hamiltonian["max_slack"] <= 1e-4 + 2 * width


def test_needle_derivative_matches_adjoint():
    f, jac = expression_dynamics(["x2", "-sin(x1) + u1*x1"], 2, 1)
    h, hg = quadratic_cost([1.0, 0.0])
    P = ControlProblem(f, h, hg, [-1.0, 0.0, 1.0], [0.5, 0.0], T=2.0, jac=jac)
    N = 1000
    actual, predicted = needle_derivative_check(P, ControlSignal(np.full(N, 1), 2.0), N // 3, 2)
    assert abs(actual - predicted) <= 1e-3 * abs(predicted)


def test_validation_errors():
    h, hg = quadratic_cost([0.0, 0.0])
    with pytest.raises(HypothesesViolated):
        ControlProblem(lambda t, x, u: u, h, hg, [[1.0, 0.0], [1.0, 1.0]], [0.0, 0.0], group=SWAP).validate()
    with pytest.raises(HypothesesViolated):
        ControlProblem(lambda t, x, u: u, h, hg, [[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], group=SWAP).validate()
    with pytest.raises(HypothesesViolated):
        ControlProblem(lambda t, x, u: x**2, h, hg, [[0.0, 0.0]], [0.0, 0.0], jac=lambda t, x, u: np.eye(2)).validate()
    with pytest.raises(HypothesesViolated):
        ControlProblem(lambda t, x, u: x * (x @ x), h, hg, [[0.0, 0.0]], [0.0, 0.0]).validate()
    with pytest.raises(HypothesesViolated):
        epsilon_optimal(_scalar_problem(), 0.0, 4)


def test_blowup_guard():
    h, hg = quadratic_cost([0.0])
    P = ControlProblem(lambda t, x, u: x**2, h, hg, [0.0], [1.0], T=2.0)
    with pytest.raises(Blowup):
        simulate(P, ControlSignal(np.zeros(50, int), 2.0))


def test_registry_helpers():
    f, jac = bilinear_dynamics(np.zeros((2, 2)), [np.array([[0.0, 1.0], [-1.0, 0.0]])])
    x = np.array([1.0, 2.0])
    assert np.allclose(f(0, x, np.array([2.0])), [4.0, -2.0])
    assert np.allclose(jac(0, x, np.array([2.0])), [[0, 2], [-2, 0]])
    K = box_candidates([(-1, 1), (0, 1)], 2, SWAP)
    images = {tuple(k) for k in K}
    assert all((b, a) in images for a, b in images)


@given(st.lists(st.integers(0, 2), min_size=6, max_size=6), st.lists(st.integers(0, 2), min_size=6, max_size=6))
def test_distance_is_a_metric_on_signals(a, b):
    x, y = ControlSignal(np.array(a), 3.0), ControlSignal(np.array(b), 3.0)
    z = ControlSignal(np.zeros(6, int), 3.0)
    assert control_distance(x, y) == control_distance(y, x)
    assert control_distance(x, y) <= control_distance(x, z) + control_distance(z, y) + 1e-15
    assert (control_distance(x, y) == 0) == (a == b)
