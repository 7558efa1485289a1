import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from optdmp.dynamics import SystemDynamics
from optdmp.errors import CapabilityError, ContractError, SolverStateError
from optdmp.ocp import Trajectory, reverse_trajectory
from optdmp.value import (
    SuboptimalityReport,
    ValueAnchor,
    first_order_estimate,
    initial_input,
    learning_residual_bound,
    recover_input,
    suboptimality,
    value_gradient_at_anchor,
)

finite = st.floats(-100, 100)


def prescribed(t):
    return np.array([np.sin(t), 0.5 * np.cos(2 * t)])


def simulate(dyn, u_of_t, x0, t):
    sol = solve_ivp(lambda s, x: dyn.vector_field(x, u_of_t(s)), (t[0], t[-1]), x0,
                    t_eval=t, rtol=1e-12, atol=1e-12, method="DOP853")
    return sol.y.T


# --- input recovery ----------------------------------------------------------

def test_recovery_of_prescribed_inputs(sys2):
    errs = []
    for K in (100, 200):
        t = np.linspace(0, 2, K + 1)
        X = simulate(sys2, prescribed, [1.0, 0.5], t)
        U = recover_input(Trajectory(t, X), sys2).inputs
        errs.append(np.abs(U - np.array([prescribed(s) for s in t])).max())
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3.5  # second order


def test_recovered_inputs_resimulate(sys2):
    t = np.linspace(0, 2, 401)
    X = simulate(sys2, prescribed, [1.0, 0.5], t)
    U = recover_input(Trajectory(t, X), sys2).inputs
    interp = lambda s: np.array([np.interp(s, t, U[:, j]) for j in range(2)])
    again = simulate(sys2, interp, X[0], t)
    assert np.abs(again - X).max() < 1e-3


def test_equilibrium_needs_no_input(sys2):
    t = np.linspace(0, 1, 11)
    traj = recover_input(Trajectory(t, np.zeros((11, 2))), sys2)
    np.testing.assert_array_equal(traj.inputs, 0.0)


def test_straight_line_by_hand(sys2):
    # x(t) = (5 + t, 5 - t); u = g^-1(x) (xdot - f(x)) worked out per node
    t = np.array([0.0, 1.0, 2.0])
    X = np.column_stack([5 + t, 5 - t])
    U = recover_input(Trajectory(t, X), sys2).inputs
    np.testing.assert_allclose(U, [[-19, 9], [-5, 7], [15, 5]], atol=1e-12)


def test_recovery_requirements(sys2):
    no_inv = SystemDynamics(2, 2, sys2.drift, sys2.actuation)
    t = np.linspace(0, 1, 5)
    with pytest.raises(CapabilityError):
        recover_input(Trajectory(t, np.zeros((5, 2))), no_inv)
    with pytest.raises(ContractError):
        recover_input(Trajectory(t[:2], np.zeros((2, 2))), sys2)


# --- value gradient ----------------------------------------------------------

def backward_stub(inputs, converged=True):
    K = len(inputs)
    t = np.linspace(0, 1, K)
    states = np.tile([2.0, 1.0], (K, 1))
    return Trajectory(t, states, np.asarray(inputs, float), cost=1.0, converged=converged)


def test_zero_input_zero_gradient(sys2):
    g = value_gradient_at_anchor(backward_stub(np.zeros((5, 2))), sys2, np.eye(2), "extrapolate")
    np.testing.assert_array_equal(g, 0.0)


def test_gradient_linear_in_R(sys2):
    stub = backward_stub(np.random.default_rng(0).normal(size=(5, 2)))
    R = np.array([[2.0, 0.3], [0.3, 1.0]])
    g1 = value_gradient_at_anchor(stub, sys2, R, "node1")
    g3 = value_gradient_at_anchor(stub, sys2, 3 * R, "node1")
    np.testing.assert_allclose(g3, 3 * g1)
    # 2 g^-T R v with g^-1 at (2, 1)
    v = stub.inputs[1]
    np.testing.assert_allclose(g1, 2 * np.array([[1, -2], [0, 1]]).T @ R @ v)


def test_extrapolation_is_exact_for_quadratics():
    t = np.linspace(0, 1, 6)
    V = np.column_stack([3 - 2 * t + 5 * t**2, -1 + t**2])
    V[0] = 0.0  # the pinned node is ignored
    stub = Trajectory(t, np.zeros((6, 2)), V, converged=True)
    np.testing.assert_allclose(initial_input(stub, "extrapolate"), [3, -1], atol=1e-12)
    np.testing.assert_array_equal(initial_input(stub, "node0"), [0, 0])
    with pytest.raises(ContractError):
        initial_input(stub, "cubic")


def test_unconverged_refused(sys2):
    with pytest.raises(SolverStateError):
        value_gradient_at_anchor(backward_stub(np.zeros((5, 2)), False), sys2, np.eye(2))


def test_gradient_against_finite_differences(example_setup, anchor_55):
    delta = 0.05
    fd = []
    for e in np.eye(2):
        hi = example_setup.optimal_cost(anchor_55.xf + delta * e, anchor_55.backward)
        lo = example_setup.optimal_cost(anchor_55.xf - delta * e, anchor_55.backward)
        fd.append((hi - lo) / (2 * delta))
    fd = np.array(fd)
    g = anchor_55.value.gradient
    assert np.linalg.norm(g - fd) <= 0.05 * np.linalg.norm(fd)


# --- estimates and gaps ------------------------------------------------------

def test_estimate_at_anchor():
    a = ValueAnchor([1.0, 2.0], 7.5, [3.0, -1.0])
    assert first_order_estimate(a, [1.0, 2.0]) == 7.5
    assert first_order_estimate(a, [2.0, 2.0]) == 10.5


@given(arrays(np.float64, 2, elements=finite), arrays(np.float64, 2, elements=finite),
       arrays(np.float64, 2, elements=finite))
def test_estimate_is_affine(a, b, grad):
    anc = ValueAnchor([0.5, -0.5], 4.0, grad)
    lhs = first_order_estimate(anc, a) + first_order_estimate(anc, b) - anc.cost
    rhs = first_order_estimate(anc, a + b - anc.xf)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_anchor_validation():
    with pytest.raises(ContractError):
        ValueAnchor([0.0], -1.0, [0.0])
    with pytest.raises(ContractError):
        ValueAnchor([0.0], 1.0, [np.inf])


def test_gap_definition():
    t = np.linspace(0, 1, 11)
    traj = Trajectory(t, np.zeros((11, 1)), np.ones((11, 1)))
    rep = suboptimality(traj, [[2.0]], ValueAnchor([0.0], 1.5, [1.0]), [0.25])
    assert rep == SuboptimalityReport(2.0, 1.75, 2.0 - 1.75, 0.25)
    assert rep.as_row([0.25]) == [0.25, 2.0, 1.75, 0.25, 0.25]
    with pytest.raises(ContractError):
        suboptimality(Trajectory(t[:1], np.zeros((1, 1)), np.ones((1, 1))), [[1.0]],
                      ValueAnchor([0.0], 1.0, [0.0]), [0.0])


def test_anchor_gap_within_residual_bound(example_setup, anchor_55):
    traj, rep = example_setup.report(anchor_55.dmp, anchor_55.xf, anchor_55.value)
    bound = learning_residual_bound(traj, anchor_55.forward, example_setup.R, anchor_55.value.cost)
    assert rep.goal_distance == 0.0
    assert abs(rep.gap) <= bound


def test_residual_bound_is_tight_for_exact_reproduction():
    t = np.linspace(0, 1, 21)
    U = np.column_stack([np.sin(t), t])
    traj = Trajectory(t, np.zeros((21, 2)), U)
    cost = np.trapezoid(np.sum(U**2, axis=1), t)
    assert learning_residual_bound(traj, traj, np.eye(2), cost) == pytest.approx(0.0, abs=1e-14)


def test_backward_solution_has_anchor_first(anchor_55):
    assert anchor_55.backward.converged
    np.testing.assert_allclose(anchor_55.backward.states[0], [5, 5], atol=1e-6)
    fwd = reverse_trajectory(anchor_55.backward)
    np.testing.assert_array_equal(fwd.inputs[0], 0.0)
