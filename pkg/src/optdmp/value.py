"""Input recovery, anchor value gradients and first-order cost estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import SystemDynamics
from .errors import ContractError, SolverStateError
from .ocp import StateCost, Trajectory, trajectory_cost

GRADIENT_MODES = ("node0", "extrapolate", "node1")


@dataclass(frozen=True, eq=False)
class ValueAnchor:
    """Optimal cost and its gradient with respect to the goal at one terminal point."""

    xf: np.ndarray
    cost: float
    gradient: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xf", np.asarray(self.xf, dtype=float).ravel())
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=float).ravel())
        if not self.cost >= 0:
            raise ContractError("anchor cost must be nonnegative")
        if not np.all(np.isfinite(self.gradient)):
            raise ContractError("anchor gradient must be finite")


@dataclass(frozen=True)
class SuboptimalityReport:
    dmp_cost: float
    estimated_optimal_cost: float
    gap: float
    goal_distance: float

    def as_row(self, query) -> list[float]:
        return [*np.asarray(query, dtype=float), self.dmp_cost,
                self.estimated_optimal_cost, self.gap, self.goal_distance]


def recover_input(traj: Trajectory, dyn: SystemDynamics, R=None, Q: Optional[StateCost] = None) -> Trajectory:
    """Fill ``inputs`` with ``g^-1(x) (xdot - f(x))``, ``xdot`` by finite differences.

    When ``R`` is given the returned trajectory also carries its cost.
    """
    if len(traj) < 3:
        raise ContractError("input recovery needs at least three samples")
    X = traj.states
    xdot = np.gradient(X, traj.times, axis=0, edge_order=2)
    if dyn.vectorized:
        ginv = np.asarray(dyn.actuation_inverse(X), dtype=float)
        if dyn.actuation_inverse is None:
            dyn.g_inv(X[0])  # raises CapabilityError
    else:
        ginv = np.array([dyn.g_inv(x) for x in X])
    U = np.einsum("kij,kj->ki", ginv, xdot - dyn.batch_f(X))
    cost = float("nan") if R is None else trajectory_cost(traj.times, X, U, np.atleast_2d(R), Q)
    return Trajectory(traj.times, X, U, cost=cost, converged=traj.converged, report=traj.report)


def initial_input(backward_traj: Trajectory, mode: str = "node0") -> np.ndarray:
    """Input of the backward solution at ``t = 0``.

    ``node0`` reads it directly; ``extrapolate`` fits a quadratic through
    nodes 1..3 and evaluates it at 0 (for transcriptions that pin ``v(0)``);
    ``node1`` takes the first interior node.
    """
    V, t = backward_traj.inputs, backward_traj.times
    if mode == "node0":
        return V[0].copy()
    if mode == "node1":
        return V[1].copy()
    if mode == "extrapolate":
        coeffs = np.polyfit(t[1:4], V[1:4], 2)
        return coeffs[-1].copy()
    raise ContractError(f"mode must be one of {GRADIENT_MODES}")


def value_gradient_at_anchor(
    backward_traj: Trajectory, dyn: SystemDynamics, R, mode: str = "node0"
) -> np.ndarray:
    """Sensitivity of the optimal cost to the goal: ``2 g(xf)^-T R v*(0)``.

    ``dyn`` is the forward system and ``backward_traj`` the converged solution
    of the reversed problem starting at the goal ``xf``.
    """
    if not backward_traj.converged:
        raise SolverStateError("value gradient needs a converged backward solution")
    if backward_traj.inputs is None:
        raise ContractError("backward trajectory carries no inputs")
    xf = backward_traj.states[0]
    v0 = initial_input(backward_traj, mode)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return 2.0 * dyn.g_inv(xf).T @ (R @ v0)


def first_order_estimate(anchor: ValueAnchor, query) -> float:
    query = np.asarray(query, dtype=float).ravel()
    return float(anchor.cost + anchor.gradient @ (query - anchor.xf))


def suboptimality(
    dmp_traj_with_inputs: Trajectory, R, anchor: ValueAnchor, query, Q: Optional[StateCost] = None
) -> SuboptimalityReport:
    """Cost of a generalised trajectory minus the first-order optimal-cost estimate."""
    traj = dmp_traj_with_inputs
    if len(traj) < 2 or traj.inputs is None:
        raise ContractError("need a trajectory with recovered inputs")
    query = np.asarray(query, dtype=float).ravel()
    dmp_cost = trajectory_cost(traj.times, traj.states, traj.inputs, np.atleast_2d(R), Q)
    estimate = first_order_estimate(anchor, query)
    return SuboptimalityReport(
        dmp_cost=dmp_cost,
        estimated_optimal_cost=estimate,
        gap=dmp_cost - estimate,
        goal_distance=float(np.linalg.norm(query - anchor.xf)),
    )


def learning_residual_bound(
    reproduction: Trajectory, optimal: Trajectory, R, anchor_cost: float, Q: Optional[StateCost] = None
) -> float:
    """Upper bound on the anchor gap attributable to imperfect reproduction.

    With ``u_D`` the inputs recovered along the primitive's own rollout and
    ``u*`` the optimal inputs interpolated onto the same grid,
    ``J(u_D) - J(u*) = <u_D - u*, u_D + u*>_R`` which Cauchy-Schwarz bounds by
    ``|u_D - u*|_R |u_D + u*|_R``. The quadrature mismatch between the
    interpolated optimum and ``anchor_cost`` is added on top.
    """
    t = reproduction.times
    R = np.atleast_2d(np.asarray(R, dtype=float))
    u_star = np.column_stack(
        [np.interp(t, optimal.times, optimal.inputs[:, j]) for j in range(optimal.inputs.shape[1])]
    )
    diff = reproduction.inputs - u_star
    total = reproduction.inputs + u_star

    def norm(a):
        return np.sqrt(max(np.trapezoid(np.einsum("ki,ij,kj->k", a, R, a), t), 0.0))

    bound = norm(diff) * norm(total)
    j_star = trajectory_cost(t, reproduction.states, u_star, R)
    if Q is not None:
        x_star = np.column_stack(
            [np.interp(t, optimal.times, optimal.states[:, i]) for i in range(optimal.states.shape[1])]
        )
        q_dmp = np.trapezoid([Q.value(x) for x in reproduction.states], t)
        q_star = np.trapezoid([Q.value(x) for x in x_star], t)
        bound += abs(q_dmp - q_star)
        j_star += q_star
    return float(bound + abs(j_star - anchor_cost))
