"""Fixed-endpoint optimal control by trapezoidal direct collocation.

The problem ``min int_0^tf Q(x) + u^T R u dt`` subject to control-affine
dynamics, pinned endpoints and ``u(0) = 0`` is transcribed on a uniform grid
and handed to an augmented-Lagrangian loop whose subproblems are solved by
L-BFGS.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .dynamics import SystemDynamics
from .errors import ContractError, NumericalError

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
STAT_TOL = 1e-5

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class StateCost:
    """State part ``Q(x)`` of the running cost, with its gradient."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


def quadratic_state_cost(weight) -> StateCost:
    W = np.atleast_2d(np.asarray(weight, dtype=float))
    return StateCost(lambda x: float(x @ W @ x), lambda x: (W + W.T) @ x)


@dataclass(frozen=True, eq=False)
class OcpProblem:
    dynamics: SystemDynamics
    x0: np.ndarray
    xf: np.ndarray
    tf: float
    R: np.ndarray
    Q: Optional[StateCost] = None
    n_intervals: int = 80
    direction: str = FORWARD
    pin_initial_input: bool = True

    def __post_init__(self):
        n, m = self.dynamics.state_dim, self.dynamics.input_dim
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(n))
        object.__setattr__(self, "xf", np.asarray(self.xf, dtype=float).reshape(n))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "R", R)
        if R.shape != (m, m):
            raise ContractError(f"R must be {m}x{m}, got {R.shape}")
        if not np.allclose(R, R.T, rtol=0, atol=1e-12):
            raise ContractError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ContractError("R must be positive definite")
        if not self.tf > 0:
            raise ContractError("tf must be positive")
        if int(self.n_intervals) != self.n_intervals or self.n_intervals < 2:
            raise ContractError("n_intervals must be an integer >= 2")
        if self.direction not in (FORWARD, BACKWARD):
            raise ContractError(f"direction must be {FORWARD!r} or {BACKWARD!r}")

    @property
    def transcribed_dynamics(self) -> SystemDynamics:
        """Dynamics actually collocated: the reversed system for backward problems."""
        if self.direction == BACKWARD:
            return self.dynamics.reversed()
        return self.dynamics

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.tf, self.n_intervals + 1)

    def running_cost(self, states, inputs) -> np.ndarray:
        return running_cost(states, inputs, self.R, self.Q)

    def same_data(self, other: "OcpProblem") -> bool:
        return (
            self.dynamics is other.dynamics
            and np.array_equal(self.x0, other.x0)
            and np.array_equal(self.xf, other.xf)
            and self.tf == other.tf
            and np.array_equal(self.R, other.R)
            and self.Q is other.Q
            and self.n_intervals == other.n_intervals
            and self.direction == other.direction
            and self.pin_initial_input == other.pin_initial_input
        )

    @property
    def pinned_input_node(self) -> Optional[int]:
        """Grid node whose input is forced to zero.

        ``u(0) = 0`` in forward time becomes ``v(tf) = 0`` after reflection,
        so the backward problem pins its last node.
        """
        if not self.pin_initial_input:
            return None
        return 0 if self.direction == FORWARD else self.n_intervals


@dataclass
class SolverReport:
    outer_iterations: int = 0
    inner_iterations: int = 0
    constraint_violation: float = float("nan")
    stationarity: float = float("nan")
    message: str = ""


@dataclass
class Trajectory:
    """Time-stamped states and (optionally) inputs with the accumulated cost."""

    times: np.ndarray
    states: np.ndarray
    inputs: Optional[np.ndarray] = None
    cost: float = float("nan")
    converged: bool = False
    report: SolverReport = field(default_factory=SolverReport)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] != self.times.size:
            raise ContractError("times and states lengths differ")
        if self.inputs is not None:
            self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
            if self.inputs.shape[0] != self.times.size:
                raise ContractError("times and inputs lengths differ")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ContractError("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]


def running_cost(states, inputs, R, Q: Optional[StateCost] = None) -> np.ndarray:
    """Pointwise ``Q(x) + u^T R u`` along a trajectory."""
    inputs = np.atleast_2d(inputs)
    values = np.einsum("ki,ij,kj->k", inputs, R, inputs)
    if Q is not None:
        values = values + np.array([Q.value(x) for x in np.atleast_2d(states)])
    return values


def trajectory_cost(times, states, inputs, R, Q: Optional[StateCost] = None) -> float:
    """Trapezoidal quadrature of the running cost on the trajectory's own grid."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise ContractError("need at least two samples to integrate a cost")
    return float(np.trapezoid(running_cost(states, inputs, R, Q), times))


class NlpInstance:
    """Finite-dimensional program produced by :func:`transcribe`.

    The decision vector stacks the ``(K+1, n)`` state array followed by the
    ``(K+1, m)`` input array. Equality constraints are ordered as collocation
    defects (``K*n``), initial state pin (``n``), final state pin (``n``) and
    initial input pin (``m``). The pins are simple variable fixings; the
    solver eliminates them instead of penalising them.
    """

    def __init__(self, problem: OcpProblem):
        self.problem = problem
        self.dyn = problem.transcribed_dynamics
        self.n = problem.dynamics.state_dim
        self.m = problem.dynamics.input_dim
        self.K = problem.n_intervals
        self.h = problem.tf / self.K
        self.n_vars = (self.K + 1) * (self.n + self.m)
        self.n_defects = self.K * self.n
        self.pin_node = problem.pinned_input_node
        self.n_eq = self.n_defects + 2 * self.n + (0 if self.pin_node is None else self.m)

        fixed = np.zeros(self.n_vars, dtype=bool)
        values = np.zeros(self.n_vars)
        X_idx, U_idx = self.unpack(np.arange(self.n_vars))
        fixed[X_idx[0]] = True
        values[X_idx[0]] = problem.x0
        fixed[X_idx[-1]] = True
        values[X_idx[-1]] = problem.xf
        if self.pin_node is not None:
            fixed[U_idx[self.pin_node]] = True
        self.fixed = fixed
        self.fixed_values = values

    def unpack(self, y):
        K1, n, m = self.K + 1, self.n, self.m
        X = y[: K1 * n].reshape(K1, n)
        U = y[K1 * n :].reshape(K1, m)
        return X, U

    def pack(self, X, U) -> np.ndarray:
        return np.concatenate([np.ravel(X), np.ravel(U)])

    def initial_guess(self, warm: Optional[Trajectory] = None) -> np.ndarray:
        p = self.problem
        if warm is not None and len(warm) == self.K + 1 and warm.inputs is not None:
            X, U = warm.states.copy(), warm.inputs.copy()
        else:
            lam = np.linspace(0.0, 1.0, self.K + 1)[:, None]
            X = (1 - lam) * p.x0 + lam * p.xf
            U = np.zeros((self.K + 1, self.m))
        y = self.pack(X, U)
        y[self.fixed] = self.fixed_values[self.fixed]
        return y

    # objective -----------------------------------------------------------
    def _quad_weights(self) -> np.ndarray:
        w = np.full(self.K + 1, self.h)
        w[0] = w[-1] = self.h / 2
        return w

    def objective(self, y) -> float:
        X, U = self.unpack(y)
        return float(self._quad_weights() @ self.problem.running_cost(X, U))

    def objective_grad(self, y) -> np.ndarray:
        X, U = self.unpack(y)
        w = self._quad_weights()[:, None]
        R, Q = self.problem.R, self.problem.Q
        gU = w * (U @ (R + R.T))
        if Q is None:
            gX = np.zeros_like(X)
        else:
            gX = w * np.array([Q.gradient(x) for x in X])
        return self.pack(gX, gU)

    # dynamics ------------------------------------------------------------
    def _node_fields(self, X, U):
        G = self.dyn.batch_g(X)
        F = self.dyn.batch_f(X) + np.einsum("kij,kj->ki", G, U)
        return F, G

    def defects(self, y) -> np.ndarray:
        X, U = self.unpack(y)
        F, _ = self._node_fields(X, U)
        d = X[1:] - X[:-1] - 0.5 * self.h * (F[1:] + F[:-1])
        return d

    def constraints(self, y) -> np.ndarray:
        """Full equality-constraint vector, pins included."""
        X, U = self.unpack(y)
        p = self.problem
        parts = [self.defects(y).ravel(), X[0] - p.x0, X[-1] - p.xf]
        if self.pin_node is not None:
            parts.append(U[self.pin_node])
        return np.concatenate(parts)

    def defects_vjp(self, y, W) -> np.ndarray:
        """``J_defects(y)^T W`` for multipliers ``W`` of shape (K, n)."""
        X, U = self.unpack(y)
        dyn = self.dyn
        _, G = self._node_fields(X, U)
        A = dyn.batch_df(X) + np.einsum("kijl,kj->kil", dyn.batch_dg(X), U)
        # each node k touches defect k (as left end) and defect k-1 (as right end)
        S = np.zeros((self.K + 1, self.n))
        S[:-1] += W
        S[1:] += W
        gX = np.zeros_like(X)
        gX[:-1] -= W
        gX[1:] += W
        gX -= 0.5 * self.h * np.einsum("kil,ki->kl", A, S)
        gU = -0.5 * self.h * np.einsum("kij,ki->kj", G, S)
        return self.pack(gX, gU)


def transcribe(problem: OcpProblem) -> NlpInstance:
    return NlpInstance(problem)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite value during transcription solve")


def solve(
    problem: OcpProblem,
    initial_guess: Optional[Trajectory] = None,
    *,
    penalty0: float = 1.0,
    penalty_growth: float = 10.0,
    max_outer: int = 20,
    max_inner: int = 20000,
    feas_tol: float = FEAS_TOL,
    stat_tol: float = STAT_TOL,
    target_feas: float = 1e-9,
    target_stat: float = 1e-8,
) -> Trajectory:
    """Solve ``problem`` and return the discrete optimal trajectory.

    The loop keeps refining until ``target_feas``/``target_stat`` are met (or
    the outer budget runs out); ``converged`` reports whether the looser
    ``feas_tol``/``stat_tol`` acceptance thresholds hold. Non-convergence is
    not an exception: the best iterate comes back with ``converged=False``.
    """
    nlp = transcribe(problem)
    free = ~nlp.fixed
    y = nlp.initial_guess(initial_guess)
    lam = np.zeros((nlp.K, nlp.n))
    mu = penalty0
    # multipliers are updated once the violation drops below this level
    eta = 0.1

    def merit(z):
        y[free] = z
        d = nlp.defects(y)
        _check_finite(d)
        val = nlp.objective(y) + np.sum(lam * d) + 0.5 * mu * np.sum(d * d)
        grad = nlp.objective_grad(y) + nlp.defects_vjp(y, lam + mu * d)
        return val, grad[free]

    report = SolverReport()
    viol = stat = np.inf
    best = None  # (merit, y, viol, stat) of the best acceptable iterate
    for outer in range(1, max_outer + 1):
        res = minimize(
            merit,
            y[free],
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_inner, "maxcor": 30, "gtol": 1e-10, "ftol": 1e-15},
        )
        y[free] = res.x
        report.inner_iterations += int(res.nit)
        d = nlp.defects(y)
        _check_finite(d)
        prev_viol, viol = viol, float(np.abs(d).max())
        if viol <= eta:
            lam = lam + mu * d
            eta = max(eta / 10.0, target_feas)
        else:
            mu *= penalty_growth
        grad_L = nlp.objective_grad(y) + nlp.defects_vjp(y, lam)
        scale = max(1.0, float(np.abs(nlp.objective_grad(y)).max()))
        stat = float(np.abs(grad_L[free]).max()) / scale
        report.outer_iterations = outer
        log.debug("outer %d: viol=%.3e stat=%.3e mu=%.1e", outer, viol, stat, mu)
        if viol < feas_tol and stat < stat_tol:
            score = max(viol / feas_tol, stat / stat_tol)
            if best is None or score < best[0]:
                best = (score, y.copy(), viol, stat)
        if viol < target_feas and stat < target_stat:
            break
        # floating-point floor of the subproblem solver: stop once acceptable
        if best is not None and viol > 0.5 * prev_viol:
            break

    if best is not None:
        _, y, viol, stat = best
    report.constraint_violation = viol
    report.stationarity = stat
    converged = bool(viol < feas_tol and stat < stat_tol)
    report.message = "converged" if converged else "outer iteration limit reached"
    X, U = nlp.unpack(y.copy())
    return Trajectory(
        times=problem.times,
        states=X,
        inputs=U,
        cost=trajectory_cost(problem.times, X, U, problem.R, problem.Q),
        converged=converged,
        report=report,
    )


def reverse_problem(problem: OcpProblem) -> OcpProblem:
    """Time-reversed counterpart: negated vector field, endpoints swapped."""
    flipped = BACKWARD if problem.direction == FORWARD else FORWARD
    return dataclasses.replace(
        problem, x0=problem.xf, xf=problem.x0, direction=flipped
    )


def reverse_trajectory(traj: Trajectory, tf: Optional[float] = None) -> Trajectory:
    """Reflect a trajectory in time, ``t -> tf - t``; the cost is unchanged."""
    tf = traj.times[-1] if tf is None else tf
    times = (tf - traj.times)[::-1]
    if traj.times[0] == 0 and tf == traj.times[-1]:
        # exact involution on uniform grids built by linspace
        times = traj.times.copy() if _symmetric(traj.times) else times
    return Trajectory(
        times=times,
        states=traj.states[::-1].copy(),
        inputs=None if traj.inputs is None else traj.inputs[::-1].copy(),
        cost=traj.cost,
        converged=traj.converged,
        report=traj.report,
    )


def _symmetric(times) -> bool:
    return bool(np.allclose(times[-1] - times[::-1], times, rtol=0, atol=1e-12))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``t,x1..xn,u1..um`` rows with round-trip float formatting."""
    n = traj.state_dim
    m = 0 if traj.inputs is None else traj.inputs.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(traj)):
            row = [traj.times[k], *traj.states[k]]
            if m:
                row.extend(traj.inputs[k])
            writer.writerow([repr(float(v)) for v in row])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader])
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("u"))
    rows = rows.reshape(-1, 1 + n + m)
    return Trajectory(
        times=rows[:, 0],
        states=rows[:, 1 : 1 + n],
        inputs=rows[:, 1 + n :] if m else None,
    )
