"""Critically damped dynamic movement primitives.

The transformation system is ``-tau^2 xdd + kappa (g - x) - D tau xd = F(s)``
with the phase ``s(t) = exp(-alpha t / tau)`` and a forcing term built from
``N`` normalised Gaussian kernels in ``s``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, NumericalError
from .ocp import Trajectory

RIDGE = 1e-8


@dataclass(frozen=True)
class DmpParams:
    tau: float
    D: float = 20.0
    kappa: Optional[float] = None
    alpha: float = 3.0
    N: int = 15

    def __post_init__(self):
        if self.kappa is None:
            object.__setattr__(self, "kappa", self.D**2 / 4.0)
        if not (self.tau > 0 and self.D > 0 and self.kappa > 0 and self.alpha > 0):
            raise ContractError("tau, D, kappa and alpha must be positive")
        if self.kappa != self.D**2 / 4.0:
            raise ContractError("kappa must equal D^2/4 (critical damping)")
        if int(self.N) != self.N or self.N < 2:
            raise ContractError("N must be an integer >= 2")


@dataclass(frozen=True, eq=False)
class BasisSet:
    centers: np.ndarray
    widths: np.ndarray

    @classmethod
    def from_params(cls, params: DmpParams) -> "BasisSet":
        N = params.N
        c = np.exp(-params.alpha * np.arange(N) / (N - 1))
        h = np.empty(N)
        h[:-1] = np.diff(c) ** -2.0
        h[-1] = h[-2]
        return cls(c, h)

    def activations(self, s) -> np.ndarray:
        """Kernel values ``psi_j(s)``, shape ``s.shape + (N,)``."""
        s = np.asarray(s, dtype=float)[..., None]
        return np.exp(-self.widths * (s - self.centers) ** 2)

    def features(self, s) -> np.ndarray:
        """Normalised, phase-scaled kernels: ``F(s) = features(s) @ weights.T``."""
        s = np.asarray(s, dtype=float)
        psi = self.activations(s)
        total = psi.sum(axis=-1, keepdims=True)
        if np.any(total < 1e-300):
            raise NumericalError("basis normalisation underflow")
        return psi / total * s[..., None]


@dataclass(frozen=True, eq=False)
class Dmp:
    """A learned primitive plus the optimal-control data of its anchor."""

    params: DmpParams
    basis: BasisSet
    weights: np.ndarray
    x0: np.ndarray
    xf_anchor: np.ndarray
    anchor_cost: float = float("nan")
    anchor_value_gradient: Optional[np.ndarray] = None
    fit_residual: float = float("nan")
    v0: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        object.__setattr__(self, "xf_anchor", np.asarray(self.xf_anchor, dtype=float).ravel())
        if w.shape != (self.x0.size, self.params.N):
            raise ContractError(f"weights must be {(self.x0.size, self.params.N)}, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise NumericalError("non-finite DMP weights")
        v0 = np.zeros_like(self.x0) if self.v0 is None else np.asarray(self.v0, dtype=float).ravel()
        object.__setattr__(self, "v0", v0)
        if self.anchor_value_gradient is not None:
            object.__setattr__(
                self,
                "anchor_value_gradient",
                np.asarray(self.anchor_value_gradient, dtype=float).ravel(),
            )

    @property
    def state_dim(self) -> int:
        return self.x0.size

    def with_weights(self, weights) -> "Dmp":
        return dataclasses.replace(self, weights=weights)

    def with_anchor(self, cost: float, gradient) -> "Dmp":
        return dataclasses.replace(self, anchor_cost=float(cost), anchor_value_gradient=gradient)


def make_dmp(params: DmpParams, weights, x0, xf_anchor, **anchor) -> Dmp:
    return Dmp(params, BasisSet.from_params(params), weights, x0, xf_anchor, **anchor)


def clock(t, params: DmpParams):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ContractError("clock is defined for t >= 0")
    s = np.exp(-(params.alpha / params.tau) * t)
    return float(s) if s.ndim == 0 else s


def forcing(dmp: Dmp, s) -> np.ndarray:
    """Forcing vector ``F(s)``; vectorised over an array of phases."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s > 1):
        raise ContractError("phase must lie in (0, 1]")
    return dmp.basis.features(s) @ dmp.weights.T


def derivatives(times, states):
    """Second-order finite-difference velocity and acceleration.

    On a uniform grid the acceleration uses the compact three-point stencil
    (one-sided four-point at the ends), whose error constant is a quarter of
    differentiating twice.
    """
    times = np.asarray(times, dtype=float)
    vel = np.gradient(states, times, axis=0, edge_order=2)
    h = np.diff(times)
    if len(times) < 4 or not np.allclose(h, h[0], rtol=1e-9, atol=0):
        return vel, np.gradient(vel, times, axis=0, edge_order=2)
    x = np.asarray(states, dtype=float)
    acc = np.empty_like(x)
    acc[1:-1] = x[2:] - 2 * x[1:-1] + x[:-2]
    acc[0] = 2 * x[0] - 5 * x[1] + 4 * x[2] - x[3]
    acc[-1] = 2 * x[-1] - 5 * x[-2] + 4 * x[-3] - x[-4]
    return vel, acc / h[0] ** 2


def forcing_targets(traj: Trajectory, params: DmpParams, goal=None) -> np.ndarray:
    x = traj.states
    goal = x[-1] if goal is None else np.asarray(goal, dtype=float)
    vel, acc = derivatives(traj.times, x)
    targets = -params.tau**2 * acc + params.kappa * (goal - x) - params.D * params.tau * vel
    if not np.all(np.isfinite(targets)):
        raise NumericalError("non-finite derivative estimates")
    return targets


def learn_weights(
    traj: Trajectory,
    params: DmpParams,
    ridge: float = RIDGE,
    initial_velocity=None,
) -> Dmp:
    """Fit the forcing weights by ridge least squares on every trajectory sample.

    The anchor goal is the trajectory's last state. One basis is shared by all
    state dimensions, so a single normal-equation solve handles all of them.
    """
    if len(traj) < params.N:
        raise ContractError(f"need at least N={params.N} samples, got {len(traj)}")
    basis = BasisSet.from_params(params)
    targets = forcing_targets(traj, params)
    Phi = basis.features(clock(traj.times - traj.times[0], params))
    A = Phi.T @ Phi + ridge * np.eye(params.N)
    W = np.linalg.solve(A, Phi.T @ targets).T
    resid = targets - Phi @ W.T
    return Dmp(
        params,
        basis,
        W,
        x0=traj.states[0],
        xf_anchor=traj.states[-1],
        fit_residual=float(np.sqrt(np.mean(resid**2))),
        v0=initial_velocity,
    )


def _accel(p: DmpParams, goal, x, v, F):
    return (p.kappa * (goal - x) - p.D * p.tau * v - F) / p.tau**2


def rollout(
    dmp: Dmp,
    goal=None,
    dt: Optional[float] = None,
    horizon: Optional[float] = None,
    return_velocity: bool = False,
):
    """Integrate the primitive from ``(x0, v0)`` towards ``goal`` with RK4.

    ``goal`` defaults to the anchor, ``horizon`` to ``tau`` and ``dt`` to
    ``tau / 800``. The returned trajectory carries states only.
    """
    p = dmp.params
    goal = dmp.xf_anchor if goal is None else np.asarray(goal, dtype=float).ravel()
    horizon = p.tau if horizon is None else float(horizon)
    dt = p.tau / 800.0 if dt is None else float(dt)
    if dt <= 0 or horizon <= 0:
        raise ContractError("dt and horizon must be positive")
    steps = int(round(horizon / dt))
    if steps < 1:
        raise ContractError("horizon shorter than one step")
    dt = horizon / steps
    times = np.linspace(0.0, horizon, steps + 1)

    # the forcing depends on time only: evaluate it once at every RK4 stage time
    stage_times = np.linspace(0.0, horizon, 2 * steps + 1)
    F = dmp.basis.features(np.exp(-(p.alpha / p.tau) * stage_times)) @ dmp.weights.T

    X = np.empty((steps + 1, dmp.state_dim))
    V = np.empty_like(X)
    x = dmp.x0.copy()
    v = dmp.v0.copy()
    X[0], V[0] = x, v
    for k in range(steps):
        f0, fh, f1 = F[2 * k], F[2 * k + 1], F[2 * k + 2]
        a1 = _accel(p, goal, x, v, f0)
        x2, v2 = x + 0.5 * dt * v, v + 0.5 * dt * a1
        a2 = _accel(p, goal, x2, v2, fh)
        x3, v3 = x + 0.5 * dt * v2, v + 0.5 * dt * a2
        a3 = _accel(p, goal, x3, v3, fh)
        x4, v4 = x + dt * v3, v + dt * a3
        a4 = _accel(p, goal, x4, v4, f1)
        x = x + dt / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
        v = v + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        X[k + 1], V[k + 1] = x, v
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
        raise NumericalError("DMP rollout overflowed")
    traj = Trajectory(times=times, states=X)
    return (traj, V) if return_velocity else traj


def deviation(params: DmpParams, t, goal_distance):
    """Closed-form distance between rollouts whose goals differ by ``goal_distance``.

    Two rollouts of the same primitive differ by the step response of a
    critically damped oscillator, ``1 - exp(-a t) (1 + a t)`` with
    ``a = D / (2 tau)``.
    """
    if params.kappa != params.D**2 / 4.0:
        raise ContractError("closed form requires kappa = D^2/4")
    a = np.asarray(t, dtype=float) * params.D / (2.0 * params.tau)
    out = np.abs(np.exp(-a) * (-a - 1.0) + 1.0) * goal_distance
    return float(out) if out.ndim == 0 else out
