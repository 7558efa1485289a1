"""Sensitivity-driven anchor sampling, grid assembly and blended queries."""

from __future__ import annotations

import dataclasses
import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dmp import Dmp, DmpParams, learn_weights, rollout
from .dynamics import SystemDynamics
from .errors import BudgetError, ContractError, OptDmpError, OutOfRegionError
from .ocp import OcpProblem, StateCost, Trajectory, reverse_problem, reverse_trajectory, solve
from .value import (
    SuboptimalityReport,
    ValueAnchor,
    first_order_estimate,
    recover_input,
    suboptimality,
    value_gradient_at_anchor,
)

log = logging.getLogger(__name__)

BLEND_EPS = 1e-9
_REGION_TOL = 1e-9


class AnchorSolveError(OptDmpError):
    """The optimal control problem at an anchor did not converge."""


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned region; degenerate extents (lower == upper) are allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ContractError("box needs lower <= upper of equal shape")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, x, tol: float = _REGION_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass
class LearningSetup:
    """Everything needed to turn a goal into an anchor and to generalise from it.

    ``start_velocity="drift"`` starts every rollout at ``f(x0)``, the velocity
    all admissible trajectories share because their input vanishes at t=0;
    ``"rest"`` starts from zero velocity.
    """

    dynamics: SystemDynamics
    x0: np.ndarray
    tf: float
    R: np.ndarray
    Q: Optional[StateCost] = None
    n_intervals: int = 80
    dmp_params: Optional[DmpParams] = None
    rollout_dt: Optional[float] = None
    gradient_mode: str = "extrapolate"
    start_velocity: str = "drift"
    ridge: float = 1e-8

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if self.dmp_params is None:
            self.dmp_params = DmpParams(tau=self.tf)
        if self.rollout_dt is None:
            self.rollout_dt = self.tf / 800.0
        if self.start_velocity not in ("drift", "rest"):
            raise ContractError("start_velocity must be 'drift' or 'rest'")

    def problem(self, xf) -> OcpProblem:
        return OcpProblem(self.dynamics, self.x0, xf, self.tf, self.R, self.Q, self.n_intervals)

    def initial_velocity(self) -> Optional[np.ndarray]:
        return self.dynamics.f(self.x0) if self.start_velocity == "drift" else None

    def solve_backward(self, xf, warm: Optional[Trajectory] = None) -> Trajectory:
        return solve(reverse_problem(self.problem(xf)), warm)

    def optimal_cost(self, xf, warm: Optional[Trajectory] = None) -> float:
        """Reference optimal cost by a fresh solve (benchmark use only)."""
        traj = self.solve_backward(xf, warm)
        if not traj.converged:
            raise AnchorSolveError(f"oracle solve at {np.asarray(xf)} did not converge")
        return traj.cost

    def build_anchor(self, xf, warm: Optional[Trajectory] = None) -> "Anchor":
        xf = np.asarray(xf, dtype=float).ravel()
        backward = self.solve_backward(xf, warm)
        if not backward.converged:
            raise AnchorSolveError(
                f"backward solve at {xf} failed: {backward.report.message} "
                f"(violation {backward.report.constraint_violation:.2e}, "
                f"stationarity {backward.report.stationarity:.2e})"
            )
        forward = reverse_trajectory(backward, self.tf)
        grad = value_gradient_at_anchor(backward, self.dynamics, self.R, self.gradient_mode)
        dmp = learn_weights(
            forward, self.dmp_params, ridge=self.ridge, initial_velocity=self.initial_velocity()
        ).with_anchor(backward.cost, grad)
        return Anchor(xf=xf, dmp=dmp, value=ValueAnchor(xf, backward.cost, grad), backward=backward)

    def generalize(self, dmp: Dmp, goal) -> Trajectory:
        """Roll ``dmp`` out to ``goal`` over the horizon and attach recovered inputs and cost."""
        traj = rollout(dmp, goal, dt=self.rollout_dt, horizon=self.tf)
        return recover_input(traj, self.dynamics, self.R, self.Q)

    def report(self, dmp: Dmp, goal, value: ValueAnchor) -> tuple[Trajectory, SuboptimalityReport]:
        traj = self.generalize(dmp, goal)
        return traj, suboptimality(traj, self.R, value, goal, self.Q)


@dataclass(eq=False)
class Anchor:
    xf: np.ndarray
    dmp: Dmp
    value: ValueAnchor
    backward: Optional[Trajectory] = None

    @property
    def forward(self) -> Optional[Trajectory]:
        return None if self.backward is None else reverse_trajectory(self.backward)


@dataclass(frozen=True, eq=False)
class SamplerConfig:
    start: np.ndarray
    direction: np.ndarray
    region: Box
    J_threshold: float = 10.0
    t_samples: int = 15
    delta_x: float = 0.2
    t_steps: int = 5

    def __post_init__(self):
        start = np.asarray(self.start, dtype=float).ravel()
        v = np.asarray(self.direction, dtype=float).ravel()
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "direction", v)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ContractError("direction must be a unit vector")
        if not self.region.contains(start):
            raise OutOfRegionError(f"start {start} outside region")
        if not (self.J_threshold > 0 and self.delta_x > 0):
            raise ContractError("J_threshold and delta_x must be positive")
        if self.t_samples < 1 or self.t_steps < 1:
            raise ContractError("t_samples and t_steps must be positive")

    def reversed(self) -> "SamplerConfig":
        return dataclasses.replace(self, direction=-self.direction)


@dataclass(frozen=True)
class StepRecord:
    """One probe of the sampling loop."""

    anchor_index: int
    anchor_point: tuple
    n_step: int
    point: tuple
    dmp_cost: float
    estimate: float
    gap: float
    in_region: bool
    decision: str  # "continue" | "gap" | "step_cap" | "exit" | "budget"


@dataclass(eq=False)
class SampleGrid:
    """Anchors on the Cartesian lattice ``origin + sum_i coords[i][k_i] * directions[i]``."""

    origin: np.ndarray
    directions: np.ndarray
    coords: list
    nodes: dict
    region: Box
    trace: list = field(default_factory=list)
    aborted: Optional[str] = None

    @property
    def anchors(self) -> list:
        return [self.nodes[k] for k in sorted(self.nodes)]

    def __len__(self):
        return len(self.nodes)

    def node_point(self, index) -> np.ndarray:
        offs = [self.coords[a][i] for a, i in enumerate(index)]
        return self.origin + np.asarray(offs) @ self.directions

    def line_points(self) -> np.ndarray:
        return np.array([a.xf for a in self.anchors])

    def min_spacing(self) -> float:
        gaps = [np.diff(c).min() for c in self.coords if len(c) > 1]
        return float(min(gaps)) if gaps else float("nan")


def _coordinate(cfg: SamplerConfig, point) -> float:
    return float((np.asarray(point) - cfg.start) @ cfg.direction)


def sample_direction(
    cfg: SamplerConfig, setup: LearningSetup, first_anchor: Optional[Anchor] = None
) -> SampleGrid:
    """Walk from ``cfg.start`` along ``cfg.direction`` placing anchors where needed.

    A new anchor is solved when the estimated suboptimality of the
    generalised trajectory reaches ``J_threshold`` or after ``t_steps`` probes
    without one. Sampling ends at ``t_samples`` anchors or on leaving the
    region. A failed solve ends the walk; the grid keeps what it has and
    records the reason in ``aborted``.
    """
    trace: list[StepRecord] = []
    anchors: list[Anchor] = []
    aborted = None
    step = cfg.delta_x * cfg.direction
    try:
        anchor = first_anchor if first_anchor is not None else setup.build_anchor(cfg.start)
    except AnchorSolveError as exc:
        return _line_grid(cfg, [], trace, str(exc))
    anchors.append(anchor)

    while len(anchors) < cfg.t_samples:
        n_step = 0
        point = anchor.xf
        reanchor = False
        while True:
            n_step += 1
            point = anchor.xf + n_step * step
            if not cfg.region.contains(point):
                trace.append(StepRecord(len(anchors) - 1, tuple(anchor.xf), n_step, tuple(point),
                                        np.nan, np.nan, np.nan, False, "exit"))
                break
            point = cfg.region.clip(point)
            _, rep = setup.report(anchor.dmp, point, anchor.value)
            if rep.gap >= cfg.J_threshold:
                decision = "gap"
            elif n_step >= cfg.t_steps:
                decision = "step_cap"
            else:
                decision = "continue"
            trace.append(StepRecord(len(anchors) - 1, tuple(anchor.xf), n_step, tuple(point), rep.dmp_cost,
                                    rep.estimated_optimal_cost, rep.gap, True, decision))
            if decision != "continue":
                reanchor = True
                break
        if not reanchor:
            break
        try:
            anchor = setup.build_anchor(point, warm=anchor.backward)
        except AnchorSolveError as exc:
            aborted = str(exc)
            log.warning("direction aborted: %s", exc)
            break
        anchors.append(anchor)
    return _line_grid(cfg, anchors, trace, aborted)


def _line_grid(cfg, anchors, trace, aborted) -> SampleGrid:
    ordered = sorted(anchors, key=lambda a: _coordinate(cfg, a.xf))
    coords = np.array([_coordinate(cfg, a.xf) for a in ordered])
    return SampleGrid(
        origin=cfg.start.copy(),
        directions=cfg.direction[None, :].copy(),
        coords=[coords],
        nodes={(i,): a for i, a in enumerate(ordered)},
        region=cfg.region,
        trace=list(trace),
        aborted=aborted,
    )


def sample_line(cfg: SamplerConfig, setup: LearningSetup) -> SampleGrid:
    """Run the walk along ``+v`` and then ``-v`` from the same start.

    Both walks share the start anchor and the ``t_samples`` budget; the
    result is one grid along ``v``.
    """
    fwd = sample_direction(cfg, setup)
    if fwd.aborted is not None and not fwd.nodes:
        return fwd
    start_anchor = next(a for a in fwd.anchors if np.allclose(a.xf, cfg.start))
    remaining = cfg.t_samples - len(fwd) + 1
    if remaining < 2:
        return fwd
    bwd = sample_direction(
        dataclasses.replace(cfg.reversed(), t_samples=remaining), setup, first_anchor=start_anchor
    )
    anchors = fwd.anchors + [a for a in bwd.anchors if a is not start_anchor]
    trace = fwd.trace + [dataclasses.replace(r, anchor_index=-1 - r.anchor_index) for r in bwd.trace]
    return _line_grid(cfg, anchors, trace, fwd.aborted or bwd.aborted)


def build_grid(
    per_direction: Sequence[SampleGrid],
    setup: Optional[LearningSetup] = None,
    budget: int = 400,
) -> SampleGrid:
    """Cartesian product of per-direction samples, solving any missing nodes."""
    if not per_direction:
        raise ContractError("need at least one direction")
    if len(per_direction) == 1:
        return per_direction[0]
    origin = per_direction[0].origin
    for g in per_direction:
        if not np.allclose(g.origin, origin):
            raise ContractError("per-direction grids must share their start point")
        if g.directions.shape[0] != 1:
            raise ContractError("inputs must be single-direction grids")
    D = np.vstack([g.directions for g in per_direction])
    if not np.allclose(D @ D.T, np.eye(len(D)), atol=1e-10):
        raise ContractError("directions must be mutually orthogonal unit vectors")
    coords = [np.asarray(g.coords[0]) for g in per_direction]
    shape = [len(c) for c in coords]
    total = int(np.prod(shape))
    existing = {}
    for a, g in enumerate(per_direction):
        for (i,), anchor in g.nodes.items():
            idx = [coords[b].tolist().index(0.0) if b != a else i for b in range(len(coords))]
            existing[tuple(idx)] = anchor
    missing = total - len(existing)
    if missing > budget:
        raise BudgetError(f"grid needs {missing} new solves, budget is {budget}")
    if missing and setup is None:
        raise ContractError("a LearningSetup is required to fill product nodes")
    region = per_direction[0].region
    grid = SampleGrid(origin.copy(), D, coords, dict(existing), region)
    for index in itertools.product(*(range(s) for s in shape)):
        if index not in grid.nodes:
            grid.nodes[index] = setup.build_anchor(grid.node_point(index))
    return grid


@dataclass
class QueryResult:
    trajectory: Trajectory
    report: SuboptimalityReport
    blended_from: list  # [(node index, weight)]
    nearest: tuple
    extrapolated: bool = False


def blend_weights(grid: SampleGrid, xq, mode: str = "bilinear"):
    """Cell vertices around ``xq`` and their blending weights.

    Returns ``(vertices, weights, extrapolated)``. Points beyond the outermost
    coordinates are clamped onto the nearest cell face and flagged.
    """
    if not grid.region.contains(xq):
        raise OutOfRegionError(f"query {np.asarray(xq)} outside region")
    y = grid.directions @ (np.asarray(xq, dtype=float) - grid.origin)
    extrapolated = False
    lows, fracs = [], []
    for c, yi in zip(grid.coords, y):
        c = np.asarray(c)
        if len(c) == 1:
            lows.append(0)
            fracs.append(None)
            extrapolated |= not np.isclose(yi, c[0], atol=1e-12)
            continue
        if yi < c[0] - 1e-12 or yi > c[-1] + 1e-12:
            extrapolated = True
        yc = min(max(yi, c[0]), c[-1])
        i = int(np.clip(np.searchsorted(c, yc, side="right") - 1, 0, len(c) - 2))
        lows.append(i)
        fracs.append((yc - c[i]) / (c[i + 1] - c[i]))
    vertices, weights = [], []
    for corner in itertools.product(*[(0,) if f is None else (0, 1) for f in fracs]):
        idx = tuple(lo + b for lo, b in zip(lows, corner))
        w = 1.0
        for f, b in zip(fracs, corner):
            if f is not None:
                w *= f if b else 1.0 - f
        vertices.append(idx)
        weights.append(w)
    weights = np.array(weights)
    if mode == "cost_weighted":
        inv = np.array([1.0 / (grid.nodes[v].value.cost + BLEND_EPS) for v in vertices])
        weights = inv / inv.sum()
    elif mode != "bilinear":
        raise ContractError("mode must be 'bilinear' or 'cost_weighted'")
    return vertices, weights, extrapolated


def nearest_node(grid: SampleGrid, xq) -> tuple:
    xq = np.asarray(xq, dtype=float)
    best, best_d = None, np.inf
    for k in sorted(grid.nodes):
        d = np.linalg.norm(xq - grid.nodes[k].xf)
        if d < best_d:
            best, best_d = k, d
    return best


def query(grid: SampleGrid, xq, setup: LearningSetup, mode: str = "bilinear") -> QueryResult:
    """Blend the surrounding primitives, roll out to ``xq`` and rate the result."""
    xq = np.asarray(xq, dtype=float).ravel()
    vertices, weights, extrapolated = blend_weights(grid, xq, mode)
    W = sum(w * grid.nodes[v].dmp.weights for v, w in zip(vertices, weights))
    base = grid.nodes[vertices[int(np.argmax(weights))]].dmp
    blended = base.with_weights(W)
    near = nearest_node(grid, xq)
    traj, rep = setup.report(blended, xq, grid.nodes[near].value)
    return QueryResult(
        trajectory=traj,
        report=rep,
        blended_from=[(v, float(w)) for v, w in zip(vertices, weights)],
        nearest=near,
        extrapolated=extrapolated,
    )


def uniform_count(lower: float, upper: float, spacing: float) -> int:
    """Nodes of a uniform grid with the given spacing covering ``[lower, upper]``."""
    return int(np.ceil((upper - lower) / spacing - 1e-9)) + 1
