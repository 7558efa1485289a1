"""End-to-end run of the two-state benchmark: sample, sweep, compare with the oracle."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import config as config_mod
from .config import RunConfig
from .sampler import SampleGrid, nearest_node, query, sample_direction, sample_line, uniform_count

log = logging.getLogger(__name__)


@dataclass
class SweepPoint:
    x: np.ndarray
    nearest: tuple
    dmp_cost: float
    estimate: float
    gap: float
    distance: float
    blend: list
    true_cost: float = float("nan")
    states: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None

    @property
    def estimate_error(self) -> float:
        return abs(self.estimate - self.true_cost)


@dataclass
class Reproduction:
    grid: SampleGrid
    sweep: list = field(default_factory=list)
    uniform_nodes: int = 0
    uniform_nodes_span: int = 0

    @property
    def anchor_count(self) -> int:
        return len(self.grid)

    @property
    def min_spacing(self) -> float:
        return self.grid.min_spacing()

    @property
    def max_estimate_error(self) -> float:
        errs = [p.estimate_error for p in self.sweep]
        return float(np.nanmax(errs)) if errs else float("nan")


def sweep_points(cfg: RunConfig) -> np.ndarray:
    """Points of the region along the sampling direction at the sweep spacing."""
    s = cfg.sampler_config()
    lo, hi = s.region.lower, s.region.upper
    a = float((lo - s.start) @ s.direction)
    b = float((hi - s.start) @ s.direction)
    a, b = min(a, b), max(a, b)
    n = int(round((b - a) / cfg.sweep.spacing))
    offsets = a + cfg.sweep.spacing * np.arange(n + 1)
    return s.region.clip(s.start + offsets[:, None] * s.direction)


def _oracle_task(args):
    cfg_text, xf, warm = args
    cfg = config_mod.loads(cfg_text)
    return cfg.setup().optimal_cost(xf, warm)


def oracle_costs(cfg: RunConfig, points, warm=None, workers: int = 1) -> np.ndarray:
    """Fresh optimal-control solves at ``points`` (benchmark only)."""
    warm = [None] * len(points) if warm is None else warm
    if workers <= 1:
        setup = cfg.setup()
        return np.array([setup.optimal_cost(x, w) for x, w in zip(points, warm)])
    text = config_mod.dumps(cfg)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(_oracle_task, [(text, x, w) for x, w in zip(points, warm)])))


def run_sampling(cfg: RunConfig) -> SampleGrid:
    setup, scfg = cfg.setup(), cfg.sampler_config()
    if cfg.sampler.both_ways:
        return sample_line(scfg, setup)
    return sample_direction(scfg, setup)


def reproduce(
    cfg: Optional[RunConfig] = None,
    oracle: bool = True,
    workers: int = 1,
    keep_every: int = 10,
) -> Reproduction:
    cfg = RunConfig.example() if cfg is None else cfg
    setup = cfg.setup()
    grid = run_sampling(cfg)
    scfg = cfg.sampler_config()
    lo = float((scfg.region.lower - scfg.start) @ scfg.direction)
    hi = float((scfg.region.upper - scfg.start) @ scfg.direction)
    coords = grid.coords[0]
    out = Reproduction(
        grid=grid,
        uniform_nodes=uniform_count(min(lo, hi), max(lo, hi), grid.min_spacing()),
        uniform_nodes_span=uniform_count(coords.min(), coords.max(), grid.min_spacing()),
    )
    points = sweep_points(cfg)
    for x in points:
        res = query(grid, x, setup, cfg.sweep.blend)
        out.sweep.append(
            SweepPoint(
                x=x,
                nearest=res.nearest,
                dmp_cost=res.report.dmp_cost,
                estimate=res.report.estimated_optimal_cost,
                gap=res.report.gap,
                distance=res.report.goal_distance,
                blend=res.blended_from,
                states=res.trajectory.states[::keep_every],
                times=res.trajectory.times[::keep_every],
            )
        )
    if oracle:
        warm = [grid.nodes[p.nearest].backward for p in out.sweep]
        costs = oracle_costs(cfg, points, warm, workers)
        for p, c in zip(out.sweep, costs):
            p.true_cost = float(c)
    return out
