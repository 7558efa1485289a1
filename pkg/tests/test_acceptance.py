"""Acceptance criteria for the library, one PASS/FAIL line each.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the lines; they are
also written to ``acceptance_report.txt`` next to this file. The benchmark
reproduction takes several minutes and is shared by criteria 4, 5, 6, 7 and 9.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from optdmp.config import RunConfig
from optdmp.dmp import DmpParams, deviation, learn_weights, make_dmp, rollout
from optdmp.experiment import reproduce
from optdmp.ocp import FEAS_TOL, reverse_problem, reverse_trajectory, solve
from optdmp.value import first_order_estimate, learning_residual_bound

pytestmark = pytest.mark.slow

REPORT = Path(__file__).with_name("acceptance_report.txt")
_lines = {}


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    _lines[number] = line
    REPORT.write_text("\n".join(_lines[k] for k in sorted(_lines)) + "\n")
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module")
def cfg():
    return RunConfig.example()


@pytest.fixture(scope="module")
def setup(cfg):
    return cfg.setup()


@pytest.fixture(scope="module")
def repro(cfg):
    return reproduce(cfg, oracle=True)


@pytest.fixture(scope="module")
def probe_anchors(repro):
    """First, middle and last anchor of the benchmark grid."""
    anchors = repro.grid.anchors
    return [anchors[0], anchors[len(anchors) // 2], anchors[-1]]


def random_primitive(rng, n=2, N=15):
    tau = rng.uniform(0.5, 10.0)
    p = DmpParams(tau=tau, D=rng.uniform(2.0, 40.0), alpha=rng.uniform(1.0, 6.0), N=N)
    W = rng.normal(scale=rng.uniform(1, 500), size=(n, N))
    return make_dmp(p, W, rng.uniform(-5, 5, n), rng.uniform(-5, 5, n), v0=rng.normal(size=n))


def test_criterion_1_deviation_equality():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = -np.inf
    for _ in range(50):
        dmp = random_primitive(rng)
        g1, g2 = rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2)
        dist = np.linalg.norm(g1 - g2)
        tau = dmp.params.tau
        dt = tau / 200
        a = rollout(dmp, g1, dt=dt).states
        b = rollout(dmp, g2, dt=dt).states
        measured = np.linalg.norm(a - b, axis=1)
        closed = deviation(dmp.params, np.linspace(0, tau, 201), dist)
        # RK4 error of the difference system by step doubling
        a2 = rollout(dmp, g1, dt=dt / 2).states[::2]
        b2 = rollout(dmp, g2, dt=dt / 2).states[::2]
        rk4 = np.abs(np.linalg.norm(a2 - b2, axis=1) - measured).max()
        excess = np.abs(measured - closed).max() - (1e-4 * dist + 10 * rk4)
        worst = max(worst, excess)
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 0 and elapsed < 10,
            f"50 primitives, worst (error - tolerance) {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_time_reversal(cfg):
    start = time.perf_counter()
    details, ok = [], True
    for xf in [(3.0, 5.0), (5.0, 5.0), (7.0, 5.0)]:
        p = cfg.problem(np.array(xf))
        fwd, bwd = solve(p), solve(reverse_problem(p))
        dc = abs(fwd.cost - bwd.cost)
        dx = np.abs(fwd.states - reverse_trajectory(bwd).states).max()
        ok &= fwd.converged and bwd.converged and dc <= 1e-3 * (1 + fwd.cost) and dx <= 10 * FEAS_TOL
        details.append(f"{xf}: dcost {dc:.1e} dstate {dx:.1e}")
    elapsed = time.perf_counter() - start
    verdict(2, ok and elapsed < 60, "; ".join(details) + f"; {elapsed:.0f}s")


def test_criterion_3_gradient_oracle(cfg, setup):
    start = time.perf_counter()
    delta, details, ok = 0.05, [], True
    for xf in [(3.0, 5.0), (5.0, 5.0), (7.0, 5.0)]:
        anchor = setup.build_anchor(np.array(xf))
        fd = np.array([
            (setup.optimal_cost(anchor.xf + delta * e, anchor.backward)
             - setup.optimal_cost(anchor.xf - delta * e, anchor.backward)) / (2 * delta)
            for e in np.eye(2)
        ])
        rel = np.linalg.norm(anchor.value.gradient - fd) / np.linalg.norm(fd)
        ok &= rel <= 0.05
        details.append(f"{xf}: rel {rel:.1e}")
    elapsed = time.perf_counter() - start
    verdict(3, ok and elapsed < 120, "; ".join(details) + f"; {elapsed:.0f}s")


def test_criterion_4_anchor_count(repro):
    n, uniform = repro.anchor_count, repro.uniform_nodes
    verdict(4, n <= 15 and uniform >= 2 * n,
            f"{n} anchors, min spacing {repro.min_spacing:.3f}, uniform grid needs {uniform} "
            f"(required >= {2 * n})")


def remainder_ratios(setup, anchors, direction):
    ratios = []
    for a in anchors:
        errs = []
        for d in (0.4, 0.2):
            q = a.xf + d * np.asarray(direction)
            errs.append(abs(first_order_estimate(a.value, q) - setup.optimal_cost(q, a.backward)))
        ratios.append((errs[1] / errs[0], errs[0], errs[1]))
    return ratios


@pytest.fixture(scope="module")
def remainder(setup, probe_anchors):
    along_x2 = remainder_ratios(setup, probe_anchors, (0.0, 1.0))
    along_x1 = remainder_ratios(setup, probe_anchors, (1.0, 0.0))
    return along_x2, along_x1


def test_criterion_5_estimation_error(repro, remainder):
    err = repro.max_estimate_error
    in_band = np.isfinite(err) and 0.5 <= err <= 1.6
    fallback = all(r <= 0.6 for r, _, _ in remainder[0])
    note = "within [0.5, 1.6]" if in_band else "outside [0.5, 1.6], relies on criterion 6"
    verdict(5, bool(np.isfinite(err) and (in_band or fallback)),
            f"max |estimate - optimal| over sweep {err:.3e}, {note}")


def test_criterion_6_first_order_remainder(remainder):
    along_x2, along_x1 = remainder
    ok = len(along_x2) >= 3 and all(r <= 0.6 for r, _, _ in along_x2)
    x2 = ", ".join(f"{r:.2f} ({e1:.1e}->{e2:.1e})" for r, e1, e2 in along_x2)
    x1 = ", ".join(f"{e1:.1e}->{e2:.1e}" for _, e1, e2 in along_x1)
    verdict(6, ok, f"ratios along x2: {x2}; along x1 errors at solver floor: {x1}")


def test_criterion_7_goal_stability(repro, setup):
    rng = np.random.default_rng(7)
    excess_random, rates = [], []
    for _ in range(50):
        dmp = random_primitive(rng)
        goal = rng.uniform(-5, 5, 2)
        end = rollout(dmp, goal, horizon=3 * dmp.params.tau).states[-1]
        excess_random.append(np.linalg.norm(end - goal) - (1e-3 * np.linalg.norm(goal - dmp.x0) + 1e-6))
        rates.append((dmp.params.alpha, dmp.params.D))
    excess_random, rates = np.array(excess_random), np.array(rates)
    worst_bench = -np.inf
    goals = [p.x for p in repro.sweep[::8]]
    for a in repro.grid.anchors:
        for goal in goals:
            end = rollout(a.dmp, goal, dt=setup.rollout_dt, horizon=3 * setup.tf).states[-1]
            worst_bench = max(worst_bench, np.linalg.norm(end - goal)
                              - (1e-3 * np.linalg.norm(goal - a.dmp.x0) + 1e-6))
    bad = excess_random > 0
    slowest = ""
    if bad.any():
        (a_lo, d_lo), (a_hi, d_hi) = rates[bad].min(axis=0), rates[bad].max(axis=0)
        slowest = f" (alpha {a_lo:.1f}-{a_hi:.1f}, D {d_lo:.0f}-{d_hi:.0f})"
    verdict(7, not bad.any() and worst_bench <= 0,
            f"random primitives {bad.sum()}/50 miss the goal{slowest}, "
            f"worst excess {excess_random.max():.1e}; "
            f"benchmark primitives worst excess {worst_bench:.1e}")


def test_criterion_8_round_trip():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        p = DmpParams(tau=8.0)
        dmp = make_dmp(p, rng.normal(scale=300, size=(2, 15)), rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2))
        source = rollout(dmp)
        again = rollout(learn_weights(source, p))
        worst = max(worst, np.abs(again.states - source.states).max())
    verdict(8, worst <= 1e-3, f"10 primitives, worst sup-norm {worst:.2e}")


def test_criterion_9_suboptimality(repro, setup):
    anchor_ok, worst_ratio = True, 0.0
    for a in repro.grid.anchors:
        traj, rep = setup.report(a.dmp, a.xf, a.value)
        bound = learning_residual_bound(traj, a.forward, setup.R, a.value.cost, setup.Q)
        anchor_ok &= rep.gap <= bound
        worst_ratio = max(worst_ratio, rep.gap / bound if bound > 0 else np.inf)
    threshold = RunConfig.example().sampler.J_threshold
    segments = [(np.array(r.anchor_point), np.array(r.point)) for r in repro.grid.trace
                if r.decision == "continue"]
    checked, sweep_ok, worst_margin = 0, True, -np.inf
    for p in repro.sweep:
        for a, b in segments:
            span = b - a
            s = (p.x - a) @ span / (span @ span)
            if 0 <= s <= 1 + 1e-9 and np.linalg.norm(a + s * span - p.x) < 1e-9:
                remainder_ = abs(p.true_cost - p.estimate)
                margin = p.gap - (threshold + remainder_)
                worst_margin = max(worst_margin, margin)
                sweep_ok &= margin < 0
                checked += 1
                break
    verdict(9, bool(anchor_ok and sweep_ok and checked > 0),
            f"{len(repro.grid)} anchors, worst gap/bound {worst_ratio:.2f}; "
            f"{checked} sweep points in accepted segments, worst gap - (threshold + remainder) "
            f"{worst_margin:.2f}")
