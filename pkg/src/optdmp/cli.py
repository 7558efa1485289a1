"""Command-line front end.

Exit codes: 0 success, 1 numerical or solver failure, 2 usage or config error.
Failures also leave ``error.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .errors import ContractError, OptDmpError, OutOfRegionError
from .ocp import BACKWARD, reverse_problem, reverse_trajectory, solve, write_trajectory_csv
from .sampler import query
from .storage import load_grid, save_grid

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error(None, "usage", message)
        raise SystemExit(EXIT_USAGE)


def _emit_error(out: Path | None, kind: str, message: str) -> None:
    record = {"error": kind, "message": message}
    print(json.dumps(record), file=sys.stderr)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(record, indent=2) + "\n")


def _load_config(path, example: bool = False) -> config_mod.RunConfig:
    if path is not None:
        return config_mod.load(path)
    return config_mod.RunConfig.example() if example else config_mod.RunConfig()


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])


def _state_header(n, prefix="x"):
    return [f"{prefix}{i + 1}" for i in range(n)]


# commands -------------------------------------------------------------------
def cmd_print_config(args) -> int:
    sys.stdout.write(config_mod.dumps(_load_config(args.config, args.example)))
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    problem = cfg.problem()
    if cfg.ocp.direction == BACKWARD:
        traj = solve(reverse_problem(problem))
    else:
        traj = solve(problem)
    args.out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, args.out / "trajectory.csv")
    rep = traj.report
    print(f"cost {traj.cost!r}")
    print(
        f"converged {str(traj.converged).lower()} outer {rep.outer_iterations} "
        f"inner {rep.inner_iterations} violation {rep.constraint_violation:.3e} "
        f"stationarity {rep.stationarity:.3e}"
    )
    if not traj.converged:
        _emit_error(args.out, "not_converged", rep.message)
        return EXIT_NUMERIC
    return EXIT_OK


def _write_grid_tables(grid, out: Path, cfg) -> None:
    n = grid.origin.size
    rows = []
    for k, index in enumerate(sorted(grid.nodes)):
        a = grid.nodes[index]
        rows.append([str(k), *a.xf, a.value.cost, *a.value.gradient, a.dmp.fit_residual])
    _write_rows(out / "anchors.csv",
                ["index", *_state_header(n), "cost", *_state_header(n, "grad"), "fit_residual"], rows)
    _write_rows(
        out / "trace.csv",
        ["anchor", "step", *_state_header(n, "p"), "dmp_cost", "estimate", "gap", "decision"],
        [[str(r.anchor_index), str(r.n_step), *r.point, r.dmp_cost, r.estimate, r.gap, r.decision]
         for r in grid.trace],
    )
    save_grid(grid, out / "grid", config_echo={"config": config_mod.dumps(cfg)})


def cmd_sample(args) -> int:
    from .experiment import run_sampling

    cfg = _load_config(args.config)
    grid = run_sampling(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_grid_tables(grid, args.out, cfg)
    print(f"anchors {len(grid)} min_spacing {grid.min_spacing()!r}")
    if grid.aborted:
        _emit_error(args.out, "sampling_aborted", grid.aborted)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .experiment import reproduce

    cfg = _load_config(args.config, example=True)
    res = reproduce(cfg, oracle=args.oracle, workers=args.workers)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write_grid_tables(res.grid, out, cfg)
    n = res.grid.origin.size
    xs = _state_header(n, "xq_")
    _write_rows(out / "sweep_reports.csv", [*xs, "dmp_cost", "estimate", "gap", "distance"],
                [[*p.x, p.dmp_cost, p.estimate, p.gap, p.distance] for p in res.sweep])
    _write_rows(out / "fig2a_trajectories.csv", [*xs, "t", *_state_header(n)],
                [[*p.x, t, *s] for p in res.sweep for t, s in zip(p.times, p.states)])
    if args.oracle:
        _write_rows(out / "fig2b_estimate_error.csv", [*xs, "estimate", "true_cost", "abs_error"],
                    [[*p.x, p.estimate, p.true_cost, p.estimate_error] for p in res.sweep])
        _write_rows(out / "fig2c_dmp_vs_true.csv", [*xs, "dmp_cost", "true_cost", "difference"],
                    [[*p.x, p.dmp_cost, p.true_cost, p.dmp_cost - p.true_cost] for p in res.sweep])
    _write_rows(out / "fig3_grid_comparison.csv",
                ["adaptive_nodes", "min_spacing", "uniform_nodes_region", "uniform_nodes_span"],
                [[str(res.anchor_count), res.min_spacing, str(res.uniform_nodes),
                  str(res.uniform_nodes_span)]])
    summary = {
        "anchor_count": res.anchor_count,
        "min_spacing": res.min_spacing,
        "uniform_nodes_region": res.uniform_nodes,
        "uniform_nodes_span": res.uniform_nodes_span,
        "max_estimate_error": res.max_estimate_error if args.oracle else None,
        "aborted": res.grid.aborted,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for k, v in summary.items():
        print(f"{k} {v}")
    if res.grid.aborted:
        _emit_error(out, "sampling_aborted", res.grid.aborted)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_query(args) -> int:
    grid, echo = load_grid(args.grid)
    cfg = config_mod.loads(echo["config"]) if "config" in echo else config_mod.RunConfig()
    setup = cfg.setup()
    xq = np.array(args.xq, dtype=float)
    if xq.size != grid.origin.size:
        raise ContractError(f"query needs {grid.origin.size} coordinates")
    res = query(grid, xq, setup, args.mode)
    args.out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(res.trajectory, args.out / "query_trajectory.csv")
    n = xq.size
    _write_rows(args.out / "query_report.csv",
                [*_state_header(n, "xq_"), "dmp_cost", "estimate", "gap", "distance"],
                [res.report.as_row(xq)])
    weights = ", ".join(f"{list(v)}:{w!r}" for v, w in res.blended_from)
    print(f"blend {weights}")
    print(f"blend_sum {sum(w for _, w in res.blended_from)!r}")
    print(f"nearest {list(res.nearest)} extrapolated {str(res.extrapolated).lower()}")
    print(f"dmp_cost {res.report.dmp_cost!r} estimate {res.report.estimated_optimal_cost!r} "
          f"gap {res.report.gap!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="optdmp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_default="out"):
        sp.add_argument("-c", "--config", type=Path, default=None, help="INI run configuration")
        sp.add_argument("-o", "--out", type=Path, default=Path(out_default))

    sp = sub.add_parser("print-config", help="print the (default or given) configuration")
    sp.add_argument("-c", "--config", type=Path, default=None)
    sp.add_argument("--example", action="store_true",
                    help="print the benchmark preset used by reproduce-example")
    sp.set_defaults(func=cmd_print_config, out=None)

    sp = sub.add_parser("solve", help="one optimal control solve")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sample", help="run the adaptive sampler and store the grid")
    common(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("reproduce-example", help="sampler + dense sweep on the benchmark")
    common(sp)
    sp.add_argument("--oracle", action=argparse.BooleanOptionalAction, default=True,
                    help="solve the reference optimal cost at every sweep point")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("query", help="blend a stored grid at a new goal")
    sp.add_argument("grid", type=Path)
    sp.add_argument("xq", type=float, nargs="+")
    sp.add_argument("--mode", choices=("bilinear", "cost_weighted"), default="bilinear")
    sp.add_argument("-o", "--out", type=Path, default=Path("out"))
    sp.set_defaults(func=cmd_query)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    out = getattr(args, "out", None)
    try:
        return args.func(args)
    except OutOfRegionError as exc:
        _emit_error(out, "out_of_region", str(exc))
        return EXIT_NUMERIC
    except ContractError as exc:
        _emit_error(out, "config", str(exc))
        return EXIT_USAGE
    except (OptDmpError, ArithmeticError) as exc:
        _emit_error(out, "numerical", str(exc))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
