import csv
import json

import numpy as np
import pytest

from optdmp import config
from optdmp.cli import main
from optdmp.errors import ContractError
from optdmp.ocp import read_trajectory_csv
from optdmp.sampler import query
from optdmp.storage import load_grid

LQ = """\
[system]
name = single_integrator

[ocp]
x0 = 0
xf = 1
tf = 1
R = 1
n_intervals = 40
pin_initial_input = false
"""

TOY = """\
[system]
name = single_integrator

[ocp]
x0 = 0
xf = 0.5
tf = 1
R = 1
n_intervals = 20

[dmp]
N = 10
rollout_dt = 0.005

[sampler]
start = 0.5
direction = 1
region_lower = 0.2
region_upper = 0.9
J_threshold = 0.02
t_samples = 4
delta_x = 0.1
t_steps = 2
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toy")
    ini = write(tmp, TOY)
    assert main(["sample", "-c", str(ini), "-o", str(tmp / "out")]) == 0
    return ini, tmp / "out"


# --- config ------------------------------------------------------------------

def test_defaults_round_trip():
    text = config.dumps(config.RunConfig())
    assert config.dumps(config.loads(text)) == text
    ex = config.dumps(config.RunConfig.example())
    assert config.dumps(config.loads(ex)) == ex


def test_normalisation_is_idempotent():
    once = config.dumps(config.loads(TOY))
    assert config.dumps(config.loads(once)) == once


def test_example_preset_carries_benchmark_constants():
    s = config.RunConfig.example().sampler_config()
    assert (s.J_threshold, s.t_samples, s.delta_x, s.t_steps) == (10.0, 15, 0.2, 5)
    np.testing.assert_array_equal(s.direction, [1, 0])
    np.testing.assert_array_equal(s.region.lower, [1, 5])
    np.testing.assert_array_equal(s.region.upper, [9, 5])


@pytest.mark.parametrize("text", [
    "[ocp]\ntf = eight\n",
    "[ocp]\nunknown = 1\n",
    "[mystery]\na = 1\n",
    "not an ini file",
    "[ocp]\nR = 1, 2; 3\n",
])
def test_malformed_config(text):
    with pytest.raises(ContractError):
        config.loads(text)


# --- commands ----------------------------------------------------------------

def test_print_config(capsys):
    assert main(["print-config"]) == 0
    assert capsys.readouterr().out == config.dumps(config.RunConfig())


def test_solve_lq(tmp_path, capsys):
    ini = write(tmp_path, LQ)
    assert main(["solve", "-c", str(ini), "-o", str(tmp_path / "o")]) == 0
    lines = capsys.readouterr().out.splitlines()
    cost = float(lines[0].split()[1])
    assert abs(cost - 1.0) <= 1e-5
    assert lines[1].startswith("converged true")


def test_solve_default_grid(tmp_path):
    assert main(["solve", "-o", str(tmp_path)]) == 0
    rows = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "t,x1,x2,u1,u2"
    assert len(rows) - 1 == 81
    traj = read_trajectory_csv(tmp_path / "trajectory.csv")
    np.testing.assert_allclose(traj.states[-1], [5, 5], atol=1e-6)


def test_malformed_config_exit_code(tmp_path):
    ini = write(tmp_path, "[ocp]\ntf = -1\n")
    assert main(["solve", "-c", str(ini), "-o", str(tmp_path / "o")]) == 2
    record = json.loads((tmp_path / "o" / "error.json").read_text())
    assert record["error"] == "config"


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_non_convergence_exit_code(tmp_path, monkeypatch):
    import optdmp.cli as cli

    real = cli.solve

    def hobbled(problem, guess=None):
        return real(problem, guess, max_outer=1, max_inner=2)

    monkeypatch.setattr(cli, "solve", hobbled)
    assert main(["solve", "-o", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "not_converged"


def test_sample_writes_grid(toy_run):
    _, out = toy_run
    grid, echo = load_grid(out / "grid")
    assert 1 <= len(grid) <= 4
    assert "config" in echo
    with open(out / "anchors.csv") as fh:
        assert len(list(csv.reader(fh))) == len(grid) + 1
    assert (out / "trace.csv").exists()


def test_query_at_anchor(toy_run, tmp_path, capsys):
    _, out = toy_run
    grid, _ = load_grid(out / "grid")
    x = grid.anchors[0].xf
    assert main(["query", str(out / "grid"), repr(float(x[0])), "-o", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert "blend_sum 1.0" in printed
    gap = float(printed.split("gap ")[-1])
    assert abs(gap) <= max(1e-2, 10 * grid.anchors[0].dmp.fit_residual)


def test_query_matches_library(toy_run, tmp_path, capsys):
    ini, out = toy_run
    grid, _ = load_grid(out / "grid")
    xq = 0.5 * (grid.anchors[0].xf + grid.anchors[1].xf)
    assert main(["query", str(out / "grid"), repr(float(xq[0])), "-o", str(tmp_path)]) == 0
    assert "blend_sum 1.0" in capsys.readouterr().out
    res = query(grid, xq, config.load(ini).setup())
    with open(tmp_path / "query_report.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["xq_1", "dmp_cost", "estimate", "gap", "distance"]
    assert float(rows[1][3]) == res.report.gap


def test_query_out_of_region(toy_run, tmp_path):
    _, out = toy_run
    assert main(["query", str(out / "grid"), "5.0", "-o", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "out_of_region"


def test_outputs_are_deterministic(toy_run, tmp_path):
    ini, out = toy_run
    assert main(["sample", "-c", str(ini), "-o", str(tmp_path)]) == 0
    for name in ("anchors.csv", "trace.csv", "grid/manifest.json", "grid/anchor_000.dmp"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()
