"""Text persistence for primitives and sampled grids.

A primitive file is a versioned header followed by labelled numeric blocks::

    optdmp-dmp 1
    params tau=8.0 D=20.0 kappa=100.0 alpha=3.0 N=15
    centers 15
    1.0 0.806...
    weights 2 15
    ...

Floats are written with ``repr`` so they read back bit-for-bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dmp import BasisSet, Dmp, DmpParams
from .errors import ContractError
from .sampler import Anchor, Box, SampleGrid
from .value import ValueAnchor

DMP_MAGIC = "optdmp-dmp"
DMP_VERSION = 1
GRID_VERSION = 1


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def dumps_dmp(dmp: Dmp) -> str:
    p = dmp.params
    n, N = dmp.weights.shape
    lines = [
        f"{DMP_MAGIC} {DMP_VERSION}",
        f"params tau={p.tau!r} D={p.D!r} kappa={p.kappa!r} alpha={p.alpha!r} N={p.N}",
        f"centers {N}",
        _fmt(dmp.basis.centers),
        f"widths {N}",
        _fmt(dmp.basis.widths),
        f"weights {n} {N}",
        *(_fmt(row) for row in dmp.weights),
        f"x0 {n}",
        _fmt(dmp.x0),
        f"v0 {n}",
        _fmt(dmp.v0),
        f"xf_anchor {n}",
        _fmt(dmp.xf_anchor),
        "anchor_cost 1",
        _fmt([dmp.anchor_cost]),
    ]
    grad = dmp.anchor_value_gradient
    if grad is not None:
        lines += [f"anchor_value_gradient {n}", _fmt(grad)]
    lines += ["fit_residual 1", _fmt([dmp.fit_residual])]
    return "\n".join(lines) + "\n"


def loads_dmp(text: str) -> Dmp:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != [DMP_MAGIC, str(DMP_VERSION)]:
        raise ContractError("not a version-1 primitive file")
    try:
        return _parse_dmp(lines)
    except (KeyError, IndexError, ValueError) as exc:
        if isinstance(exc, ContractError):
            raise
        raise ContractError(f"malformed primitive file: {exc!r}") from None


def _parse_dmp(lines) -> Dmp:
    head = lines[1].split()
    if head[0] != "params":
        raise ContractError("missing params line")
    kv = dict(item.split("=", 1) for item in head[1:])
    params = DmpParams(
        tau=float(kv["tau"]), D=float(kv["D"]), kappa=float(kv["kappa"]),
        alpha=float(kv["alpha"]), N=int(kv["N"]),
    )
    blocks = {}
    i = 2
    while i < len(lines):
        label, *dims = lines[i].split()
        dims = [int(d) for d in dims]
        rows = dims[0] if len(dims) == 2 else 1
        data = np.array([float(v) for ln in lines[i + 1 : i + 1 + rows] for v in ln.split()])
        blocks[label] = data.reshape(dims) if len(dims) == 2 else data
        i += 1 + rows
    basis = BasisSet(blocks["centers"], blocks["widths"])
    return Dmp(
        params,
        basis,
        blocks["weights"],
        x0=blocks["x0"],
        xf_anchor=blocks["xf_anchor"],
        anchor_cost=float(blocks["anchor_cost"][0]),
        anchor_value_gradient=blocks.get("anchor_value_gradient"),
        fit_residual=float(blocks["fit_residual"][0]),
        v0=blocks["v0"],
    )


def save_dmp(dmp: Dmp, path) -> None:
    Path(path).write_text(dumps_dmp(dmp))


def load_dmp(path) -> Dmp:
    return loads_dmp(Path(path).read_text())


def save_grid(grid: SampleGrid, directory, config_echo: dict | None = None) -> Path:
    """One directory per grid: ``manifest.json`` plus one primitive file per node."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nodes = []
    for k, index in enumerate(sorted(grid.nodes)):
        anchor = grid.nodes[index]
        name = f"anchor_{k:03d}.dmp"
        save_dmp(anchor.dmp, directory / name)
        nodes.append({"index": list(index), "xf": anchor.xf.tolist(), "file": name})
    manifest = {
        "format": "optdmp-grid",
        "version": GRID_VERSION,
        "region": {"lower": grid.region.lower.tolist(), "upper": grid.region.upper.tolist()},
        "origin": grid.origin.tolist(),
        "directions": grid.directions.tolist(),
        "coords": [np.asarray(c).tolist() for c in grid.coords],
        "nodes": nodes,
        "aborted": grid.aborted,
        "config": config_echo or {},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_grid(directory) -> tuple[SampleGrid, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != "optdmp-grid" or manifest.get("version") != GRID_VERSION:
        raise ContractError(f"{directory} is not a version-{GRID_VERSION} grid")
    nodes = {}
    for entry in manifest["nodes"]:
        dmp = load_dmp(directory / entry["file"])
        value = ValueAnchor(dmp.xf_anchor, dmp.anchor_cost, dmp.anchor_value_gradient)
        nodes[tuple(entry["index"])] = Anchor(xf=dmp.xf_anchor, dmp=dmp, value=value)
    grid = SampleGrid(
        origin=np.array(manifest["origin"], dtype=float),
        directions=np.array(manifest["directions"], dtype=float),
        coords=[np.array(c, dtype=float) for c in manifest["coords"]],
        nodes=nodes,
        region=Box(manifest["region"]["lower"], manifest["region"]["upper"]),
        aborted=manifest.get("aborted"),
    )
    return grid, manifest.get("config", {})
