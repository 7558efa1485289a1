"""Run configuration: a flat INI file of ``key = value`` sections."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .dmp import DmpParams
from .dynamics import get_system
from .errors import ContractError
from .ocp import BACKWARD, FORWARD, OcpProblem, quadratic_state_cost
from .sampler import Box, LearningSetup, SamplerConfig


def _vec(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ContractError(f"cannot parse vector {text!r}") from None


def _mat(text: str) -> tuple:
    rows = tuple(_vec(r) for r in text.split(";"))
    if len({len(r) for r in rows}) != 1:
        raise ContractError(f"ragged matrix {text!r}")
    return rows


def _fmt_vec(v) -> str:
    return ", ".join(repr(float(x)) for x in v)


def _fmt_mat(m) -> str:
    return "; ".join(_fmt_vec(r) for r in m)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ContractError(f"cannot parse boolean {text!r}")


@dataclass
class OcpSection:
    x0: tuple = (5.0, 5.0)
    xf: tuple = (5.0, 5.0)
    tf: float = 8.0
    R: tuple = ((1.0, 0.0), (0.0, 1.0))
    Q: Optional[tuple] = None
    n_intervals: int = 80
    direction: str = FORWARD
    pin_initial_input: bool = True


@dataclass
class DmpSection:
    D: float = 20.0
    alpha: float = 3.0
    N: int = 15
    rollout_dt: Optional[float] = None
    start_velocity: str = "drift"
    gradient_mode: str = "extrapolate"


@dataclass
class SamplerSection:
    start: tuple = (5.0, 5.0)
    direction: tuple = (1.0, 0.0)
    region_lower: tuple = (1.0, 5.0)
    region_upper: tuple = (9.0, 5.0)
    J_threshold: float = 10.0
    t_samples: int = 15
    delta_x: float = 0.2
    t_steps: int = 5
    both_ways: bool = True


@dataclass
class SweepSection:
    spacing: float = 0.05
    blend: str = "bilinear"


@dataclass
class RunConfig:
    system: str = "example_sys1"
    ocp: OcpSection = field(default_factory=OcpSection)
    dmp: DmpSection = field(default_factory=DmpSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    @classmethod
    def example(cls) -> "RunConfig":
        """Preset for the two-state benchmark.

        The benchmark's optimal paths end in a sharp boundary layer; 0.04 s
        collocation nodes and 60 kernels keep the primitive's reproduction
        cost within about 1 of the optimum, where the generic defaults
        (0.1 s nodes, 15 kernels) are off by more than the sampling threshold.
        """
        cfg = cls()
        cfg.ocp.n_intervals = 200
        cfg.dmp.N = 60
        return cfg

    # builders ---------------------------------------------------------------
    def dynamics(self):
        return get_system(self.system)

    def problem(self, xf=None) -> OcpProblem:
        o = self.ocp
        Q = None if o.Q is None else quadratic_state_cost(np.array(o.Q))
        return OcpProblem(
            self.dynamics(), o.x0, o.xf if xf is None else xf, o.tf, np.array(o.R), Q,
            o.n_intervals, pin_initial_input=o.pin_initial_input,
        )

    def setup(self) -> LearningSetup:
        o, d = self.ocp, self.dmp
        Q = None if o.Q is None else quadratic_state_cost(np.array(o.Q))
        return LearningSetup(
            dynamics=self.dynamics(),
            x0=o.x0,
            tf=o.tf,
            R=np.array(o.R),
            Q=Q,
            n_intervals=o.n_intervals,
            dmp_params=DmpParams(tau=o.tf, D=d.D, alpha=d.alpha, N=d.N),
            rollout_dt=d.rollout_dt,
            gradient_mode=d.gradient_mode,
            start_velocity=d.start_velocity,
        )

    def sampler_config(self) -> SamplerConfig:
        s = self.sampler
        v = np.array(s.direction, dtype=float)
        return SamplerConfig(
            start=s.start,
            direction=v / np.linalg.norm(v),
            region=Box(s.region_lower, s.region_upper),
            J_threshold=s.J_threshold,
            t_samples=s.t_samples,
            delta_x=s.delta_x,
            t_steps=s.t_steps,
        )

    def as_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {"ocp": OcpSection, "dmp": DmpSection, "sampler": SamplerSection, "sweep": SweepSection}
_VECTORS = {"x0", "xf", "start", "sampler.direction", "region_lower", "region_upper"}
_MATRICES = {"R", "Q"}


def _is_vector(section: str, name: str) -> bool:
    return name in _VECTORS or f"{section}.{name}" in _VECTORS


def _parse_value(section: str, name: str, default, text: str):
    text = text.strip()
    if name in _MATRICES:
        return None if text.lower() == "none" else _mat(text)
    if _is_vector(section, name):
        return _vec(text)
    if isinstance(default, bool):
        return _bool(text)
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError:
            raise ContractError(f"{name}: expected integer, got {text!r}") from None
    if isinstance(default, float) or name == "rollout_dt":
        if name == "rollout_dt" and text.lower() in ("none", "auto"):
            return None
        try:
            return float(text)
        except ValueError:
            raise ContractError(f"{name}: expected number, got {text!r}") from None
    return text


def _format_value(section: str, name: str, value) -> str:
    if value is None:
        return "auto" if name == "rollout_dt" else "none"
    if name in _MATRICES:
        return _fmt_mat(value)
    if _is_vector(section, name):
        return _fmt_vec(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ContractError(f"malformed config: {exc}") from None
    cfg = RunConfig()
    for section in parser.sections():
        if section == "system":
            for key, val in parser[section].items():
                if key != "name":
                    raise ContractError(f"unknown key system.{key}")
                cfg.system = val.strip()
            continue
        if section not in _SECTIONS:
            raise ContractError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        known = {f.name: f for f in fields(target)}
        for key, val in parser[section].items():
            if key not in known:
                raise ContractError(f"unknown key {section}.{key}")
            setattr(target, key, _parse_value(section, key, getattr(target, key), val))
    if cfg.ocp.direction not in (FORWARD, BACKWARD):
        raise ContractError(f"ocp.direction must be {FORWARD} or {BACKWARD}")
    if cfg.sweep.blend not in ("bilinear", "cost_weighted"):
        raise ContractError("sweep.blend must be bilinear or cost_weighted")
    get_system(cfg.system)
    return cfg


def dumps(cfg: RunConfig) -> str:
    lines = ["[system]", f"name = {cfg.system}", ""]
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{f.name} = {_format_value(section, f.name, getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ContractError(f"cannot read config {path}: {exc}") from None
