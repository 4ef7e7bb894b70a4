"""Experiment configuration: a YAML document with nested sections.

Example::

    system:
      preset: basic      # or give A, B, C, F, G, H, Q, R as nested lists
      d: 1
      epsilon: 0.1
    sweep:
      n: 1..8
      theta: [0.97]
      epsilon: [0.1]
      modes: [perfect]
    sim: {dt: 0.001, horizon: 10.0, trials: 1, seed: 0}
    output: {dir: out, format: csv}

``render_config`` always writes explicit matrices, so
``parse_config(render_config(c)) == c``.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np
import yaml

from .errors import LeqgError, SpecError
from .kron import SystemSpec, basic_spec

__all__ = [
    "ConfigError",
    "SystemConfig",
    "SweepConfig",
    "SimSection",
    "TrajectoryConfig",
    "OutputConfig",
    "ExperimentConfig",
    "parse_config",
    "render_config",
    "load_config",
    "preset",
    "config_hash",
]

MATRIX_KEYS = ("A", "B", "C", "F", "G", "H", "Q", "R")
MODES = ("perfect", "imperfect")


class ConfigError(LeqgError, ValueError):
    def __init__(self, field_path, message, line=None):
        self.field = field_path
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_path}: {message}")


@dataclass
class SystemConfig:
    A: List[List[float]]
    B: List[List[float]]
    C: List[List[float]]
    F: List[List[float]]
    G: List[List[float]]
    H: List[List[float]]
    Q: List[List[float]]
    R: List[List[float]]
    epsilon: float = 0.0

    def to_spec(self):
        return SystemSpec(**{k: np.array(getattr(self, k), dtype=float) for k in MATRIX_KEYS},
                          epsilon=self.epsilon)

    @classmethod
    def from_spec(cls, spec):
        return cls(**{k: getattr(spec, k).tolist() for k in MATRIX_KEYS}, epsilon=spec.epsilon)


@dataclass
class SweepConfig:
    n: List[int] = field(default_factory=lambda: list(range(1, 9)))
    theta: List[float] = field(default_factory=lambda: [0.97])
    epsilon: List[float] = field(default_factory=lambda: [0.1])
    modes: List[str] = field(default_factory=lambda: ["perfect"])
    mc: bool = False
    theta_star: bool = False
    jobs: int = 1


@dataclass
class SimSection:
    dt: float = 1e-3
    horizon: float = 10.0
    trials: int = 1
    seed: int = 0
    evader_mode: str = "model"
    measurement_noise: bool = True
    burn_in: Optional[float] = None


@dataclass
class TrajectoryConfig:
    n: int = 4
    measurement: str = "perfect"
    theta_abs: Optional[float] = None
    evader_mode: str = "frozen"
    x0_mean: Optional[List[float]] = None
    x0_cov: float = 1.0
    record_every: int = 10


@dataclass
class OutputConfig:
    dir: str = "out"
    format: str = "csv"


@dataclass
class ExperimentConfig:
    system: SystemConfig
    sweep: SweepConfig = field(default_factory=SweepConfig)
    sim: SimSection = field(default_factory=SimSection)
    trajectories: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def spec(self):
        return self.system.to_spec()


def preset(name="basic", d=1, epsilon=0.0):
    if name != "basic":
        raise ConfigError("system.preset", f"unknown preset {name!r}")
    return ExperimentConfig(system=SystemConfig.from_spec(basic_spec(d=d, epsilon=epsilon)))


class _Locator:
    """Maps dotted field paths to source lines of the YAML document."""

    def __init__(self, text):
        try:
            self.root = yaml.compose(text)
        except yaml.YAMLError:
            self.root = None

    def line(self, path):
        node = self.root
        line = None
        for part in path.split("."):
            if not isinstance(node, yaml.MappingNode):
                break
            for key, value in node.value:
                if key.value == part:
                    line = key.start_mark.line + 1
                    node = value
                    break
            else:
                break
        return line


def _number(value, path, loc, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}", loc.line(path))
    if kind is int:
        if int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}", loc.line(path))
        return int(value)
    if not np.isfinite(value):
        raise ConfigError(path, "must be finite", loc.line(path))
    return float(value)


def _matrix(value, path, loc):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [[value]]
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(path, "expected a matrix as a nested list of rows", loc.line(path))
    width = len(value[0])
    rows = []
    for i, row in enumerate(value):
        if len(row) != width:
            raise ConfigError(path, f"row {i} has {len(row)} entries, expected {width}", loc.line(path))
        rows.append([_number(v, path, loc) for v in row])
    return rows


def _number_list(value, path, loc, kind=float):
    if not isinstance(value, list):
        value = [value]
    return [_number(v, path, loc, kind) for v in value]


def _n_values(value, path, loc):
    if isinstance(value, str):
        try:
            lo, hi = (int(s) for s in value.split(".."))
        except ValueError:
            raise ConfigError(path, f"expected 'a..b' or a list of integers, got {value!r}",
                              loc.line(path)) from None
        values = list(range(lo, hi + 1))
    elif isinstance(value, dict):
        try:
            values = list(range(int(value["from"]), int(value["to"]) + 1))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(path, "range mapping needs integer 'from' and 'to'", loc.line(path)) from None
    else:
        values = _number_list(value, path, loc, int)
    if not values or min(values) < 1:
        raise ConfigError(path, "agent counts must be >= 1", loc.line(path))
    return values


def _section(data, name, loc):
    value = data.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigError(name, "expected a mapping", loc.line(name))
    return value


def _reject_unknown(section, allowed, prefix, loc):
    for key in section:
        if key not in allowed:
            path = f"{prefix}.{key}"
            raise ConfigError(path, "unknown field", loc.line(path))


def _parse_system(raw, loc):
    _reject_unknown(raw, set(MATRIX_KEYS) | {"epsilon", "preset", "d"}, "system", loc)
    eps = _number(raw.get("epsilon", 0.0), "system.epsilon", loc)
    if "preset" in raw:
        d = _number(raw.get("d", 1), "system.d", loc, int)
        if d < 1:
            raise ConfigError("system.d", "must be >= 1", loc.line("system.d"))
        base = preset(raw["preset"], d=d, epsilon=eps).system
    else:
        missing = [k for k in MATRIX_KEYS if k not in raw]
        if missing and raw:
            raise ConfigError(f"system.{missing[0]}", "missing (give all matrices or use a preset)",
                              loc.line("system"))
        base = preset("basic", epsilon=eps).system
    values = asdict(base)
    for k in MATRIX_KEYS:
        if k in raw:
            values[k] = _matrix(raw[k], f"system.{k}", loc)
    values["epsilon"] = eps
    cfg = SystemConfig(**values)
    try:
        cfg.to_spec()
    except SpecError as exc:
        path = f"system.{exc.field}"
        raise ConfigError(path, str(exc).split(": ", 1)[-1], loc.line(path)) from None
    return cfg


def _choice(value, allowed, path, loc):
    if value not in allowed:
        raise ConfigError(path, f"expected one of {list(allowed)}, got {value!r}", loc.line(path))
    return value


def _bool(value, path, loc):
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true/false, got {value!r}", loc.line(path))
    return value


def _parse_sweep(raw, loc):
    _reject_unknown(raw, {f.name for f in fields(SweepConfig)}, "sweep", loc)
    out = SweepConfig()
    if "n" in raw:
        out.n = _n_values(raw["n"], "sweep.n", loc)
    if "theta" in raw:
        out.theta = _number_list(raw["theta"], "sweep.theta", loc)
    if "epsilon" in raw:
        out.epsilon = _number_list(raw["epsilon"], "sweep.epsilon", loc)
        if min(out.epsilon) < 0:
            raise ConfigError("sweep.epsilon", "must be >= 0", loc.line("sweep.epsilon"))
    if "modes" in raw:
        modes = raw["modes"] if isinstance(raw["modes"], list) else [raw["modes"]]
        out.modes = [_choice(m, MODES, "sweep.modes", loc) for m in modes]
    for key in ("mc", "theta_star"):
        if key in raw:
            setattr(out, key, _bool(raw[key], f"sweep.{key}", loc))
    if "jobs" in raw:
        out.jobs = _number(raw["jobs"], "sweep.jobs", loc, int)
        if out.jobs < 1:
            raise ConfigError("sweep.jobs", "must be >= 1", loc.line("sweep.jobs"))
    return out


def _parse_sim(raw, loc):
    _reject_unknown(raw, {f.name for f in fields(SimSection)}, "sim", loc)
    out = SimSection()
    for key in ("dt", "horizon"):
        if key in raw:
            setattr(out, key, _number(raw[key], f"sim.{key}", loc))
    for key in ("trials", "seed"):
        if key in raw:
            setattr(out, key, _number(raw[key], f"sim.{key}", loc, int))
    if "evader_mode" in raw:
        out.evader_mode = _choice(raw["evader_mode"], ("model", "frozen"), "sim.evader_mode", loc)
    if "measurement_noise" in raw:
        out.measurement_noise = _bool(raw["measurement_noise"], "sim.measurement_noise", loc)
    if raw.get("burn_in") is not None:
        out.burn_in = _number(raw["burn_in"], "sim.burn_in", loc)
    if not out.dt > 0:
        raise ConfigError("sim.dt", "must be positive", loc.line("sim.dt"))
    if not out.horizon >= out.dt:
        raise ConfigError("sim.horizon", "must be >= dt", loc.line("sim.horizon"))
    if out.trials < 1:
        raise ConfigError("sim.trials", "must be >= 1", loc.line("sim.trials"))
    if out.seed < 0:
        raise ConfigError("sim.seed", "must be >= 0", loc.line("sim.seed"))
    return out


def _parse_trajectories(raw, loc):
    _reject_unknown(raw, {f.name for f in fields(TrajectoryConfig)}, "trajectories", loc)
    out = TrajectoryConfig()
    if "n" in raw:
        out.n = _number(raw["n"], "trajectories.n", loc, int)
        if out.n < 1:
            raise ConfigError("trajectories.n", "must be >= 1", loc.line("trajectories.n"))
    if "measurement" in raw:
        out.measurement = _choice(raw["measurement"], MODES, "trajectories.measurement", loc)
    if raw.get("theta_abs") is not None:
        out.theta_abs = _number(raw["theta_abs"], "trajectories.theta_abs", loc)
    if "evader_mode" in raw:
        out.evader_mode = _choice(raw["evader_mode"], ("model", "frozen"), "trajectories.evader_mode", loc)
    if raw.get("x0_mean") is not None:
        out.x0_mean = _number_list(raw["x0_mean"], "trajectories.x0_mean", loc)
    if "x0_cov" in raw:
        out.x0_cov = _number(raw["x0_cov"], "trajectories.x0_cov", loc)
        if out.x0_cov < 0:
            raise ConfigError("trajectories.x0_cov", "must be >= 0", loc.line("trajectories.x0_cov"))
    if "record_every" in raw:
        out.record_every = _number(raw["record_every"], "trajectories.record_every", loc, int)
        if out.record_every < 1:
            raise ConfigError("trajectories.record_every", "must be >= 1",
                              loc.line("trajectories.record_every"))
    return out


def _parse_output(raw, loc):
    _reject_unknown(raw, {"dir", "format"}, "output", loc)
    out = OutputConfig()
    if "dir" in raw:
        out.dir = str(raw["dir"])
    if "format" in raw:
        out.format = _choice(raw["format"], ("csv", "json"), "output.format", loc)
    return out


def parse_config(text):
    """Parse a YAML config document into an :class:`ExperimentConfig`."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError("<document>", f"invalid YAML: {getattr(exc, 'problem', exc)}", line) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<document>", "top level must be a mapping")
    loc = _Locator(text)
    _reject_unknown(data, {"system", "sweep", "sim", "trajectories", "output"}, "<document>", loc)
    return ExperimentConfig(
        system=_parse_system(_section(data, "system", loc), loc),
        sweep=_parse_sweep(_section(data, "sweep", loc), loc),
        sim=_parse_sim(_section(data, "sim", loc), loc),
        trajectories=_parse_trajectories(_section(data, "trajectories", loc), loc),
        output=_parse_output(_section(data, "output", loc), loc),
    )


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def render_config(cfg):
    return yaml.safe_dump(asdict(cfg), sort_keys=False, default_flow_style=None)


def config_hash(cfg):
    """Hash of everything that affects results; the output directory is excluded."""
    data = asdict(cfg)
    data["output"].pop("dir")
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
