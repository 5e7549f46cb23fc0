"""Experiment configuration: a YAML file mapped onto nested dataclasses.

Unknown keys anywhere are errors, and every error names the dotted path of
the offending field.  The full schema with defaults is in
``docs/config_schema.md``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError

SCENARIOS = ("validate_kernels", "scatter_convergence", "recovery_sweep", "stability_curve",
             "modified_structure")
GENERATORS = ("gaussian_bump", "double_bump", "compactly_supported_smooth", "zero")
EPS_RULES = ("proportional", "fixed", "sigma_power", "l2_norm")
HORIZON_MODES = ("default", "sigma", "fixed")
RECOVERY_MODES = ("holder", "log_endpoint", "modified_difference")


@dataclass
class GridCfg:
    n: int = 256
    L: float = 64.0


@dataclass
class CoeffCfg:
    generator: str = "gaussian_bump"
    height: float = 1.0
    width: float = 1.0
    center: float = 0.0
    separation: float = 2.5


@dataclass
class NonlinCfg:
    kind: str = "power"
    p: float = 3.0


@dataclass
class ProbeCfg:
    sigmas: list = field(default_factory=lambda: [0.25])
    x0: list = field(default_factory=lambda: [0.0])
    eps_rule: str = "proportional"
    eps_value: float = 0.125


@dataclass
class SolverCfg:
    dt: typing.Optional[float] = None
    horizon: str = "sigma"
    horizon_value: float = 8.0
    t_max_factor: float = 1.0
    wrap_factor: float = 40.0
    tol_scatter: float = 1e-6
    strict: bool = False
    points_per_sigma: float = 4.0


@dataclass
class KernelParams:
    p_values: list = field(default_factory=lambda: [2.5, 3.0, 3.5, 4.0])
    k_points: list = field(default_factory=lambda: [0.0, 1.0, 2.0])
    xi_min: list = field(default_factory=lambda: [1e-3, 1e-6])
    residual_tol: float = 1e-3


@dataclass
class ScatterParams:
    p_values: list = field(default_factory=lambda: [2.0, 3.0])


@dataclass
class RecoveryParams:
    mode: str = "holder"


@dataclass
class StabilityParams:
    p_values: list = field(default_factory=lambda: [2.0, 2.5, 4.0])
    deltas: list = field(default_factory=lambda: [0.32, 0.16, 0.08, 0.04, 0.02])
    spike_center: float = 0.3
    spike_height: float = 1.0
    width_factor: float = 1.0
    probe_norm: float = 0.05
    probe_sigmas: list = field(default_factory=lambda: [0.02, 0.04, 0.08, 0.16, 0.32, 0.64])
    random_probes: int = 0
    max_velocity: float = 4.0


@dataclass
class StructureParams:
    structure_check: bool = True
    structure_sigma: float = 1.0
    structure_eps: list = field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005, 0.0025])
    structure_horizon: float = 16.0


@dataclass
class Tolerances:
    grid_independence: float = 0.05


PARAMS = {
    "validate_kernels": KernelParams,
    "scatter_convergence": ScatterParams,
    "recovery_sweep": RecoveryParams,
    "stability_curve": StabilityParams,
    "modified_structure": StructureParams,
}


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int = 0
    workers: int = 1
    refine: int = 0
    output_dir: typing.Optional[str] = None
    grid: GridCfg = field(default_factory=GridCfg)
    nonlinearity: NonlinCfg = field(default_factory=NonlinCfg)
    coefficient: CoeffCfg = field(default_factory=CoeffCfg)
    reference: typing.Optional[CoeffCfg] = None
    probes: ProbeCfg = field(default_factory=ProbeCfg)
    solver: SolverCfg = field(default_factory=SolverCfg)
    tolerances: Tolerances = field(default_factory=Tolerances)
    params: typing.Any = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """sha256 prefix of the canonical JSON, without the knobs that only affect wall time
        or file placement (workers, output_dir)."""
        d = self.to_dict()
        d.pop("workers")
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing


def _coerce(value, tp, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        out = []
        for i, v in enumerate(value):
            out.append(_coerce(v, float, f"{path}[{i}]"))
        return out
    return value


def _build(cls, data, path):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        kwargs[f.name] = _coerce(data[f.name], hints[f.name], sub)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(path or "<root>", str(exc)) from None


def _choice(value, allowed, path):
    if value not in allowed:
        raise ConfigError(path, f"must be one of {', '.join(allowed)}; got {value!r}")


def _positive(value, path):
    if not value > 0:
        raise ConfigError(path, f"must be positive, got {value}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check everything that can be checked before any solver run."""
    _choice(cfg.scenario, SCENARIOS, "scenario")
    n = cfg.grid.n
    if n < 16 or n & (n - 1):
        raise ConfigError("grid.n", f"must be a power of two >= 16, got {n}")
    _positive(cfg.grid.L, "grid.L")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    if cfg.refine < 0:
        raise ConfigError("refine", "must be >= 0")
    for name, cc in (("coefficient", cfg.coefficient), ("reference", cfg.reference)):
        if cc is None:
            continue
        _choice(cc.generator, GENERATORS, f"{name}.generator")
        _positive(cc.width, f"{name}.width")
        if abs(cc.center) + 8.6 * cc.width > 0.5 * cfg.grid.L:
            raise ConfigError(f"{name}.center", "coefficient support does not fit in the grid")
    _choice(cfg.nonlinearity.kind, ("power", "perturbed_cubic"), "nonlinearity.kind")
    if cfg.nonlinearity.kind == "power" and not 2.0 <= cfg.nonlinearity.p <= 4.0:
        raise ConfigError("nonlinearity.p", f"must lie in [2, 4], got {cfg.nonlinearity.p}")
    pr = cfg.probes
    _choice(pr.eps_rule, EPS_RULES, "probes.eps_rule")
    if not pr.sigmas:
        raise ConfigError("probes.sigmas", "must not be empty")
    for i, s in enumerate(pr.sigmas):
        _positive(s, f"probes.sigmas[{i}]")
        if s > cfg.grid.L / 10:
            raise ConfigError(f"probes.sigmas[{i}]", "probe wider than L/10")
    margin = 0.5 * cfg.grid.L - cfg.grid.L / 10
    for i, x in enumerate(pr.x0):
        if abs(x) > margin:
            raise ConfigError(f"probes.x0[{i}]", "lattice point within L/10 of the boundary")
    _positive(pr.eps_value, "probes.eps_value")
    sv = cfg.solver
    _choice(sv.horizon, HORIZON_MODES, "solver.horizon")
    if sv.dt is not None and not 0 < sv.dt <= 0.1:
        raise ConfigError("solver.dt", "must lie in (0, 0.1]")
    _positive(sv.horizon_value, "solver.horizon_value")
    if sv.t_max_factor < 1:
        raise ConfigError("solver.t_max_factor", "must be >= 1")
    _positive(sv.wrap_factor, "solver.wrap_factor")
    _positive(sv.tol_scatter, "solver.tol_scatter")
    _positive(sv.points_per_sigma, "solver.points_per_sigma")
    p = cfg.params
    if isinstance(p, RecoveryParams):
        _choice(p.mode, RECOVERY_MODES, "params.mode")
        if p.mode == "holder" and not 2.0 < cfg.nonlinearity.p <= 4.0:
            raise ConfigError("nonlinearity.p", "holder recovery needs 2 < p <= 4")
        if p.mode in ("log_endpoint", "modified_difference"):
            for i, s in enumerate(pr.sigmas):
                if s >= 0.5:
                    raise ConfigError(f"probes.sigmas[{i}]", "log normalization needs sigma < 0.5")
        if p.mode == "modified_difference" and cfg.reference is None:
            raise ConfigError("reference", "modified_difference needs a reference coefficient")
    if isinstance(p, StabilityParams):
        for i, pv in enumerate(p.p_values):
            if not 2.0 <= pv <= 4.0:
                raise ConfigError(f"params.p_values[{i}]", "must lie in [2, 4]")
        if not p.deltas:
            raise ConfigError("params.deltas", "must not be empty")
        for i, d in enumerate(p.deltas):
            if not (isinstance(d, (int, float)) and d >= 0):
                raise ConfigError(f"params.deltas[{i}]", "must be >= 0")
        _positive(p.probe_norm, "params.probe_norm")
        if p.random_probes < 0:
            raise ConfigError("params.random_probes", "must be >= 0")
    if isinstance(p, KernelParams):
        for i, pv in enumerate(p.p_values):
            if not 2.0 < pv <= 4.0:
                raise ConfigError(f"params.p_values[{i}]", "must lie in (2, 4]")
        for i, x in enumerate(p.xi_min):
            if not 0 < x < 1:
                raise ConfigError(f"params.xi_min[{i}]", "must lie in (0, 1)")
    if isinstance(p, StructureParams):
        for i, s in enumerate(pr.sigmas):
            if s >= 0.5:
                raise ConfigError(f"probes.sigmas[{i}]", "log normalization needs sigma < 0.5")
        for i, e in enumerate(p.structure_eps):
            _positive(e, f"params.structure_eps[{i}]")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    if "scenario" not in data:
        raise ConfigError("scenario", "missing required key")
    scen = data["scenario"]
    _choice(scen, SCENARIOS, "scenario")
    body = dict(data)
    params = body.pop("params", None)
    cfg = _build(ExperimentConfig, body, "")
    cfg.params = _build(PARAMS[scen], params, "params")
    return validate(cfg)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML parse error: {exc}") from None
    return from_dict(data or {})
