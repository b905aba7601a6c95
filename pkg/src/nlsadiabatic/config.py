"""Run configuration for the command-line front end.

A config is a nested mapping with one section per dataclass below. Files may
be TOML or JSON; ``--set section.key=value`` overrides any entry. Every numeric
default used anywhere in the package is listed in :func:`defaults_table`.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from . import adiabatic, dynamics, geometry, models, state, stationary
from .errors import ConfigError
from .models import LinearModel, TwoLevelModel

COMMANDS = ("levels", "portrait", "fixed-points", "orbit", "sweep", "ladder")
OPTIONAL_FLOATS = {"orbit.q", "orbit.p", "sweep.sample_dR"}
OPTIONAL_STRINGS = {"sweep.label"}


@dataclass
class ModelSection:
    c: float = 2.0
    v: float = 1.0
    matrix: list | None = None      # rows of numbers or [re, im] pairs; replaces c, v
    r_matrix: list | None = None


@dataclass
class LevelsSection:
    R_min: float = -4.0
    R_max: float = 4.0
    ds_max: float = 0.02


@dataclass
class PortraitSection:
    R: float = stationary.REFERENCE_R
    n_q: int = 241
    n_p: int = 201
    n_contours: int = 24


@dataclass
class FixedPointsSection:
    R: float = stationary.REFERENCE_R
    grid: int = stationary.GRID
    edge: float = stationary.EDGE


@dataclass
class OrbitSection:
    R: float = 0.0
    upper_population: float = 0.25
    # with zero phase the default c = 2 state sits on the fixed point p = 1/2 + sqrt(3)/4
    phase: float = math.pi / 2
    q: float | None = None          # give q and p to start from canonical coordinates
    p: float | None = None
    n_samples: int = geometry.N_SAMPLES
    max_time: float = 1000.0


@dataclass
class SweepSection:
    R0: float = -10.0
    R1: float = 10.0
    alpha: float = 1e-4
    upper_population: float = 0.1
    phase: float = 0.0
    label: str | None = None
    sample_dR: float | None = None      # None: automatic, resolves the slowest orbit
    delta_follow: float = adiabatic.DELTA_FOLLOW
    omega_floor: float = adiabatic.OMEGA_FLOOR


@dataclass
class LadderSection:
    alphas: list = field(default_factory=lambda: [1e-3, 1e-4, 1e-5])
    jobs: int = 1
    # accumulated global error must stay below the O(alpha^2) drift at the smallest rate
    rtol: float = 1e-13
    atol: float = 1e-15


@dataclass
class IntegratorSection:
    method: str = "dop853"
    rtol: float = 1e-10
    atol: float = 1e-12
    step: float = 1e-3


SECTIONS = {
    "model": ModelSection, "levels": LevelsSection, "portrait": PortraitSection,
    "fixed_points": FixedPointsSection, "orbit": OrbitSection, "sweep": SweepSection,
    "ladder": LadderSection, "integrator": IntegratorSection,
}


@dataclass
class RunConfig:
    command: str = "levels"
    out: str = "out"
    seed: int = 0
    model: ModelSection = field(default_factory=ModelSection)
    levels: LevelsSection = field(default_factory=LevelsSection)
    portrait: PortraitSection = field(default_factory=PortraitSection)
    fixed_points: FixedPointsSection = field(default_factory=FixedPointsSection)
    orbit: OrbitSection = field(default_factory=OrbitSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    ladder: LadderSection = field(default_factory=LadderSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    # -- derived objects ----------------------------------------------------

    def build_model(self):
        m = self.model
        if m.matrix is not None:
            try:
                return LinearModel(_complex_matrix(m.matrix, "model.matrix"),
                                   None if m.r_matrix is None
                                   else _complex_matrix(m.r_matrix, "model.r_matrix"))
            except ValueError as exc:
                raise ConfigError(str(exc), field="model.matrix") from exc
        return TwoLevelModel(m.c, m.v)

    def integrator_config(self) -> dynamics.IntegratorConfig:
        i = self.integrator
        return dynamics.IntegratorConfig(method=i.method, rtol=i.rtol, atol=i.atol, step=i.step)

    def sweep_spec(self, alpha: float | None = None, rtol: float | None = None,
                   atol: float | None = None) -> adiabatic.SweepSpec:
        s = self.sweep
        a = s.alpha if alpha is None else alpha
        try:
            return adiabatic.SweepSpec(
                R0=s.R0, R1=s.R1, alpha=math.copysign(abs(a), s.R1 - s.R0),
                upper_population=None if s.label else s.upper_population, phase=s.phase,
                label=s.label, linear_endpoints=s.label is None, sample_dR=s.sample_dR,
                rtol=rtol or self.integrator.rtol, atol=atol or self.integrator.atol)
        except ValueError as exc:
            raise ConfigError(f"sweep: {exc}", field="sweep") from exc


def _complex_matrix(rows, name):
    import numpy as np
    try:
        return np.array([[complex(*x) if isinstance(x, (list, tuple)) else complex(x) for x in row]
                         for row in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: entries must be numbers or [re, im] pairs", field=name) from exc


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _check(cond, fld, msg):
    if not cond:
        raise ConfigError(f"{fld}: {msg}", field=fld)


def validate(cfg: RunConfig) -> RunConfig:
    _check(cfg.command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
    _check(isinstance(cfg.seed, int) and cfg.seed >= 0, "seed", "must be a non-negative integer")
    m = cfg.model
    if m.matrix is None:
        _check(math.isfinite(m.c) and m.c >= 0, "model.c", f"interaction must be >= 0, got {m.c}")
        _check(math.isfinite(m.v) and m.v > 0, "model.v", f"coupling must be > 0, got {m.v}")
    lv = cfg.levels
    _check(lv.R_max > lv.R_min, "levels.R_max", "must exceed levels.R_min")
    _check(lv.ds_max > 0, "levels.ds_max", "must be positive")
    pt = cfg.portrait
    _check(pt.n_q >= 3, "portrait.n_q", "need at least 3 grid points")
    _check(pt.n_p >= 3, "portrait.n_p", "need at least 3 grid points")
    _check(pt.n_contours >= 1, "portrait.n_contours", "must be positive")
    fp = cfg.fixed_points
    _check(fp.grid >= 2, "fixed_points.grid", "need at least 2 seeds per axis")
    _check(0 < fp.edge < 0.5, "fixed_points.edge", "must lie in (0, 0.5)")
    ob = cfg.orbit
    _check(0 <= ob.upper_population <= 1, "orbit.upper_population", "must lie in [0, 1]")
    _check((ob.q is None) == (ob.p is None), "orbit.p", "give both q and p or neither")
    if ob.p is not None:
        _check(0 <= ob.p <= 1, "orbit.p", "must lie in [0, 1]")
    _check(ob.n_samples >= 8, "orbit.n_samples", "need at least 8 samples")
    _check(ob.max_time > 0, "orbit.max_time", "must be positive")
    sw = cfg.sweep
    _check(sw.R0 != sw.R1, "sweep.R1", "must differ from sweep.R0")
    _check(sw.alpha != 0, "sweep.alpha", "must be nonzero")
    _check(0 <= sw.upper_population <= 1, "sweep.upper_population", "must lie in [0, 1]")
    _check(sw.sample_dR is None or sw.sample_dR > 0, "sweep.sample_dR", "must be positive")
    _check(sw.delta_follow > 0, "sweep.delta_follow", "must be positive")
    _check(sw.omega_floor > 0, "sweep.omega_floor", "must be positive")
    ld = cfg.ladder
    _check(len(ld.alphas) >= 3, "ladder.alphas", "need at least three rates")
    _check(all(a != 0 for a in ld.alphas), "ladder.alphas", "rates must be nonzero")
    _check(ld.jobs >= 1, "ladder.jobs", "must be >= 1")
    _check(ld.rtol > 0 and ld.atol > 0, "ladder.rtol", "tolerances must be positive")
    it = cfg.integrator
    _check(it.method in ("dop853", "rk4"), "integrator.method", "must be dop853 or rk4")
    _check(it.rtol > 0, "integrator.rtol", "must be positive")
    _check(it.atol > 0, "integrator.atol", "must be positive")
    _check(it.step > 0, "integrator.step", "must be positive")
    return cfg


# ---------------------------------------------------------------------------
# loading and overrides
# ---------------------------------------------------------------------------

def _coerce(value, default, fld):
    """Coerce ``value`` to the type of the field default (None admits anything)."""
    if default is None or value is None:
        return value
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if isinstance(default, list):
            if not isinstance(value, list):
                raise ValueError
            return [float(v) for v in value]
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{fld}: cannot interpret {value!r} as {type(default).__name__}",
                          field=fld) from None
    return value


def _apply(section_obj, name, mapping):
    known = {f.name: f for f in dataclasses.fields(section_obj)}
    for key, value in mapping.items():
        fld = f"{name}.{key}"
        if key not in known:
            raise ConfigError(f"{fld}: unknown option", field=fld)
        default = getattr(type(section_obj)(), key)
        if fld in OPTIONAL_FLOATS:
            default = 0.0
        elif fld in OPTIONAL_STRINGS:
            default = ""
        setattr(section_obj, key, _coerce(value, default, fld))


def from_mapping(data: dict, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a section (table)", field=key)
            _apply(getattr(cfg, key), key, value)
        elif key in ("command", "out", "seed"):
            setattr(cfg, key, _coerce(value, getattr(RunConfig(), key), key))
        else:
            raise ConfigError(f"{key}: unknown option", field=key)
    return cfg


def _line_of(text, fld):
    """Best-effort line number of ``fld`` (``section.key``) in a config file."""
    *section, key = fld.split(".")
    want = section[0] if section else None
    current = None
    fallback = None
    for i, line in enumerate(text.splitlines(), 1):
        head = re.match(r"\s*\[\s*([\w-]+)\s*\]", line)
        if head:
            current = head.group(1).replace("-", "_")
            continue
        if re.match(rf'\s*"?{re.escape(key)}"?\s*[=:]', line):
            if want is None or current == want:
                return i
            fallback = fallback or i
    return fallback


def locate(exc: ConfigError, path) -> ConfigError:
    """``exc`` with the file name and line of its field prepended, when they can be found."""
    if path is None or not exc.field:
        return exc
    try:
        text = Path(path).read_text()
    except OSError:
        return exc
    line = _line_of(text, exc.field)
    if line is None:
        return exc
    return ConfigError(f"{path}: line {line}: {exc}", field=exc.field)


def load(path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", field="config") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomli.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          field="config") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", field="config") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table", field="config")
    try:
        return from_mapping(data, base)
    except ConfigError as exc:
        raise locate(exc, path) from None


def parse_override(item: str):
    """``section.key=value``; the value is read as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value", field=item)
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    if len(parts) == 1:
        return {parts[0]: value}
    if len(parts) == 2:
        section = parts[0].replace("-", "_")
        return {section: {parts[1]: value}}
    raise ConfigError(f"override key {key!r} nests too deeply", field=key)


def defaults_table() -> dict:
    """Every numeric default and threshold, grouped by module."""
    return {
        "state": {"norm_tol": state.NORM_TOL, "gauge_floor": state.GAUGE_FLOOR},
        "models": {"pole_guard": models.POLE_GUARD, "hessian_step": models.HESSIAN_STEP},
        "dynamics": dataclasses.asdict(dynamics.IntegratorConfig()),
        "stationary": {
            "grid": stationary.GRID, "edge": stationary.EDGE,
            "newton_tol": stationary.NEWTON_TOL, "newton_maxiter": stationary.NEWTON_MAXITER,
            "dedupe": stationary.DEDUPE, "residual_max": stationary.RESIDUAL_MAX,
            "marginal": stationary.MARGINAL, "reference_R": stationary.REFERENCE_R,
            "continuation": dataclasses.asdict(stationary.ContinuationConfig()),
        },
        "geometry": {"closure_tol": geometry.CLOSURE_TOL, "n_samples": geometry.N_SAMPLES,
                     "convention": geometry.CONVENTION},
        "adiabatic": {
            "delta_follow": adiabatic.DELTA_FOLLOW, "omega_floor": adiabatic.OMEGA_FLOOR,
            "samples_per_period": adiabatic.SAMPLES_PER_PERIOD,
            "omega_ref_floor": adiabatic.OMEGA_REF_FLOOR, "max_cycles": adiabatic.MAX_CYCLES,
            "linear_error_factor": adiabatic.LINEAR_ERROR,
            "linear_warn_factor": adiabatic.LINEAR_WARN,
        },
        "run": RunConfig().as_dict(),
    }
