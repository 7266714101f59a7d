"""Experiment configuration: TOML parsing and field-level validation."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .kernels import KernelSpec, TimeKernelSpec
from .lattice import TorusGrid
from .norms import ExponentPair
from .sources import Source, source_from_dict

__all__ = ["EXPERIMENTS", "ConfigError", "ExperimentConfig", "load_config", "parse_config", "config_hash"]

EXPERIMENTS = ("validate-kernels", "norms-suite", "elliptic-solve", "self-improve", "bass-ren",
               "localize", "parabolic-cauchy", "sneiberg-sweep")

_TOP = {"experiment", "label", "seed", "grid", "kernel", "beta_kernel", "source", "g_source",
        "exponents", "solver", "time", "localize", "sweep", "norms", "bass_ren"}


class ConfigError(ConfigurationError):
    """Schema violation attached to a dotted field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    label: str
    seed: int
    grid: TorusGrid
    kernel: KernelSpec | None
    beta_kernel: KernelSpec | None
    source: Source | None
    g_source: Source | None
    s_values: tuple
    p_values: tuple
    tol: float
    maxiter: int
    method: str
    sections: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        return self.kernel.order

    def time_kernel(self) -> TimeKernelSpec:
        t = self.sections["time"]
        return TimeKernelSpec(self.kernel, t["horizon"], t["mode"], t["time_cell"])


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()


def _get(d: dict, key: str, path: str, kind, default=..., check=None):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
        return default
    val = d[key]
    where = f"{path}.{key}" if path else key
    try:
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise TypeError
            val = float(val)
        elif kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise TypeError
        elif kind is complex:
            if isinstance(val, (list, tuple)) and len(val) == 2:
                val = complex(float(val[0]), float(val[1]))
            elif isinstance(val, (int, float)) and not isinstance(val, bool):
                val = complex(val)
            else:
                raise TypeError
        elif not isinstance(val, kind):
            raise TypeError
    except (TypeError, ValueError):
        raise ConfigError(where, f"expected {getattr(kind, '__name__', kind)}, got {val!r}") from None
    if check is not None:
        msg = check(val)
        if msg:
            raise ConfigError(where, msg)
    return val


def _float_list(d: dict, key: str, path: str, default=...) -> tuple:
    vals = _get(d, key, path, list, default)
    out = []
    for i, v in enumerate(vals):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.{key}[{i}]", f"expected a number, got {v!r}")
        out.append(float(v))
    return tuple(out)


def _seed_check(v):
    return None if 0 <= v < 2**64 else "seeds are 64-bit unsigned integers"


def _kernel(d: dict, path: str, seed: int | None, windowed: bool) -> KernelSpec:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a table")
    order = _get(d, "order", path, float)
    variant = _get(d, "variant", path, str, "constant")
    lam = _get(d, "lam", path, float, None)
    if windowed and lam is None:
        raise ConfigError(f"{path}.lam", "an ellipticity window is required")
    try:
        if variant == "constant":
            return KernelSpec.constant(order, _get(d, "value", path, complex, 1.0), lam)
        if variant == "checkerboard":
            return KernelSpec.checkerboard(order, _get(d, "cell_size", path, int),
                                           _get(d, "value_a", path, complex),
                                           _get(d, "value_b", path, complex), lam)
        if variant == "cell_random":
            kseed = _get(d, "seed", path, int, seed, _seed_check)
            if kseed is None:
                raise ConfigError(f"{path}.seed", "randomized kernels need a seed")
            if lam is None:
                raise ConfigError(f"{path}.lam", "cell_random kernels need an ellipticity window")
            return KernelSpec.cell_random(order, _get(d, "cell_size", path, int), kseed, lam)
    except ConfigError:
        raise
    except ConfigurationError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.variant", f"unknown kernel variant {variant!r}")


def _source(d, path: str, seed: int | None) -> Source:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a table")
    d = dict(d)

    def fill(part, where):
        part = dict(part)
        if part.get("kind") == "bandlimited" and "seed" not in part:
            if seed is None:
                raise ConfigError(f"{where}.seed", "randomized sources need a seed")
            part["seed"] = seed
        if part.get("kind") == "sum":
            part["parts"] = [fill(q, f"{where}.parts[{i}]") for i, q in enumerate(part.get("parts", []))]
        return part

    try:
        return source_from_dict(fill(d, path))
    except ConfigError:
        raise
    except ConfigurationError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(data: dict, seed_override: int | None = None) -> ExperimentConfig:
    """Validate a decoded TOML document."""
    unknown = sorted(set(data) - _TOP)
    if unknown:
        raise ConfigError(unknown[0], "unknown top-level field")
    experiment = _get(data, "experiment", "", str)
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    seed = _get(data, "seed", "", int, None, _seed_check)
    if seed_override is not None:
        if _seed_check(seed_override):
            raise ConfigError("seed", _seed_check(seed_override))
        seed = seed_override
    raw = json.loads(json.dumps(data))
    raw["seed"] = seed
    label = _get(data, "label", "", str, None)
    if label is None:
        label = config_hash(raw)[:12]
    if not label or any(c in label for c in "/\\") or label in (".", ".."):
        raise ConfigError("label", "must be a plain directory name")

    gd = _get(data, "grid", "", dict)
    try:
        grid = TorusGrid(_get(gd, "dim", "grid", int), _get(gd, "points", "grid", int),
                         _get(gd, "period", "grid", float, 1.0))
    except ConfigError:
        raise
    except ConfigurationError as exc:
        raise ConfigError("grid", str(exc)) from None

    kernel = _kernel(data["kernel"], "kernel", seed, True) if "kernel" in data else None
    if kernel is None and experiment != "norms-suite":
        raise ConfigError("kernel", "required field is missing")
    beta = _kernel(data["beta_kernel"], "beta_kernel", seed, False) if "beta_kernel" in data else None
    source = _source(data["source"], "source", seed) if "source" in data else None
    g_source = _source(data["g_source"], "g_source", seed) if "g_source" in data else None

    ex = _get(data, "exponents", "", dict, {})
    s_values = _float_list(ex, "s", "exponents", (kernel.order,) if kernel else (0.5,))
    p_values = _float_list(ex, "p", "exponents", (2.0,))
    if kernel is not None and experiment != "norms-suite":
        for i, s in enumerate(s_values):
            for p in p_values:
                try:
                    ExponentPair(s, p, kernel.order)
                except ConfigurationError as exc:
                    raise ConfigError(f"exponents.s[{i}]", str(exc)) from None
        if "s_dual" in ex:
            sd = _float_list(ex, "s_dual", "exponents")
            if len(sd) != len(s_values):
                raise ConfigError("exponents.s_dual", "must have one entry per s")
            for i, (s, d) in enumerate(zip(s_values, sd)):
                if abs(s + d - 2 * kernel.order) > 1e-12:
                    raise ConfigError(f"exponents.s_dual[{i}]",
                                      f"s + s' = 2 alpha violated: {s:g} + {d:g} != {2 * kernel.order:g}")
    else:
        for i, s in enumerate(s_values):
            if not 0 < s < 1:
                raise ConfigError(f"exponents.s[{i}]", "s must lie in (0, 1)")
        for i, p in enumerate(p_values):
            if not 1 <= p < math.inf:
                raise ConfigError(f"exponents.p[{i}]", "p must lie in [1, inf)")

    sv = _get(data, "solver", "", dict, {})
    tol = _get(sv, "tol", "solver", float, 1e-10, lambda v: None if 0 < v < 1 else "tol must lie in (0, 1)")
    maxiter = _get(sv, "maxiter", "solver", int, 50, lambda v: None if v > 0 else "must be positive")
    method = _get(sv, "method", "solver", str, "gmres",
                  lambda v: None if v in ("gmres", "direct") else "must be gmres or direct")

    sections = {}
    if experiment == "parabolic-cauchy":
        td = _get(data, "time", "", dict)
        sections["time"] = {
            "horizon": _get(td, "horizon", "time", float, 1.0, lambda v: None if v > 0 else "must be positive"),
            "points": _get(td, "points", "time", int, 256),
            "buffer": _get(td, "buffer", "time", float, 4.0, lambda v: None if v > 2 else "must exceed 2"),
            "mode": _get(td, "mode", "time", str, "static"),
            "time_cell": _get(td, "time_cell", "time", float, 0.25),
            "profile": _get(td, "profile", "time", str, "bump",
                            lambda v: None if v in ("bump", "step") else "must be bump or step"),
            "power": _get(td, "power", "time", int, 8),
        }
        if source is None:
            raise ConfigError("source", "required field is missing")
    if experiment == "localize":
        ld = _get(data, "localize", "", dict)
        center = _get(ld, "center", "localize", list)
        if len(center) != grid.dim or not all(isinstance(c, int) and not isinstance(c, bool) for c in center):
            raise ConfigError("localize.center", f"expected {grid.dim} lattice indices")
        sections["localize"] = {
            "center": [int(c) for c in center],
            "radius": _get(ld, "radius", "localize", float),
            "plateau": _get(ld, "plateau", "localize", float),
            "s": _get(ld, "s", "localize", float, kernel.order + 0.05),
            "p": _get(ld, "p", "localize", float, 2.0),
        }
    if experiment == "sneiberg-sweep":
        wd = _get(data, "sweep", "", dict, {})
        sections["sweep"] = {
            "slope": _get(wd, "slope", "sweep", float, 0.0),
            "lambdas": _float_list(wd, "lambdas", "sweep", ()),
            "consistency": _get(wd, "consistency", "sweep", bool, True),
        }
    if experiment == "norms-suite":
        nd = _get(data, "norms", "", dict, {})
        sections["norms"] = {
            "draws": _get(nd, "draws", "norms", int, 4, lambda v: None if v > 0 else "must be positive"),
            "kmax": _get(nd, "kmax", "norms", int, 4),
            "besov": _get(nd, "besov", "norms", bool, True),
        }
        if seed is None:
            raise ConfigError("seed", "the norms suite draws random functions and needs a seed")
    if experiment == "bass-ren":
        bd = _get(data, "bass_ren", "", dict, {})
        sections["bass_ren"] = {"p": _float_list(bd, "p", "bass_ren", (2.5,))}
    if experiment in ("elliptic-solve", "self-improve", "bass-ren", "localize") and source is None:
        raise ConfigError("source", "required field is missing")
    return ExperimentConfig(experiment, label, seed if seed is not None else 0, grid, kernel, beta,
                            source, g_source, s_values, p_values, tol, maxiter, method, sections, raw)


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"invalid TOML: {exc}") from None
    return parse_config(data, seed_override)
