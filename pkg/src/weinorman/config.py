"""Run configuration: YAML file plus command-line overrides."""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .rates import parse_rate

__all__ = ["ConfigError", "RunConfig", "MODELS", "METHODS", "BENCH_GRID", "load_config"]

MODELS = ("birth-death", "sir-cohort", "pure-birth")
METHODS = ("wei-norman", "rk45", "euler", "oracle", "all")
MAX_TIMES = 10_000
BENCH_GRID = (2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0)

# rate names and default size per model
_RATES = {
    "birth-death": {"b": "constant:1", "d": "constant:1"},
    "sir-cohort": {"lam": "constant:0.2", "gamma": "constant:0.3"},
    "pure-birth": {"a": "constant:1", "b": "rational"},
}
_SIZE = {"birth-death": 40, "sir-cohort": 20, "pure-birth": 100}
_TOLERANCES = {"expm": 1e-10, "rtol": 1e-8, "atol": 1e-10, "quad": 1e-12, "euler_dt": 1e-3}
_KEYS = {"model", "rates", "size", "times", "method", "tolerances", "out", "repeats", "methods"}


class ConfigError(ValueError):
    """Invalid configuration; the CLI exits with status 2."""


@dataclass(frozen=True)
class RunConfig:
    model: str
    rates: dict
    size: int
    times: tuple
    method: str = "wei-norman"
    tolerances: dict = field(default_factory=lambda: dict(_TOLERANCES))
    out: str = None
    repeats: int = 5
    methods: tuple = ()

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        for m in self.methods:
            if m not in METHODS[:3]:
                raise ConfigError(f"bench method {m!r} is not one of wei-norman, rk45, euler")
        times = self.times
        if len(times) == 0:
            raise ConfigError("no query times given")
        if len(times) > MAX_TIMES:
            raise ConfigError(f"at most {MAX_TIMES} query times are allowed, got {len(times)}")
        if any(not math.isfinite(t) or t < 0 for t in times):
            raise ConfigError("query times must be finite and >= 0")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ConfigError("query times must be sorted")
        if self.size < 1:
            raise ConfigError("size must be a positive integer")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        expected = set(_RATES[self.model])
        if set(self.rates) != expected:
            raise ConfigError(f"{self.model} takes rates {sorted(expected)}, got {sorted(self.rates)}")
        for key in ("expm", "rtol", "atol", "quad", "euler_dt"):
            val = self.tolerances.get(key)
            if not (isinstance(val, float) and val > 0 and math.isfinite(val)):
                raise ConfigError(f"tolerance {key!r} must be a positive number")

    @property
    def bench_methods(self):
        if self.methods:
            return self.methods
        if self.method == "all":
            return ("wei-norman", "rk45", "euler")
        return ("wei-norman", "rk45")


def _as_float(value, what):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {value!r}") from None


def _parse_times(value):
    if isinstance(value, str):
        value = [v for v in value.replace(";", ",").split(",") if v.strip()]
    if not isinstance(value, (list, tuple)):
        value = [value]
    return tuple(_as_float(v, "time") for v in value)


def load_config(path=None, model=None, times=None, method=None, out=None, tol=None,
                size=None, rates=(), repeats=None, bench=False, require_times=True):
    """Merge a YAML config file with command-line overrides into a :class:`RunConfig`.

    ``tol`` overrides both the exponential-action tolerance and the RK
    relative tolerance (the RK absolute tolerance follows at ``tol / 100``).
    ``rates`` is a sequence of ``name=spec`` strings.
    """
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
        unknown = set(raw) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    model = model or raw.get("model")
    if model is None:
        raise ConfigError("no model given (use --model or the 'model' key)")
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")

    rate_text = dict(_RATES[model])
    given = raw.get("rates") or {}
    if not isinstance(given, dict):
        raise ConfigError("'rates' must be a mapping of name to rate string")
    for item in rates:
        name, sep, spec = item.partition("=")
        if not sep:
            raise ConfigError(f"rate override {item!r} must look like name=spec")
        given = {**given, name.strip(): spec.strip()}
    for name, spec in given.items():
        if name not in rate_text:
            raise ConfigError(f"{model} has no rate named {name!r}")
        rate_text[name] = spec
    parsed = {}
    for name, spec in rate_text.items():
        try:
            parsed[name] = parse_rate(spec)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"rate {name}: {exc}") from None

    tolerances = dict(_TOLERANCES)
    tol_raw = raw.get("tolerances") or {}
    if not isinstance(tol_raw, dict):
        raise ConfigError("'tolerances' must be a mapping")
    for key, val in tol_raw.items():
        if key not in tolerances:
            raise ConfigError(f"unknown tolerance {key!r}")
        tolerances[key] = _as_float(val, f"tolerance {key}")
    if tol is not None:
        tol = _as_float(tol, "--tol")
        tolerances.update(expm=tol, rtol=tol, atol=tol * 1e-2)

    if times is None:
        times = raw.get("times", BENCH_GRID if bench else None)
    if times is None and not require_times:
        times = (0.0,)
    if times is None:
        raise ConfigError("no query times given (use --times or the 'times' key)")

    size_val = size if size is not None else raw.get("size", _SIZE[model])
    if isinstance(size_val, bool) or not float(_as_float(size_val, "size")).is_integer():
        raise ConfigError(f"size must be an integer, got {size_val!r}")
    methods = raw.get("methods") or ()
    if isinstance(methods, str):
        methods = (methods,)

    rep = repeats if repeats is not None else raw.get("repeats", 5)
    return RunConfig(
        model=model,
        rates=parsed,
        size=int(size_val),
        times=_parse_times(times),
        method=method or raw.get("method", "wei-norman"),
        tolerances=tolerances,
        out=out if out is not None else raw.get("out"),
        repeats=int(_as_float(rep, "repeats")),
        methods=tuple(methods),
    )


def with_times(config, times):
    return replace(config, times=tuple(float(t) for t in np.atleast_1d(times)))
