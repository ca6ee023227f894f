"""Flat dotted-key experiment configuration.

File format: one ``section.key = value`` per line, ``#`` starts a comment.
Values are booleans (``true``/``false``), numbers, comma-separated lists
(optionally in brackets) or bare strings.  The schema is :data:`SCHEMA`;
README.md documents every key.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import spectral

PROFILES = ("taylor_green", "shear", "none", "snapshot")

# key -> (kind, default); kind is one of int, float, bool, str, floats, float?
SCHEMA = {
    "grid.n": ("int", 2),
    "grid.N": ("int", 256),
    "grid.L": ("float", 100.0),
    "scheme.kappa": ("float", 1.0),
    "scheme.cfl": ("float", 0.5),
    "scheme.dealias": ("bool", True),
    "scheme.max_dt_fraction": ("float", 5e-3),
    "initial_data.sigma": ("float", 2.0),
    "initial_data.amplitude": ("float", 1.0),
    "initial_data.delta": ("float", 0.5),
    "flow.profile": ("str", "taylor_green"),
    "flow.a0": ("float?", None),
    "flow.c_grad_u": ("float?", 0.1),
    "flow.alpha": ("float", 0.875),
    "flow.m": ("int", 2),
    "flow.snapshot_dir": ("str", ""),
    "times.t_end": ("float", 2000.0),
    "times.sample_ratio": ("float", 1.1),
    "times.snapshot_times": ("floats", []),
    "bounds.beta": ("float?", None),
    "bounds.epsilon": ("float", 0.01),
    "bounds.fit_window_train": ("floats", [10.0, 100.0]),
    "bounds.fit_window_test": ("floats", [100.0, 2000.0]),
    "output.directory": ("str", "run"),
    "output.emit_snapshots": ("bool", False),
    "seed": ("int", 0),
}

# diffusive length must stay below L / DIFFUSIVE_FRACTION
DIFFUSIVE_FRACTION = 10.0


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


class HorizonError(ConfigError):
    pass


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "auto", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_text(text: str, source: str = "<config>") -> dict:
    raw, errors = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            errors.append(f"{key}: duplicate key ({source}:{lineno})")
        raw[key] = value
    if errors:
        raise ConfigError(errors)
    return raw


def _coerce(key: str, kind: str, value):
    """Return ``(value, error)``; ``value`` is a raw string or an already typed object."""
    if isinstance(value, str):
        if kind == "floats":
            body = value.strip().strip("[]").strip()
            value = [] if not body else [_parse_scalar(v.strip()) for v in body.split(",")]
        elif kind != "str":
            value = _parse_scalar(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            if isinstance(value, float) and value.is_integer():
                return int(value), None
            return None, f"{key}: expected an integer, got {value!r}"
        return int(value), None
    if kind in ("float", "float?"):
        if value is None and kind == "float?":
            return None, None
        if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
            return None, f"{key}: expected a number, got {value!r}"
        return float(value), None
    if kind == "bool":
        if not isinstance(value, bool):
            return None, f"{key}: expected true/false, got {value!r}"
        return value, None
    if kind == "floats":
        if not isinstance(value, (list, tuple)) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            return None, f"{key}: expected a list of numbers, got {value!r}"
        return [float(v) for v in value], None
    return str(value), None


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        merged = dict(self.values)
        for k, v in overrides.items():
            merged[k.replace("__", ".")] = v
        return build_config(merged)

    def canonical(self) -> dict:
        return {k: self.values[k] for k in sorted(self.values) if not k.startswith("output.")}

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_text(self) -> str:
        lines = []
        for key in SCHEMA:
            v = self.values[key]
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif v is None:
                s = "auto"
            elif isinstance(v, list):
                s = "[" + ", ".join(repr(x) for x in v) + "]"
            else:
                s = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{key} = {s}")
        return "\n".join(lines) + "\n"


def _validate(v: dict) -> list:
    errors = []
    if v["grid.n"] not in (2, 3):
        errors.append("grid.n: must be 2 or 3")
    N = v["grid.N"]
    if N < 8 or N & (N - 1):
        errors.append(f"grid.N: must be a power of two >= 8, got {N}")
    for key in ("grid.L", "scheme.kappa", "initial_data.sigma", "initial_data.delta",
                "times.t_end", "scheme.max_dt_fraction"):
        if not v[key] > 0:
            errors.append(f"{key}: must be positive")
    if not 0 < v["scheme.cfl"] <= 1:
        errors.append("scheme.cfl: must lie in (0, 1]")
    if v["initial_data.amplitude"] == 0:
        errors.append("initial_data.amplitude: must be nonzero")
    if v["grid.L"] > 0 and v["initial_data.sigma"] > 0 and v["grid.L"] < 12 * v["initial_data.sigma"]:
        errors.append("initial_data.sigma: Gaussian too wide for the box (need L >= 12 sigma)")
    if not v["times.sample_ratio"] > 1:
        errors.append("times.sample_ratio: must exceed 1")
    profile = v["flow.profile"]
    if profile not in PROFILES:
        errors.append(f"flow.profile: must be one of {', '.join(PROFILES)}")
    if profile in ("taylor_green", "shear"):
        if (v["flow.a0"] is None) == (v["flow.c_grad_u"] is None):
            errors.append("flow.a0: give exactly one of flow.a0 and flow.c_grad_u")
        for key in ("flow.a0", "flow.c_grad_u"):
            if v[key] is not None and v[key] < 0:
                errors.append(f"{key}: must be >= 0")
        if not 1 <= v["flow.m"] < N // 2:
            errors.append(f"flow.m: must satisfy 1 <= m < N/2")
    if profile == "snapshot" and not v["flow.snapshot_dir"]:
        errors.append("flow.snapshot_dir: required when flow.profile = snapshot")
    if v["flow.alpha"] < 0:
        errors.append("flow.alpha: must be >= 0")
    if v["bounds.beta"] is not None and not v["bounds.beta"] > 0:
        errors.append("bounds.beta: must be positive")
    if not 0 < v["bounds.epsilon"] <= 0.1:
        errors.append("bounds.epsilon: must lie in (0, 0.1]")
    windows_ok = True
    for key in ("bounds.fit_window_train", "bounds.fit_window_test"):
        w = v[key]
        if len(w) != 2 or not 0 <= w[0] < w[1]:
            errors.append(f"{key}: must be [start, end] with 0 <= start < end")
            windows_ok = False
    if windows_ok:
        tr, te = v["bounds.fit_window_train"], v["bounds.fit_window_test"]
        if tr[1] > te[0]:
            errors.append("bounds.fit_window_test: overlaps the train window (test must start at or after train end)")
        if te[1] > v["times.t_end"] * (1 + 1e-12):
            errors.append("bounds.fit_window_test: extends beyond times.t_end")
    for s in v["times.snapshot_times"]:
        if not 0 <= s <= v["times.t_end"]:
            errors.append(f"times.snapshot_times: {s} outside [0, t_end]")
    return errors


def build_config(raw: dict) -> ExperimentConfig:
    errors = [f"{key}: unknown key" for key in raw if key not in SCHEMA]
    values, type_errors = {}, []
    for key, (kind, default) in SCHEMA.items():
        if key in raw:
            value, err = _coerce(key, kind, raw[key])
            if err:
                type_errors.append(err)
                continue
            values[key] = value
        else:
            values[key] = list(default) if isinstance(default, list) else default
    errors += type_errors
    if not type_errors:
        errors += _validate(values)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    return build_config(parse_text(text, str(path)))


def default_config() -> ExperimentConfig:
    return build_config({})


# -- finite-domain validity ----------------------------------------------------

def diffusive_horizon(cfg: ExperimentConfig) -> float:
    """Time at which ``(kappa t)^(1/4)`` reaches ``L / 10``."""
    return (cfg["grid.L"] / DIFFUSIVE_FRACTION) ** 4 / cfg["scheme.kappa"]


def floor_horizon(grid: spectral.Grid, theta0_hat: np.ndarray, kappa: float) -> float:
    """First time the mean-free part of the flow-free solution drops below the zero-mode floor."""
    floor_sq = grid.plancherel * abs(theta0_hat.flat[0]) ** 2
    if floor_sq == 0:
        return math.inf
    k4 = (grid.k2**2).ravel()
    power = (np.abs(theta0_hat) ** 2).ravel()
    nz = k4 > 0
    k4, power = k4[nz], power[nz]

    def signal_sq(t):
        return grid.plancherel * float(np.sum(power * np.exp(-2 * kappa * k4 * t)))

    if signal_sq(0.0) <= floor_sq:
        return 0.0
    lo, hi = 0.0, 1.0
    while signal_sq(hi) > floor_sq:
        lo, hi = hi, hi * 2
        if hi > 1e300:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if signal_sq(mid) > floor_sq else (lo, mid)
        if hi - lo <= 1e-10 * hi:
            break
    return hi


def check_horizon(cfg: ExperimentConfig, grid, theta0_hat) -> dict:
    """Raise :class:`HorizonError` when ``t_end`` exceeds either validity horizon."""
    h = {"diffusive": diffusive_horizon(cfg),
         "zero_mode_floor": floor_horizon(grid, theta0_hat, cfg["scheme.kappa"])}
    t_end = cfg["times.t_end"]
    errors = [f"times.t_end: {t_end:g} exceeds the {name.replace('_', ' ')} horizon {value:.6g} "
              "(use --override-horizon to run anyway)" for name, value in h.items() if t_end > value]
    if errors:
        raise HorizonError(errors)
    return h
