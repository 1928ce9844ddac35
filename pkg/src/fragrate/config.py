"""Run configuration read from a TOML file with one table per block."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, DomainError
from .grid import LogGrid, WeightPair, default_x_max, make_grid, parse_initial
from .kernel import KernelSpec, kernel_from_mapping

__all__ = ["RunConfig", "DEFAULTS", "load_config", "config_from_mapping"]

DEFAULTS = {
    "kernel": {"gamma": 1.0, "shape": "uniform", "c": 2.0},
    "grid": {"x_min": 1e-4, "x_max": "auto", "n": 512},
    "weights": {"m": 0.75, "M": 1.5},
    "profile": {"source": "computed", "tol": 1e-10, "t_max": 200.0, "a": "auto", "a_prime": 1.1},
    "evolve": {"t_end": 10.0, "cfl": 0.5, "sample_dt": 0.1, "initial": "bump:1:0.5", "window": [2.0, 8.0]},
    "split": {"m": "auto", "M": "auto"},
    "audit": {"n_samples": 1000, "seed": 42},
    "output": {"dir": "out"},
}

_KERNEL_KEYS = {"gamma", "shape", "c", "z", "h"}


@dataclass(frozen=True)
class RunConfig:
    spec: KernelSpec
    grid: LogGrid
    weights: WeightPair
    profile: dict
    evolve: dict
    split: dict
    audit: dict
    out_dir: Path
    settings: dict = field(repr=False)

    @property
    def config_hash(self) -> str:
        # the output location does not change any result
        physics = {k: v for k, v in self.settings.items() if k != "output"}
        blob = json.dumps(physics, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def split_m(self) -> float:
        m = self.split["m"]
        return self.weights.m if m == "auto" else float(m)

    @property
    def split_M(self):
        M = self.split["M"]
        return None if M == "auto" else float(M)

    @property
    def bound_a(self) -> float:
        a = self.profile["a"]
        return 0.9 * self.spec.b_min / self.spec.b_max if a == "auto" else float(a)


def _merge(raw: dict) -> dict:
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    merged = {}
    for section, defaults in DEFAULTS.items():
        block = raw.get(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"section [{section}] must be a table")
        allowed = _KERNEL_KEYS if section == "kernel" else set(defaults)
        extra = set(block) - allowed
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
        if section == "kernel" and block.get("shape") == "tabulated":
            merged[section] = {k: v for k, v in block.items() if k != "c"}
            merged[section].setdefault("gamma", defaults["gamma"])
        else:
            merged[section] = {**defaults, **block}
    return merged


def _number(block, key, section, kind=float):
    try:
        return kind(block[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} must be a number, got {block[key]!r}") from exc


def config_from_mapping(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a parsed mapping; ``overrides`` maps ``(section, key)`` to values."""
    settings = _merge(raw)
    for (section, key), value in (overrides or {}).items():
        if value is not None:
            settings[section][key] = value
    try:
        spec = kernel_from_mapping(settings["kernel"])
        g = settings["grid"]
        x_min = _number(g, "x_min", "grid")
        x_max = default_x_max(spec) if g["x_max"] == "auto" else _number(g, "x_max", "grid")
        n = g["n"]
        if not isinstance(n, int) or n < 16:
            raise ConfigError(f"[grid] n must be an integer >= 16, got {n!r}")
        grid = make_grid(x_min, x_max, n)
        weights = WeightPair(_number(settings["weights"], "m", "weights"), _number(settings["weights"], "M", "weights"))
        prof = dict(settings["profile"])
        if prof["source"] not in ("computed", "explicit"):
            raise ConfigError("[profile] source must be 'computed' or 'explicit'")
        if prof["source"] == "explicit" and not spec.is_explicit:
            raise ConfigError("[profile] source 'explicit' needs a uniform kernel with c = 2")
        for key in ("tol", "t_max", "a_prime"):
            prof[key] = _number(prof, key, "profile")
        ev = dict(settings["evolve"])
        for key in ("t_end", "cfl", "sample_dt"):
            ev[key] = _number(ev, key, "evolve")
            if ev[key] <= 0:
                raise ConfigError(f"[evolve] {key} must be positive")
        parse_initial(ev["initial"])
        window = ev["window"]
        # checked against t_end only when a fit is made
        if not (isinstance(window, (list, tuple)) and len(window) == 2 and 0 <= window[0] < window[1]):
            raise ConfigError("[evolve] window must be [t_lo, t_hi] with 0 <= t_lo < t_hi")
        ev["window"] = [float(window[0]), float(window[1])]
        split = dict(settings["split"])
        for key in ("m", "M"):
            if split[key] != "auto":
                split[key] = _number(split, key, "split")
        audit = dict(settings["audit"])
        audit["n_samples"] = _number(audit, "n_samples", "audit", int)
        audit["seed"] = _number(audit, "seed", "audit", int)
        if audit["n_samples"] < 0:
            raise ConfigError("[audit] n_samples must be nonnegative")
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    settings["grid"]["x_max"] = x_max
    return RunConfig(spec, grid, weights, prof, ev, split, audit, Path(settings["output"]["dir"]), settings)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a TOML config; ``None`` gives the built-in defaults."""
    if path is None:
        return config_from_mapping({}, overrides)
    try:
        raw = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_mapping(raw, overrides)
