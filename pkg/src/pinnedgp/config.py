"""Flat key-value run configuration (YAML) with flag overrides.

Precedence, lowest first: built-in defaults, config file, command-line flags.
Unknown keys and ill-typed values are rejected before anything runs.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Optional

import yaml

from .errors import ConfigError, PinnedGPError
from .kernels import KernelSpec
from .montecarlo import Barrier, McRun, Method

FAMILY_ALIASES = {
    "fbm": "fbm",
    "bm": "bm",
    "cheridito": "cheridito",
    "mfold": "mfold",
    "mfold_ibm": "mfold",
    "ibm": "ibm",
    "ifbm": "ifbm",
    "integrated_fbm": "ifbm",
}


def make_spec(family: str, hurst: Optional[float] = None, c: Optional[float] = None,
              c_h: Optional[float] = None, m: Optional[int] = None) -> KernelSpec:
    """Build a KernelSpec from a family name and its parameters.

    ``bm`` is fBm with H = 1/2 and ``ibm`` is the once-integrated Brownian motion.
    """
    name = FAMILY_ALIASES.get(str(family).lower())
    if name is None:
        raise ConfigError(f"unknown family {family!r}; choose from {sorted(FAMILY_ALIASES)}")
    try:
        if name == "bm":
            return KernelSpec.fbm(0.5)
        if name == "ibm":
            return KernelSpec.mfold_ibm(1)
        if name == "fbm":
            return KernelSpec.fbm(_need(hurst, "hurst"))
        if name == "cheridito":
            return KernelSpec.cheridito(_need(hurst, "hurst"), _need(c, "c"), _need(c_h, "c_h"))
        if name == "mfold":
            return KernelSpec.mfold_ibm(_need(m, "m"))
        return KernelSpec.integrated_fbm(_need(hurst, "hurst"))
    except PinnedGPError as exc:
        raise ConfigError(str(exc)) from exc


def _need(v, name):
    if v is None:
        raise ConfigError(f"family requires parameter {name!r}")
    return v


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


@dataclass
class RunConfig:
    family: str = "fbm"
    hurst: Optional[float] = None
    c: Optional[float] = None
    c_h: Optional[float] = None
    m: Optional[int] = None
    step: float = 0.01
    horizon: float = 1.0
    upper: Optional[str] = None
    lower: Optional[str] = None
    start: float = 0.0
    paths: int = 1000
    seed: Optional[int] = None
    method: str = "crude"
    workers: int = field(default_factory=default_workers)
    chunk_size: int = 2000
    output: Optional[str] = None
    verbosity: int = 0

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: "RunConfig | None" = None,
                     validate: bool = True) -> "RunConfig":
        """Apply ``data`` on top of ``base`` (defaults when omitted).

        Keys and value types are always checked; cross-field validation runs
        only when ``validate`` is set, so partial files can be merged first.
        """
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = dataclasses.replace(base) if base is not None else cls()
        for k, v in data.items():
            setattr(cfg, k, _coerce(k, v))
        if validate:
            cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            Method(self.method)
        except ValueError as exc:
            raise ConfigError(f"method must be 'crude' or 'corrected', got {self.method!r}") from exc
        self.spec()
        if self.paths < 1 or self.workers < 1 or self.chunk_size < 1:
            raise ConfigError("paths, workers and chunk_size must be positive")
        if not self.step > 0 or not self.horizon > 0:
            raise ConfigError("step and horizon must be positive")
        for b in (self.upper, self.lower):
            if b is not None:
                try:
                    Barrier.parse(b)
                except PinnedGPError as exc:
                    raise ConfigError(str(exc)) from exc

    def spec(self) -> KernelSpec:
        return make_spec(self.family, self.hurst, self.c, self.c_h, self.m)

    def to_run(self) -> McRun:
        if self.seed is None:
            raise ConfigError("seed is unset")
        if self.upper is None and self.lower is None:
            raise ConfigError("at least one barrier (upper or lower) is required")
        try:
            return McRun(
                spec=self.spec(), step=self.step, horizon=self.horizon,
                upper=None if self.upper is None else Barrier.parse(self.upper),
                lower=None if self.lower is None else Barrier.parse(self.lower),
                start=self.start, n_paths=self.paths, seed=self.seed, method=Method(self.method),
                workers=self.workers, chunk_size=self.chunk_size,
            )
        except PinnedGPError as exc:
            raise ConfigError(str(exc)) from exc

    def to_mapping(self) -> dict:
        return {k: getattr(self, k) for k in self.keys()}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_mapping(), sort_keys=False)


_TYPES = {
    "family": str, "hurst": float, "c": float, "c_h": float, "m": int, "step": float, "horizon": float,
    "upper": "barrier", "lower": "barrier", "start": float, "paths": int, "seed": int, "method": str,
    "workers": int, "chunk_size": int, "output": str, "verbosity": int,
}
_NULLABLE = {"hurst", "c", "c_h", "m", "upper", "lower", "seed", "output"}


def _coerce(key: str, value):
    if value is None:
        if key in _NULLABLE:
            return None
        raise ConfigError(f"{key} may not be null")
    kind = _TYPES[key]
    if kind == "barrier":
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"{key} must be a number or a schedule string")
        return str(float(value)) if isinstance(value, (int, float)) else value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def load_config(path: str, base: RunConfig | None = None, validate: bool = True) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config file must be a flat key-value mapping")
    return RunConfig.from_mapping(data, base, validate=validate)
