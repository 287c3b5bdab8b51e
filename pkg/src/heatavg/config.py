"""Flat ``key = value`` study configuration with strict key checking."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .coefficients import DRIFTS, FAMILIES, INITIAL
from .measure import KINDS, WEIGHTS

SUITES = ("rate", "lemmas", "besov")


class ConfigError(ValueError):
    pass


def _default_eps() -> tuple:
    return tuple(2.0 ** -k for k in (2, 4, 6, 8, 10))


@dataclass(frozen=True)
class StudyConfig:
    # stochastic measure
    sm_kind: str = "wiener"
    sm_weight: str = "gauss"
    hurst: float = 0.7
    stability: float = 1.5
    jump_rate: float = 4.0
    jump_size: float = 0.5
    # coefficients
    sigma_family: str = "periodic_product"
    modulation: str = "2+cos"
    beta_sigma: float = 0.75
    smooth_sigma: bool = False
    drift: str = "half_rational"
    u0: str = "gauss"
    # grid
    R: int = 4
    n_max: int = 8
    T: float = 1.0
    nt: int = 64
    # study
    eps: tuple = field(default_factory=_default_eps)
    replications: int = 16
    base_seed: int = 1
    out_dir: str = "out"
    suites: tuple = SUITES
    tol: float = 1e-8
    max_iter: int = 50
    margin: float = 2.0
    points_per_period: int = 32
    slope_tol: float = 0.05
    probe_factor: float = 10.0
    # kernel estimate constants
    C_dx: float = math.exp(-0.5) / (2.0 * math.sqrt(math.pi))
    lambda_dx: float = 0.125
    n_std: float = 8.0
    # lemma suite
    lemma_seeds: int = 8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.sm_kind not in KINDS:
            raise ConfigError(f"unknown sm_kind {self.sm_kind!r}")
        if self.sm_weight not in WEIGHTS:
            raise ConfigError(f"unknown sm_weight {self.sm_weight!r}")
        if self.sigma_family not in FAMILIES:
            raise ConfigError(f"unknown sigma_family {self.sigma_family!r}")
        if self.drift not in DRIFTS:
            raise ConfigError(f"unknown drift {self.drift!r}")
        if self.u0 not in INITIAL:
            raise ConfigError(f"unknown u0 {self.u0!r}")
        if not self.eps:
            raise ConfigError("eps list must not be empty")
        if any(not 0 < e <= 1 for e in self.eps):
            raise ConfigError("every eps must lie in (0, 1]")
        if any(a <= b for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigError("eps list must be strictly decreasing")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        bad = [s for s in self.suites if s not in SUITES]
        if bad or not self.suites:
            raise ConfigError(f"suites must be drawn from {SUITES}, got {self.suites}")
        if self.lemma_seeds < 1:
            raise ConfigError("lemma_seeds must be at least 1")

    def replace(self, **changes) -> StudyConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"


def _parse_value(name: str, raw: str, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low not in ("true", "false"):
            raise ConfigError(f"{name}: expected true or false, got {raw!r}")
        return low == "true"
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [p.strip() for p in raw.split(",") if p.strip()]
        if name == "eps":
            return tuple(float(eval_number(p)) for p in items)
        return tuple(items)
    return raw


def eval_number(text: str) -> float:
    """Plain floats or powers like ``2^-4``."""
    if "^" in text:
        base, _, exp = text.partition("^")
        return float(base) ** float(exp)
    return float(text)


def parse_config(text: str) -> StudyConfig:
    defaults = StudyConfig()
    known = {f.name for f in fields(StudyConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = (s.strip() for s in line.partition("="))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, raw, getattr(defaults, key))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None
    return StudyConfig(**values)


def load_config(path) -> StudyConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
