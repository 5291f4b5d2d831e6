"""Study configuration and its flat ``key = value`` file format.

Example::

    # smooth target, three levels
    mesh.levels = 8, 16, 32
    mesh.gamma1 = bottom
    problem.b = 1.0
    problem.M1 = 1.0
    problem.M2 = 1.0
    zd.kind = field
    zd.field = xy
    alpha.list = 10
    reference.n = 256
    output.dir = results
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..mesh import SIDES

FIELDS = {
    "xy": lambda x, y: x * y,
    "sinsin": lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
    "gauss": lambda x, y: np.exp(-20.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2)),
}
ZD_KINDS = ("constant", "field", "zero_control_state")
METHODS = ("fixed_point", "kkt")

REQUIRED = ("mesh.levels", "mesh.gamma1", "problem.b", "problem.M1", "problem.M2",
            "zd.kind", "alpha.list", "reference.n", "output.dir")


class ConfigError(ValueError):
    """Invalid or incomplete study configuration."""


@dataclass(frozen=True)
class StudyConfig:
    levels: tuple = (8, 16, 32)
    gamma1: tuple = ("bottom",)
    b: float = 1.0
    M1: float = 1.0
    M2: float = 1.0
    zd_kind: str = "field"
    zd_value: float | None = None
    zd_field: str | None = "xy"
    alphas: tuple = (10.0,)
    n_ref: int = 256
    output_dir: Path = Path("results")
    # optional keys
    method: str = "fixed_point"
    tol: float = 1e-10
    alpha_level: int = 16
    alpha_sweep: tuple = (1.0, 10.0, 100.0, 1000.0, 10000.0)
    diagonal_steps: int = 3

    def __post_init__(self):
        self.validate()

    def validate(self):
        lv = self.levels
        if len(lv) == 0 or any(int(n) != n or n < 1 for n in lv):
            raise ConfigError(f"mesh.levels must be positive integers, got {lv}")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ConfigError(f"mesh.levels must be strictly increasing, got {lv}")
        if self.n_ref < 4 * max(lv):
            raise ConfigError(f"reference.n={self.n_ref} must be at least 4*max(levels)={4 * max(lv)}")
        bad = [s for s in self.gamma1 if s not in SIDES]
        if bad or not self.gamma1 or len(set(self.gamma1)) == len(SIDES):
            raise ConfigError(f"mesh.gamma1 must be a proper subset of {SIDES}, got {self.gamma1}")
        for name in ("b", "M1", "M2", "tol"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v}")
        for key, lst in (("alpha.list", self.alphas), ("alpha.sweep", self.alpha_sweep)):
            if not lst or any(not (a >= 1) for a in lst):
                raise ConfigError(f"{key}: all alpha must be >= 1, got {lst}")
        if any(b <= a for a, b in zip(self.alpha_sweep, self.alpha_sweep[1:])):
            raise ConfigError("alpha.sweep must be strictly increasing")
        if self.zd_kind not in ZD_KINDS:
            raise ConfigError(f"zd.kind must be one of {ZD_KINDS}, got {self.zd_kind!r}")
        if self.zd_kind == "constant" and self.zd_value is None:
            raise ConfigError("zd.kind = constant needs zd.value")
        if self.zd_kind == "field" and self.zd_field not in FIELDS:
            raise ConfigError(f"zd.field must be one of {sorted(FIELDS)}, got {self.zd_field!r}")
        if self.method not in METHODS:
            raise ConfigError(f"solver.method must be one of {METHODS}, got {self.method!r}")
        if self.alpha_level < 1 or self.diagonal_steps < 1:
            raise ConfigError("alpha.level and diagonal.steps must be positive")


# key -> (attribute, parser)
def _ints(text):
    return tuple(int(t) for t in _items(text))


def _floats(text):
    return tuple(float(t) for t in _items(text))


def _items(text):
    out = [t.strip() for t in text.split(",")]
    if any(not t for t in out):
        raise ValueError(f"empty item in list {text!r}")
    return out


KEYS = {
    "mesh.levels": ("levels", _ints),
    "mesh.gamma1": ("gamma1", lambda t: tuple(_items(t))),
    "problem.b": ("b", float),
    "problem.M1": ("M1", float),
    "problem.M2": ("M2", float),
    "zd.kind": ("zd_kind", str),
    "zd.value": ("zd_value", float),
    "zd.field": ("zd_field", str),
    "alpha.list": ("alphas", _floats),
    "reference.n": ("n_ref", int),
    "output.dir": ("output_dir", Path),
    "solver.method": ("method", str),
    "solver.tol": ("tol", float),
    "alpha.level": ("alpha_level", int),
    "alpha.sweep": ("alpha_sweep", _floats),
    "diagonal.steps": ("diagonal_steps", int),
}


def parse_config(text: str, require: bool = True) -> StudyConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, conv = KEYS[key]
        if attr in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[attr] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    if require:
        have = {k for k, (attr, _) in KEYS.items() if attr in values}
        missing = [k for k in REQUIRED if k not in have]
        if missing:
            raise ConfigError(f"missing required keys: {', '.join(missing)}")
    if values.get("zd_kind", "field") != "field" and "zd_field" not in values:
        values["zd_field"] = None
    return StudyConfig(**values)


def load_config(path) -> StudyConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text)


def format_config(cfg: StudyConfig) -> str:
    """Inverse of :func:`parse_config` (every key written)."""
    def fmt(v):
        if isinstance(v, tuple):
            return ", ".join(fmt(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = []
    for key, (attr, _) in KEYS.items():
        v = getattr(cfg, attr)
        if v is not None:
            lines.append(f"{key} = {fmt(v)}")
    return "\n".join(lines) + "\n"


__all__ = ["StudyConfig", "ConfigError", "parse_config", "load_config", "format_config", "FIELDS"]
