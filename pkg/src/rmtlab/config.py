"""Experiment configuration: a flat ``key = value`` file.

    # comments start with '#'
    command = thick
    N = 6000
    gamma = [0.5, 1.0]     # lists use brackets, items separated by commas
    grid = -0.95:0.95:381  # start:stop:count

Command-line ``key=value`` overrides are applied on top of the file.  Every
value is kept as text until ``validate`` parses it, so one call reports
every problem at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .eqmeasure import BUILTIN_POTENTIALS
from .errors import ConfigError

COMMANDS = ("eqm", "sample", "rigidity", "maxfield", "ks", "gmc", "meso-gmc", "thick", "freeze",
            "hankel-check", "pv-check", "dump-field")
NEEDS_GAMMA = ("gmc", "meso-gmc", "thick", "freeze")
HANKEL_KINDS = ("single", "merging", "smooth")
OUT_ENV = "RMTLAB_OUT"


def _parse_list(text: str, item):
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    parts = [p.strip() for p in body.split(",") if p.strip()]
    return tuple(item(p) for p in parts)


def _floats(text):
    return _parse_list(text, float)


def _ints(text):
    return _parse_list(text, int)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _potential(text):
    text = text.strip()
    if text.startswith("["):
        return _floats(text)
    return text


def _grid(text):
    text = text.strip()
    if ":" in text:
        a, b, n = text.split(":")
        return (float(a), float(b), int(n))
    return _floats(text)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str = ""
    potential: object = "gue"  # builtin name, or Chebyshev coefficients c_1..c_K of V'
    N: int = 200
    M: int = 50
    seed: int = 0
    gamma: tuple = ()
    alpha: float = 0.5
    grid: tuple = (-0.95, 0.95, 381)
    digits: int = 50
    normalization: str = "monte-carlo"
    sampler: str = "auto"
    sweeps: int = 0
    burn_in: int = 0
    proposal_scale: float = 0.0
    thinning: int = 0
    workers: int = 1
    out: str = ""
    # hankel-check
    kind: str = "single"
    Ns: tuple = (6, 8, 10, 12)
    x: tuple = (0.0,)
    x1: float = -0.1
    x2: float = 0.1
    gamma1: float = 0.5
    gamma2: float = 0.5
    w: tuple = ()
    # pv-check
    r_min: float = 1e-3
    r_max: float = 40.0
    enforce: bool = False

    def grid_points(self) -> np.ndarray:
        if len(self.grid) == 3 and isinstance(self.grid[2], int):
            a, b, n = self.grid
            return np.linspace(a, b, n)
        return np.asarray(self.grid, dtype=float)

    def output_dir(self) -> Path:
        import os

        if self.out:
            return Path(self.out)
        root = os.environ.get(OUT_ENV, "rmtlab-out")
        return Path(root) / self.command

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PARSERS = {
    "command": str.strip,
    "potential": _potential,
    "N": int,
    "M": int,
    "seed": int,
    "gamma": _floats,
    "alpha": float,
    "grid": _grid,
    "digits": int,
    "normalization": str.strip,
    "sampler": str.strip,
    "sweeps": int,
    "burn_in": int,
    "proposal_scale": float,
    "thinning": int,
    "workers": int,
    "out": str.strip,
    "kind": str.strip,
    "Ns": _ints,
    "x": _floats,
    "x1": float,
    "x2": float,
    "gamma1": float,
    "gamma2": float,
    "w": _floats,
    "r_min": float,
    "r_max": float,
    "enforce": _bool,
}


def parse_text(text: str) -> dict:
    """Raw ``{key: text}`` mapping; later lines win."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def load(path=None, overrides=()) -> dict:
    raw = parse_text(Path(path).read_text()) if path else {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def _typed(raw: dict):
    values, problems = {}, []
    for key, text in raw.items():
        if key not in PARSERS:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            values[key] = PARSERS[key](text)
        except (ValueError, TypeError) as exc:
            problems.append(f"{key}: cannot parse {text!r} ({exc})")
    return values, problems


def validate(raw: dict) -> list[str]:
    """Every problem with the configuration, without running anything."""
    values, problems = _typed(raw)
    cfg = ExperimentConfig(**values)
    c = cfg.command
    if c not in COMMANDS:
        problems.append(f"unknown command {c!r}; expected one of {', '.join(COMMANDS)}")
    if isinstance(cfg.potential, str) and cfg.potential not in BUILTIN_POTENTIALS:
        problems.append(f"unknown potential {cfg.potential!r}")
    for key in ("N", "M", "digits", "workers"):
        if getattr(cfg, key) < 1:
            problems.append(f"{key} must be positive")
    for key in ("sweeps", "burn_in", "thinning"):
        if getattr(cfg, key) < 0:
            problems.append(f"{key} must be positive")
    if cfg.proposal_scale < 0:
        problems.append("proposal_scale must be positive")
    if c in NEEDS_GAMMA and not cfg.gamma:
        problems.append(f"{c} needs a nonempty gamma list")
    if c in ("gmc", "meso-gmc"):
        if any(abs(g) >= 2 for g in cfg.gamma):
            problems.append("gamma must satisfy |gamma| < 2 for chaos densities")
        grid = cfg.grid_points()
        if grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] <= -1 or grid[-1] >= 1:
            problems.append("grid must be increasing inside (-1, 1)")
    if c == "gmc":
        if cfg.normalization not in ("monte-carlo", "hankel-exact", "surrogate"):
            problems.append(f"unknown normalization {cfg.normalization!r}")
        if cfg.normalization == "hankel-exact" and cfg.N > 12:
            problems.append("N exceeds exact-oracle cap (12) for hankel-exact normalization")
        if cfg.normalization == "monte-carlo" and cfg.M < 50:
            problems.append("monte-carlo normalization needs M >= 50")
    if c == "meso-gmc":
        if not 0 < cfg.alpha < 1:
            problems.append("alpha must lie in (0, 1)")
        if cfg.M < 50:
            problems.append("monte-carlo normalization needs M >= 50")
    if c == "freeze" and any(g <= 0 for g in cfg.gamma):
        problems.append("freeze needs gamma > 0")
    if c == "thick" and any(g == 0 for g in cfg.gamma):
        problems.append("thick needs gamma != 0")
    if c in ("rigidity", "maxfield", "ks", "thick", "freeze") and cfg.N < 2:
        problems.append(f"{c} needs N >= 2")
    if c == "hankel-check":
        cap = 16 * cfg.digits // 50
        if cfg.kind not in HANKEL_KINDS:
            problems.append(f"unknown hankel kind {cfg.kind!r}")
        if not cfg.Ns or any(n < 1 for n in cfg.Ns):
            problems.append("Ns must be a nonempty list of positive sizes")
        elif max(cfg.Ns) > cap:
            problems.append(f"N exceeds exact-oracle cap ({cap} at {cfg.digits} digits)")
        if not -1 < cfg.x1 <= cfg.x2 < 1:
            problems.append("need -1 < x1 <= x2 < 1")
        if any(not -1 < v < 1 for v in cfg.x):
            problems.append("x values must lie in (-1, 1)")
    if c == "pv-check":
        if not 0 < cfg.r_min < 1 < cfg.r_max:
            problems.append("need 0 < r_min < 1 < r_max")
        if cfg.gamma1 == cfg.gamma2:
            problems.append("pv-check needs gamma1 != gamma2")
    if c in ("dump-field", "eqm"):
        grid = cfg.grid_points()
        if grid.size < 1 or not np.all(np.isfinite(grid)):
            problems.append("grid must be finite and nonempty")
    if cfg.sampler not in ("auto", "gue", "invariant"):
        problems.append(f"unknown sampler {cfg.sampler!r}")
    if cfg.sampler == "gue" and cfg.potential != "gue":
        problems.append("the tridiagonal sampler only draws GUE spectra")
    return problems


def resolve(raw: dict) -> ExperimentConfig:
    problems = validate(raw)
    if problems:
        raise ConfigError("; ".join(problems))
    values, _ = _typed(raw)
    return ExperimentConfig(**values)


def echo(raw: dict) -> str:
    """Canonical text form of a raw configuration, sorted by key."""
    return "".join(f"{k} = {raw[k]}\n" for k in sorted(raw))


def finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None
