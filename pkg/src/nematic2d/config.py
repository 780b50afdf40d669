"""Experiment configuration: flat ``section.key = value`` text files.

One pair per line, ``#`` starts a comment.  Vortex lists are written as
space-separated ``position:degree`` tokens, e.g. ``-0.2+0j:1 0.2+0j:-1``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .errors import ConfigError

TIERS = ("kinetic", "closure", "vortex", "validate", "specfun-table", "maxslope-demo")


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_vortices(text) -> List[Tuple[complex, int]]:
    out = []
    for token in text.split():
        pos, _, deg = token.rpartition(":")
        if not pos:
            raise ValueError(f"vortex token {token!r} must look like position:degree")
        d = int(deg)
        if d not in (1, -1):
            raise ValueError(f"vortex degree must be +1 or -1, got {d}")
        out.append((complex(pos.replace(" ", "")), d))
    return out


def format_vortices(vortices) -> str:
    return " ".join(f"{_fmt_complex(z)}:{d:+d}" for z, d in vortices)


def _fmt_complex(z):
    z = complex(z)
    return f"{z.real!r}{z.imag:+}j"


# key -> (parser, default, allowed values or None)
_SCHEMA: Dict[str, Tuple[Any, Any, Optional[tuple]]] = {
    "tier": (str, None, TIERS),
    "name": (str, "", None),
    "seed": (int, 0, None),
    "params.gamma": (float, 6.0, None),
    "params.epsilon": (float, 0.1, None),
    "grid.nx": (int, 32, None),
    "grid.ny": (int, 32, None),
    "grid.lx": (float, 1.0, None),
    "grid.ly": (float, 1.0, None),
    "boundary.type": (str, "uniform", ("uniform", "winding", "file", "none")),
    "boundary.angle": (float, 0.0, None),
    "boundary.degree": (int, 0, None),
    "boundary.anchors": (parse_vortices, [], None),
    "boundary.file": (str, "", None),
    "initial.type": (str, "equilibrium", ("equilibrium", "isotropic", "multivortex", "snapshot")),
    "initial.vortices": (parse_vortices, [], None),
    "initial.phase_amplitude": (float, 0.0, None),
    "initial.perturbation": (float, 1e-3, None),
    "initial.file": (str, "", None),
    "time.dt": (float, 1e-3, None),
    "time.t_end": (float, 1.0, None),
    "time.output_every": (int, 0, None),
    "time.rescaled": (_parse_bool, False, None),
    "kinetic.k_max": (int, 8, None),
    "kinetic.truncation": (str, "equilibrium", ("zero", "equilibrium")),
    "kinetic.scheme": (str, "etd2", ("etd1", "etd2")),
    "tier2.scheme": (str, "maxent", ("maxent", "ldg")),
    "tier2.method": (str, "euler", ("euler", "if")),
    "vortex.m_b": (int, 1024, None),
    "vortex.free_space": (_parse_bool, False, None),
    "vortex.margin_cells": (float, 3.0, None),
    "specfun.r_min": (float, 0.0, None),
    "specfun.r_max": (float, 0.99, None),
    "specfun.n": (int, 100, None),
    "validate.criteria": (str, "all", None),
    "output.dir": (str, "nematic-out", None),
}


def _format_value(key, value):
    if key in ("boundary.anchors", "initial.vortices"):
        return format_vortices(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Resolved configuration: every schema key with its parsed value."""

    values: Dict[str, Any] = field(default_factory=dict)
    base_dir: str = "."

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def tier(self) -> str:
        return self.values["tier"]

    def to_text(self) -> str:
        lines = [f"{key} = {_format_value(key, self.values[key])}" for key in _SCHEMA if key in self.values]
        return "\n".join(lines) + "\n"

    def as_dict(self):
        return {k: (format_vortices(v) if k in ("boundary.anchors", "initial.vortices") else v)
                for k, v in self.values.items()}

    def resolve_path(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def parse_config(text: str, base_dir: str = ".", overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse and validate; all problems are reported together in one ConfigError."""
    problems = []
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key = key.strip()
        if not sep or not key:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        if key not in _SCHEMA:
            problems.append(f"{key}: unknown key")
            continue
        if key in raw:
            problems.append(f"{key}: given twice")
        raw[key] = value.strip()
    raw.update(overrides or {})

    values = {}
    for key, (parser, default, allowed) in _SCHEMA.items():
        if key not in raw:
            if default is None:
                problems.append(f"{key}: required")
            else:
                values[key] = default
            continue
        try:
            val = parser(raw[key]) if isinstance(raw[key], str) else raw[key]
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
            continue
        if allowed is not None and val not in allowed:
            problems.append(f"{key}: must be one of {', '.join(allowed)} (got {val!r})")
            continue
        values[key] = val
    cfg = ExperimentConfig(values, base_dir)
    if "tier" in values:
        problems.extend(_semantic_problems(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def _semantic_problems(cfg: ExperimentConfig) -> List[str]:
    v = cfg.values
    out = []

    def positive(key):
        if key in v and not v[key] > 0:
            out.append(f"{key}: must be positive")

    for key in ("params.gamma", "params.epsilon", "grid.lx", "grid.ly", "time.dt", "time.t_end", "vortex.m_b"):
        positive(key)
    for key in ("grid.nx", "grid.ny"):
        if key in v and v[key] < 3:
            out.append(f"{key}: need at least 3 nodes")
    if all(k in v for k in ("grid.nx", "grid.ny", "grid.lx", "grid.ly")) and v["grid.nx"] > 1 and v["grid.ny"] > 1:
        hx = v["grid.lx"] / (v["grid.nx"] - 1)
        hy = v["grid.ly"] / (v["grid.ny"] - 1)
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            out.append("grid.ly: cells must be square (lx/(nx-1) = ly/(ny-1))")
    if v.get("time.output_every", 0) < 0:
        out.append("time.output_every: must be nonnegative")
    if v.get("kinetic.k_max", 8) < 2:
        out.append("kinetic.k_max: must be at least 2")
    if v.get("kinetic.k_max", 8) > 63:
        out.append("kinetic.k_max: at most 63 (Bessel order bound)")
    tier = v["tier"]
    if tier in ("kinetic", "closure", "vortex"):
        if v.get("boundary.type") == "file":
            path = v.get("boundary.file", "")
            if not path:
                out.append("boundary.file: required when boundary.type = file")
            elif not os.path.exists(cfg.resolve_path(path)):
                out.append(f"boundary.file: {path} does not exist")
        if v.get("initial.type") == "snapshot":
            path = v.get("initial.file", "")
            if not path:
                out.append("initial.file: required when initial.type = snapshot")
            elif not os.path.exists(cfg.resolve_path(path)):
                out.append(f"initial.file: {path} does not exist")
        if v.get("initial.type") == "multivortex" and not v.get("initial.vortices"):
            out.append("initial.vortices: required when initial.type = multivortex")
    if tier == "vortex":
        if not v.get("initial.vortices"):
            out.append("initial.vortices: the vortex tier needs at least one vortex")
        if not v.get("vortex.free_space") and v.get("boundary.type") == "none":
            out.append("boundary.type: the vortex tier needs boundary data unless vortex.free_space = true")
    if tier == "specfun-table":
        if not 0 <= v.get("specfun.r_min", 0) < v.get("specfun.r_max", 0.99) < 1:
            out.append("specfun.r_max: need 0 <= r_min < r_max < 1")
        if v.get("specfun.n", 2) < 2:
            out.append("specfun.n: need at least 2 rows")
    return out


def load_config(path: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"config file: {exc}"]) from exc
    return parse_config(text, os.path.dirname(os.path.abspath(path)), overrides)
