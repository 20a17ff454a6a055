"""Run configuration: an INI file with sections, loaded into a validated :class:`RunConfig`.

Example::

    [grid]
    box = -1.5, 1.5
    cells = 256
    dim = 2

    [domain]
    omega_expr = 0.1+0.2*sin(2*x1)
    lipschitz_A = 1

    [exponents]
    p = 2
    q = 2
    s = 0.5

    [kernels]
    radius = 0.25
    L_phi = 4
    L_psi = 6

    [analysis]
    a = 3
    space = F
    jmax = 8

    [run]
    seed = 0
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .expdsl import ParseError, ScalarField, parse_scalar_field
from .geometry import DEFAULT_WORKING_BOX

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "SUITES"]

SUITES = ("calderon", "moments", "luxemburg", "hardy", "mollifier", "equivalence", "extension", "uniformity", "ilj")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    box: tuple = DEFAULT_WORKING_BOX
    cells: int = 256
    dim: int = 2
    omega_expr: str = "0.1+0.2*sin(2*x1)"
    lipschitz_A: float = 1.0
    p_expr: str = "2"
    q_expr: str = "2"
    s_expr: str = "0.5"
    radius: float = 0.25
    L_phi: int = 4
    L_psi: int = 6
    depth: int | None = None
    a: float = 3.0
    space: str = "F"
    jmax: int = 8
    suites: tuple = SUITES
    output: str | None = None
    csv: str | None = None
    seed: int = 0
    fields: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def spacing(self) -> float:
        return (self.box[1] - self.box[0]) / self.cells

    @property
    def grid_box(self) -> list:
        return [tuple(self.box)] * self.dim

    def scalar(self, name: str) -> ScalarField:
        return self.fields[name]

    def domain_config(self) -> dict:
        return {"omega_expr": self.omega_expr, "lipschitz_A": self.lipschitz_A, "dim": self.dim}

    def with_(self, **changes) -> "RunConfig":
        return _validated(replace(self, **changes))

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("fields")
        out["box"] = list(self.box)
        out["suites"] = list(self.suites)
        return out


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(","))
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _validated(cfg: RunConfig) -> RunConfig:
    if len(cfg.box) != 2 or not cfg.box[0] < cfg.box[1]:
        raise ConfigError(f"box must be 'lo, hi' with lo < hi (got {cfg.box})")
    if cfg.cells < 16 or cfg.cells & (cfg.cells - 1):
        raise ConfigError(f"cells must be a power of two >= 16 (got {cfg.cells})")
    if cfg.dim not in (1, 2, 3):
        raise ConfigError("dim must be 1, 2 or 3")
    if cfg.space not in ("B", "F"):
        raise ConfigError("space must be B or F")
    if not cfg.radius > 0 or not cfg.lipschitz_A > 0 or not cfg.a > 0:
        raise ConfigError("radius, lipschitz_A and a must be positive")
    if cfg.L_phi < 1 or cfg.L_psi < 1 or cfg.jmax < 1:
        raise ConfigError("L_phi, L_psi and jmax must be >= 1")
    unknown = set(cfg.suites) - set(SUITES)
    if unknown:
        raise ConfigError(f"unknown suites {sorted(unknown)}; choose from {SUITES}")
    fields = {}
    boundary_dim = max(cfg.dim - 1, 1)
    for name, src, dim in (("omega", cfg.omega_expr, boundary_dim), ("p", cfg.p_expr, cfg.dim),
                           ("q", cfg.q_expr, cfg.dim), ("s", cfg.s_expr, cfg.dim)):
        try:
            fields[name] = parse_scalar_field(src, dim)
        except ParseError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    object.__setattr__(cfg, "fields", fields)
    return cfg


_KEYS = {
    ("grid", "box"): ("box", _floats),
    ("grid", "cells"): ("cells", int),
    ("grid", "dim"): ("dim", int),
    ("domain", "omega_expr"): ("omega_expr", str),
    ("domain", "lipschitz_a"): ("lipschitz_A", float),
    ("exponents", "p"): ("p_expr", str),
    ("exponents", "q"): ("q_expr", str),
    ("exponents", "s"): ("s_expr", str),
    ("kernels", "radius"): ("radius", float),
    ("kernels", "l_phi"): ("L_phi", int),
    ("kernels", "l_psi"): ("L_psi", int),
    ("kernels", "depth"): ("depth", int),
    ("analysis", "a"): ("a", float),
    ("analysis", "space"): ("space", str.upper),
    ("analysis", "jmax"): ("jmax", int),
    ("run", "suites"): ("suites", lambda t: tuple(s.strip() for s in t.split(",") if s.strip())),
    ("run", "output"): ("output", str),
    ("run", "csv"): ("csv", str),
    ("run", "seed"): ("seed", int),
}


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if (section.lower(), key) not in _KEYS:
                raise ConfigError(f"unknown key [{section}] {key}")
            name, conv = _KEYS[(section.lower(), key)]
            try:
                values[name] = conv(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return _validated(RunConfig(**values))


def load_config(path=None) -> RunConfig:
    """Read ``path`` (or return the defaults when ``path`` is None)."""
    if path is None:
        return _validated(RunConfig())
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
