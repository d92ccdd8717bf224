"""Scenario files: an INI layout read with :mod:`configparser`.

Example::

    [scenario]
    name = sign-flip
    interval = -pi/2, pi/2
    epsilon = 0.01              ; or: sweep = 0.02, 0.005, 3, log
    phase = none                ; or: exp(i/eps)
    clip_to_Q = true

    [term.1]
    kind = multiply             ; multiply | d1 | d2 | rank_one | volterra
    coef = sin(x)

    [term.2]
    kind = multiply
    coef = -cos(x)
    eps_power = 1               ; coefficient is multiplied by eps^eps_power

    [numerics]
    panels = 128
    root_tol = 1e-13
    oracle = true
    oracle_step = 0.0123        ; any OracleConfig field, prefixed

    [output]
    report = run.json
    eigenfunction_points = 2001
    eigenfunction_half_width = 400

Coefficients must be supported in the closed interval.  Expressions whose
support cannot be bounded (``sin(x)``, ``x^2``...) are rejected unless
``clip_to_Q`` is set, in which case they are zeroed outside the interval.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .expr import Expr, is_constant, parse_expr, support
from .grid import Interval
from .perturbation import (D1, D2, Multiply, PerturbationOp, RankOne, Volterra,
                           phase_exp_inv)

__all__ = ["TermSpec", "Sweep", "ScenarioConfig", "load_config", "loads_config",
           "build_operator"]

TERM_KINDS = {"multiply": Multiply, "d1": D1, "d2": D2,
              "rank_one": RankOne, "volterra": Volterra}
PHASES = ("none", "exp(i/eps)")
ORACLE_KEYS = {"step": float, "half_width": float, "stretch": float,
               "n_states": int, "band_cut": float, "mass_fraction": float,
               "core_margin": float}


@dataclass(frozen=True)
class TermSpec:
    kind: str
    coef: Expr
    eps_power: int = 0


@dataclass(frozen=True)
class Sweep:
    start: float
    stop: float
    count: int
    spacing: str = "linear"

    def values(self) -> tuple:
        if self.count == 1:
            return (self.start,)
        if self.spacing == "log":
            vals = np.geomspace(self.start, self.stop, self.count)
        else:
            vals = np.linspace(self.start, self.stop, self.count)
        return tuple(float(v) for v in vals)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    interval: Interval
    terms: tuple
    epsilon: float | None = None
    sweep: Sweep | None = None
    phase: str = "none"
    clip_to_Q: bool = False
    panels: int = 128
    root_tol: float = 1e-13
    oracle: bool = True
    oracle_overrides: dict = field(default_factory=dict)
    report: str | None = None
    eigenfunction_points: int = 2001
    eigenfunction_half_width: float | None = None

    @property
    def epsilons(self) -> tuple:
        return (self.epsilon,) if self.sweep is None else self.sweep.values()


class _Clipped:
    """Coefficient zeroed outside the closed interval."""

    def __init__(self, coef, interval):
        self.coef, self.interval = coef, interval

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(self.interval.contains(x), self.coef(x), 0.0)


def build_operator(cfg: ScenarioConfig, eps: float) -> PerturbationOp:
    """The perturbation for one value of ``eps``."""
    terms = []
    for t in cfg.terms:
        coef = _Clipped(t.coef, cfg.interval) if cfg.clip_to_Q else t.coef
        term = TERM_KINDS[t.kind](coef)
        if t.eps_power:
            term = term.scaled(eps ** t.eps_power)
        terms.append(term)
    phase = phase_exp_inv(eps) if cfg.phase == "exp(i/eps)" else 1.0
    return PerturbationOp(cfg.interval, tuple(terms), phase)


# -- parsing -------------------------------------------------------------------

def _number(text, what):
    try:
        e = parse_expr(text)
    except ParseError as exc:
        raise ConfigError(f"{what}: {exc}") from None
    if not is_constant(e):
        raise ConfigError(f"{what}: expected a constant, got {text!r}")
    v = complex(e(0.0))
    if v.imag != 0 or not math.isfinite(v.real):
        raise ConfigError(f"{what}: expected a finite real number, got {text!r}")
    return v.real


def _split(text, n, what):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n or not all(parts):
        raise ConfigError(f"{what}: expected {n} comma-separated values, got {text!r}")
    return parts


def _get(section, key, conv, default=None, what=None):
    what = what or f"[{section.name}] {key}"
    if key not in section:
        if default is None:
            raise ConfigError(f"missing field {what}")
        return default
    try:
        return conv(section[key])
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def _bool(section, key, default):
    if key not in section:
        return default
    try:
        return section.getboolean(key)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: expected true/false") from None


def _parse_term(sec, interval, clip):
    kind = _get(sec, "kind", str).strip().lower()
    if kind not in TERM_KINDS:
        raise ConfigError(f"[{sec.name}] kind: unknown term kind {kind!r}")
    text = _get(sec, "coef", str)
    try:
        coef = parse_expr(text)
    except ParseError as exc:
        raise ConfigError(f"[{sec.name}] coef: {exc}") from None
    power = _get(sec, "eps_power", int, 0)
    if power < 0:
        raise ConfigError(f"[{sec.name}] eps_power must be >= 0")
    if not clip:
        sup = support(coef)
        tol = 1e-12 * max(1.0, abs(interval.a), abs(interval.b))
        if sup is None:
            raise ConfigError(
                f"[{sec.name}] coef {text!r} has unbounded support; wrap it in "
                "bump(...) or set clip_to_Q = true")
        if sup[0] <= sup[1] and (sup[0] < interval.a - tol or sup[1] > interval.b + tol):
            raise ConfigError(
                f"[{sec.name}] coef {text!r} is supported on [{sup[0]}, {sup[1]}], "
                f"outside [{interval.a}, {interval.b}]")
    return TermSpec(kind, coef, power)


def _parse(cp: configparser.ConfigParser) -> ScenarioConfig:
    if "scenario" not in cp:
        raise ConfigError("missing section [scenario]")
    sc = cp["scenario"]
    name = sc.get("name", "scenario").strip()
    a_txt, b_txt = _split(_get(sc, "interval", str), 2, "[scenario] interval")
    try:
        interval = Interval(_number(a_txt, "interval"), _number(b_txt, "interval"))
    except ValueError as exc:
        raise ConfigError(f"[scenario] interval: {exc}") from None

    has_eps, has_sweep = "epsilon" in sc, "sweep" in sc
    if has_eps == has_sweep:
        raise ConfigError("[scenario] needs exactly one of epsilon or sweep")
    epsilon = sweep = None
    if has_eps:
        epsilon = _number(sc["epsilon"], "[scenario] epsilon")
        if epsilon <= 0:
            raise ConfigError(f"[scenario] epsilon must be > 0, got {epsilon}")
    else:
        parts = [p.strip() for p in sc["sweep"].split(",")]
        if len(parts) not in (3, 4):
            raise ConfigError("[scenario] sweep: expected start, stop, count[, linear|log]")
        start = _number(parts[0], "sweep start")
        stop = _number(parts[1], "sweep stop")
        try:
            count = int(parts[2])
        except ValueError:
            raise ConfigError(f"[scenario] sweep count: not an integer: {parts[2]!r}") from None
        spacing = parts[3].lower() if len(parts) == 4 else "linear"
        if spacing not in ("linear", "log"):
            raise ConfigError(f"[scenario] sweep spacing must be linear or log, got {spacing!r}")
        if count < 1:
            raise ConfigError("[scenario] sweep count must be >= 1")
        if start <= 0 or stop <= 0:
            raise ConfigError("[scenario] sweep values must be > 0")
        if count > 1 and start == stop:
            raise ConfigError("[scenario] sweep must be strictly monotone")
        sweep = Sweep(start, stop, count, spacing)

    phase = sc.get("phase", "none").strip().replace(" ", "")
    if phase not in PHASES:
        raise ConfigError(f"[scenario] phase must be one of {PHASES}, got {phase!r}")
    clip = _bool(sc, "clip_to_Q", False)

    term_secs = sorted((s for s in cp.sections() if s.startswith("term")),
                       key=_term_order)
    if not term_secs:
        raise ConfigError("at least one [term.N] section is required")
    terms = tuple(_parse_term(cp[s], interval, clip) for s in term_secs)

    num = cp["numerics"] if "numerics" in cp else cp[cp.default_section]
    panels = _get(num, "panels", int, 128)
    if panels < 1:
        raise ConfigError("[numerics] panels must be >= 1")
    root_tol = _get(num, "root_tol", float, 1e-13)
    if not root_tol > 0:
        raise ConfigError("[numerics] root_tol must be > 0")
    oracle = _bool(num, "oracle", True)
    overrides = {}
    for key in num:
        if key.startswith("oracle_"):
            field_name = key[len("oracle_"):]
            if field_name not in ORACLE_KEYS:
                raise ConfigError(f"[numerics] unknown oracle setting {key!r}")
            overrides[field_name] = _get(num, key, ORACLE_KEYS[field_name])

    out = cp["output"] if "output" in cp else cp[cp.default_section]
    report = out.get("report")
    points = _get(out, "eigenfunction_points", int, 2001)
    if points < 2:
        raise ConfigError("[output] eigenfunction_points must be >= 2")
    half = None
    if "eigenfunction_half_width" in out:
        half = _get(out, "eigenfunction_half_width", float)
        if half <= 0:
            raise ConfigError("[output] eigenfunction_half_width must be > 0")

    return ScenarioConfig(name, interval, terms, epsilon, sweep, phase, clip,
                          panels, root_tol, oracle, overrides,
                          report.strip() if report else None, points, half)


def _term_order(section):
    suffix = section.partition(".")[2]
    return (0, int(suffix), "") if suffix.isdigit() else (1, 0, suffix)


def loads_config(text: str) -> ScenarioConfig:
    """Parse a scenario from a string."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return _parse(cp)


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return loads_config(text)
