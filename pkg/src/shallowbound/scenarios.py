"""Built-in scenarios with reference asymptotics.

Each scenario is an ordinary config text plus the observable it is
judged by (``k/eps``, ``k/eps^2``, ``lambda/eps^4``...), the value the
classical leading-order formula gives for it (``reference``), and the
expected verdict.  The same texts ship as files under ``configs/``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .config import ScenarioConfig, loads_config
from .pole import Verdict

__all__ = ["BuiltinScenario", "SCENARIOS", "get_scenario"]

_QUARTIC_SCALE = math.pi / math.sqrt(3.0)


@dataclass(frozen=True)
class BuiltinScenario:
    name: str
    summary: str
    text: str
    epsilons: tuple
    quantity: str                                   # label of the observable
    observe: Callable[[float, complex], complex]    # (eps, k) -> observable
    reference: Callable[[float], complex] | None    # eps -> reference value
    expected: Callable[[float], Verdict]
    reference_tol: float = 0.02

    @property
    def config(self) -> ScenarioConfig:
        return loads_config(self.text)


def _lam(k):
    return -k * k


SCENARIOS = (
    BuiltinScenario(
        "bump-potential",
        "real unit-mass bump potential: shallow state with lambda ~ -eps^2/4",
        """\
[scenario]
name = bump-potential
interval = -1, 1
epsilon = 0.05

[term.1]
kind = multiply
coef = bump(0, 1)
""",
        (0.05, 0.025),
        "lambda/eps^2",
        lambda e, k: _lam(k) / e**2,
        lambda e: -0.25,
        lambda e: Verdict.EIGENVALUE,
        reference_tol=0.1,
    ),
    BuiltinScenario(
        "complex-zero-mean",
        "V = (1+2i)u' with a real bump u: zero mean, no eigenvalue",
        """\
[scenario]
name = complex-zero-mean
interval = -1, 1
epsilon = 0.1

[term.1]
kind = multiply
coef = (1+2i)*dbump(0, 1)
""",
        (0.1, 0.05),
        "k",
        lambda e, k: k,
        None,
        lambda e: Verdict.NO_EIGENVALUE,
    ),
    BuiltinScenario(
        "sign-flip",
        "V = sin x - eps cos x on (-pi/2, pi/2): negative mean, k/eps^2 -> const",
        """\
[scenario]
name = sign-flip
interval = -pi/2, pi/2
epsilon = 0.01
clip_to_Q = true

[term.1]
kind = multiply
coef = sin(x)

[term.2]
kind = multiply
coef = -cos(x)
eps_power = 1
""",
        (0.02, 0.01, 0.005),
        "k/eps^2",
        lambda e, k: k / e**2,
        lambda e: (math.pi - 2) / 2,
        lambda e: Verdict.EIGENVALUE,
    ),
    BuiltinScenario(
        "oscillating-phase",
        "exp(i/eps) V with a real bump V: existence follows the sign of cos(1/eps)",
        """\
[scenario]
name = oscillating-phase
interval = -1, 1
epsilon = 0.0318309886183791
phase = exp(i/eps)

[term.1]
kind = multiply
coef = bump(0, 1)
""",
        tuple(1 / (2 * math.pi * n) for n in (3, 4, 5))
        + tuple(1 / ((2 * n + 1) * math.pi) for n in (3, 4, 5)),
        "-k^2",
        lambda e, k: _lam(k),
        lambda e: -((e * math.cos(1 / e)) ** 2) / 4 if math.cos(1 / e) > 0 else None,
        lambda e: Verdict.EIGENVALUE if math.cos(1 / e) > 0 else Verdict.NO_EIGENVALUE,
        reference_tol=0.1,
    ),
    BuiltinScenario(
        "differential",
        "a2 u'' + a1 u' with bump coefficients: L[1] = 0, k = 0 exactly",
        """\
[scenario]
name = differential
interval = -1, 1
epsilon = 0.1

[term.1]
kind = d2
coef = bump(0, 0.8)

[term.2]
kind = d1
coef = bump(0.2, 0.6)
""",
        (0.1,),
        "k",
        lambda e, k: k,
        lambda e: 0.0,
        lambda e: Verdict.NO_EIGENVALUE,
    ),
    BuiltinScenario(
        "rank-one",
        "chi_Q <rho u> with unit-mass rho: k/eps -> |Q|<rho>/2",
        """\
[scenario]
name = rank-one
interval = -1, 1
epsilon = 0.01

[term.1]
kind = rank_one
coef = bump(0.2, 0.6)
""",
        (0.01,),
        "k/eps",
        lambda e, k: k / e,
        lambda e: 1.0,
        lambda e: Verdict.EIGENVALUE,
    ),
    BuiltinScenario(
        "volterra",
        "chi_Q int^x rho u on (0, 2): k/eps -> (|Q|<rho> - <x rho>)/2",
        """\
[scenario]
name = volterra
interval = 0, 2
epsilon = 0.01

[term.1]
kind = volterra
coef = bump(0.7, 0.6)
""",
        (0.01,),
        "k/eps",
        lambda e, k: k / e,
        lambda e: 0.5 * (2.0 - 0.7),
        lambda e: Verdict.EIGENVALUE,
    ),
    BuiltinScenario(
        "volterra-even",
        "Volterra term with even rho on symmetric Q, compared with the "
        "rank-one law lambda ~ -(eps |Q| <rho>)^2/4",
        """\
[scenario]
name = volterra-even
interval = -1, 1
epsilon = 0.01

[term.1]
kind = volterra
coef = bump(0, 0.5)
""",
        (0.01,),
        "lambda/eps^2",
        lambda e, k: _lam(k) / e**2,
        lambda e: -1.0,
        lambda e: Verdict.EIGENVALUE,
    ),
    BuiltinScenario(
        "zero-mean-quartic",
        "real zero-mean V with int (int^x V)^2 = 1: lambda/eps^4 -> const",
        f"""\
[scenario]
name = zero-mean-quartic
interval = -1, 1
epsilon = 0.2
clip_to_Q = true

[term.1]
kind = multiply
coef = {_QUARTIC_SCALE!r}*sin(pi*x)
""",
        (0.4, 0.3, 0.2),
        "lambda/eps^4",
        lambda e, k: _lam(k) / e**4,
        lambda e: -1.0,
        lambda e: Verdict.EIGENVALUE,
        reference_tol=0.1,
    ),
)


def get_scenario(name: str) -> BuiltinScenario:
    for s in SCENARIOS:
        if s.name == name:
            return s
    raise KeyError(name)
