"""Shallow bound states of weakly perturbed one-dimensional Schrodinger operators.

For ``H = -(d^2/dx^2 + eps L)`` with ``L`` localized on an interval ``Q``,
decide whether an eigenvalue emerges from the threshold ``lambda = 0``,
compute it with its eigenfunction, and cross-check against an independent
finite-difference discretization.
"""
from .errors import (AtPole, ConfigError, NearSingular, NoConvergence, ParseError,
                     ShallowBoundError)
from .grid import (Grid, GridFunction, Interval, Probe, build_grid, inner,
                   integrate)
from .perturbation import (D1, D2, Multiply, PerturbationOp, RankOne, Volterra,
                           apply, assemble, is_real, l_of_one, norm_proxy)
from .pole import (AsymptoticCoeffs, Decision, EigenPair, PoleResult, Verdict,
                   apply_resolvent, decide, eigenpair, eval_F, find_pole,
                   m_coeffs, solve_S)

__all__ = [
    "AtPole", "ConfigError", "NearSingular", "NoConvergence", "ParseError",
    "ShallowBoundError", "Grid", "GridFunction", "Interval", "Probe",
    "build_grid", "inner", "integrate", "D1", "D2", "Multiply",
    "PerturbationOp", "RankOne", "Volterra", "apply", "assemble", "is_real",
    "l_of_one", "norm_proxy", "AsymptoticCoeffs", "Decision", "EigenPair",
    "PoleResult", "Verdict", "apply_resolvent", "decide", "eigenpair",
    "eval_F", "find_pole", "m_coeffs", "solve_S",
]
