"""Localized perturbation operators and their grid matrices.

A :class:`PerturbationOp` is a sum of terms supported in ``Q``::

    Multiply(V)   u -> V u
    D1(a1)        u -> a1 u'
    D2(a2)        u -> a2 u''
    RankOne(rho)  u -> chi_Q * int_Q rho u
    Volterra(rho) u -> chi_Q * int_a^x rho u

times a unit ``phase``.  Coefficients are callables ``x -> complex array``
(expressions from :mod:`shallowbound.expr`, plain functions, constants or
:class:`~shallowbound.grid.GridFunction` samples).  Operators carry no
``eps``; callers build one per ``eps`` when coefficients depend on it.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .grid import (Grid, GridFunction, Interval, Probe, cumulative_integral,
                   cumulative_weights)

__all__ = [
    "Multiply", "D1", "D2", "RankOne", "Volterra", "PerturbationOp",
    "OpMatrices", "apply", "l_of_one", "assemble", "norm_proxy", "is_real",
    "sample_coefficient",
]

Coefficient = Union[Callable[[np.ndarray], np.ndarray], complex, float]


def sample_coefficient(coef: Coefficient, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    vals = coef(x) if callable(coef) else coef
    return np.broadcast_to(np.asarray(vals, dtype=complex), x.shape).copy()


@dataclass(frozen=True)
class _Scaled:
    factor: complex
    coef: Coefficient

    def __call__(self, x):
        return self.factor * sample_coefficient(self.coef, x)


@dataclass(frozen=True)
class _Term:
    coef: Coefficient

    def scaled(self, factor):
        return replace(self, coef=_Scaled(complex(factor), self.coef))


@dataclass(frozen=True)
class Multiply(_Term):
    """``u -> V u``."""


@dataclass(frozen=True)
class D1(_Term):
    """``u -> a1 u'``."""


@dataclass(frozen=True)
class D2(_Term):
    """``u -> a2 u''``."""


@dataclass(frozen=True)
class RankOne(_Term):
    """``u -> chi_Q <rho u>``."""


@dataclass(frozen=True)
class Volterra(_Term):
    """``u -> chi_Q int_{-inf}^x rho u``."""


@dataclass(frozen=True)
class PerturbationOp:
    interval: Interval
    terms: tuple
    phase: complex = 1.0

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("a perturbation needs at least one term")
        for t in terms:
            if not isinstance(t, _Term):
                raise TypeError(f"not a perturbation term: {t!r}")
        phase = complex(self.phase)
        if abs(abs(phase) - 1.0) > 1e-12:
            raise ValueError(f"phase must have unit modulus, got {phase}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "phase", phase)

    def scaled(self, factor) -> "PerturbationOp":
        """Same operator multiplied by ``factor`` (folded into coefficients)."""
        return replace(self, terms=tuple(t.scaled(factor) for t in self.terms))

    def __rmul__(self, factor):
        return self.scaled(factor)

    def with_phase(self, phase) -> "PerturbationOp":
        return replace(self, phase=phase)

    def has(self, *kinds) -> bool:
        return any(isinstance(t, kinds) for t in self.terms)


@dataclass(frozen=True, eq=False)
class OpMatrices:
    """``L[u] = M0 u + M1 u' + M2 u''`` at the nodes of ``grid``."""

    grid: Grid
    M0: np.ndarray = field(repr=False)
    M1: np.ndarray = field(repr=False)
    M2: np.ndarray = field(repr=False)

    def apply(self, u, du, d2u):
        return self.M0 @ u + self.M1 @ du + self.M2 @ d2u


def apply(op: PerturbationOp, u: Probe, grid: Grid) -> GridFunction:
    """Samples of ``L[u]`` at the nodes of ``grid`` (computed term by term)."""
    x = grid.nodes
    val, d1, d2 = u.sample(x)
    out = np.zeros(grid.n, dtype=complex)
    for term in op.terms:
        c = sample_coefficient(term.coef, x)
        if isinstance(term, Multiply):
            out += c * val
        elif isinstance(term, D1):
            out += c * d1
        elif isinstance(term, D2):
            out += c * d2
        elif isinstance(term, RankOne):
            out += np.dot(grid.weights, c * val)
        elif isinstance(term, Volterra):
            out += cumulative_integral(GridFunction(grid, c * val)).values
        else:  # pragma: no cover
            raise TypeError(type(term))
    return GridFunction(grid, op.phase * out)


def l_of_one(op: PerturbationOp, grid: Grid) -> GridFunction:
    """``L[1]`` on the grid."""
    return apply(op, Probe.constant(1.0), grid)


def assemble(op: PerturbationOp, grid: Grid) -> OpMatrices:
    n = grid.n
    x = grid.nodes
    M0 = np.zeros((n, n), dtype=complex)
    m1 = np.zeros(n, dtype=complex)
    m2 = np.zeros(n, dtype=complex)
    C = None
    for term in op.terms:
        c = sample_coefficient(term.coef, x)
        if isinstance(term, Multiply):
            M0[np.diag_indices(n)] += c
        elif isinstance(term, D1):
            m1 += c
        elif isinstance(term, D2):
            m2 += c
        elif isinstance(term, RankOne):
            M0 += np.outer(np.ones(n), grid.weights * c)
        elif isinstance(term, Volterra):
            if C is None:
                C = cumulative_weights(grid)
            M0 += C * c[None, :]
    ph = op.phase
    return OpMatrices(grid, ph * M0, ph * np.diag(m1), ph * np.diag(m2))


def norm_proxy(op: PerturbationOp, grid: Grid) -> float:
    """Computable stand-in for the boundedness constant of ``L``.

    For each of ``M0, M1, M2`` the spectral norm in the weighted L2 space
    is bounded by ``sqrt(||B||_1 ||B||_inf)`` with
    ``B = W^{1/2} M W^{-1/2}``; the three bounds are summed.
    """
    mats = assemble(op, grid)
    sw = np.sqrt(grid.weights)
    total = 0.0
    for M in (mats.M0, mats.M1, mats.M2):
        B = np.abs(sw[:, None] * M / sw[None, :])
        total += float(np.sqrt(B.sum(axis=0).max() * B.sum(axis=1).max()))
    return total


def is_real(op: PerturbationOp, grid: Grid | None = None):
    """``True`` if ``op`` is certified real, else ``None`` (unknown).

    Only real multiplicative operators with unit phase are certified; the
    defining condition quantifies over all test functions and is not
    checked numerically.  ``grid`` (default: 64 panels on ``Q``) is where
    coefficients are inspected.
    """
    if op.phase != 1:
        return None
    if not all(isinstance(t, Multiply) for t in op.terms):
        return None
    if grid is None:
        from .grid import build_grid
        grid = build_grid(op.interval, 64)
    for t in op.terms:
        if np.any(sample_coefficient(t.coef, grid.nodes).imag != 0):
            return None
    return True


def phase_exp_inv(eps: float) -> complex:
    """The oscillating phase ``exp(i/eps)``."""
    return cmath.exp(1j / eps)
