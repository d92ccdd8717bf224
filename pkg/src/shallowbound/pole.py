"""Pole equation for shallow bound states and everything derived from it.

Writing the spectral parameter as ``lambda = -k**2`` the free resolvent
kernel is ``-exp(-k|x-t|)/(2k)``.  Its pole at ``k = 0`` is split off:

    A(k) g = Atilde(k) g - <g>/(2k),    Atilde kernel = kappa(k, |x-t|),
    kappa(k, r) = (1 - exp(-k r)) / (2k)          (-> r/2 as k -> 0)

so ``T0(k) = L Atilde(k)`` is analytic through ``k = 0`` and the bound
state condition collapses to the scalar equation

    F(eps, k) = k - (eps/2) <S(k) L[1]> = 0,    S(k) = (I + eps T0(k))^{-1}.

``Re k > 0`` at the root means an eigenvalue ``-k**2`` with eigenfunction
``A(k) S(k) L[1]``; otherwise there is none near the threshold.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import AtPole, NearSingular, NoConvergence, ShallowBoundError
from .grid import Grid, GridFunction, Probe, integrate, kernel_matrix
from .perturbation import PerturbationOp, apply, assemble, is_real, l_of_one

__all__ = [
    "AsymptoticCoeffs", "PoleResult", "Verdict", "Decision", "EigenPair",
    "kappa", "a_probe", "regularized_probe", "assemble_T0", "solve_S",
    "eval_F", "m_coeffs", "find_pole", "decide", "eigenpair",
    "apply_resolvent", "winding_number",
]

ROOT_TOL = 1e-13
MAX_ITER = 50
COND_LIMIT = 1e12
POLE_GUARD = 1e-10
ZERO_L1 = 1e-14

# Taylor coefficients of (1 - exp(-z))/z = sum_n (-z)^n/(n+1)!; 18 terms are
# below 1e-16 relative for |z| < 1/2.
_SERIES = np.array([(-1.0) ** n / math.factorial(n + 1) for n in range(18)])


def kappa(k, r):
    """Regularized free kernel ``(1 - exp(-k r)) / (2k)``, analytic in ``k``.

    Vectorized over ``r``; ``kappa(0, r) = r/2``.
    """
    k = complex(k)
    r = np.asarray(r, dtype=float)
    z = k * r
    out = np.empty(r.shape, dtype=complex)
    small = np.abs(z) < 0.5
    zs = z[small]
    acc = np.zeros(zs.shape, dtype=complex)
    for c in _SERIES[::-1]:
        acc = acc * zs + c
    out[small] = 0.5 * r[small] * acc
    big = ~small
    if big.any():
        out[big] = -np.expm1(-z[big]) / (2 * k)
    return out if out.ndim else complex(out)


def _k0_kernel(k):
    return lambda r, side: kappa(k, r)


def _k1_kernel(k):
    return lambda r, side: 0.5 * side * np.exp(-k * r)


def _green_kernel(k):
    return lambda r, side: -np.exp(-k * r) / (2 * k)


# -- probes --------------------------------------------------------------------

def a_probe(k, g: GridFunction) -> Probe:
    """``u = A(k) g`` with derivatives; ``u'' = k^2 u + g``."""
    k = complex(k)
    if k == 0:
        raise ValueError("A(k) has a pole at k = 0; use regularized_probe")
    grid = g.grid

    def value(x):
        return kernel_matrix(grid, x, _green_kernel(k)) @ g.values

    def d1(x):
        return kernel_matrix(grid, x, _k1_kernel(k)) @ g.values

    def d2(x):
        return k * k * value(x) + g(x)

    return Probe(value, d1, d2)


def regularized_probe(k, g: GridFunction) -> Probe:
    """``u = A(k) g + <g>/(2k)`` (well defined at ``k = 0``)."""
    k = complex(k)
    grid = g.grid
    mean = integrate(g)

    def value(x):
        return kernel_matrix(grid, x, _k0_kernel(k)) @ g.values

    def d1(x):
        return kernel_matrix(grid, x, _k1_kernel(k)) @ g.values

    def d2(x):
        return k * k * value(x) - 0.5 * k * mean + g(x)

    return Probe(value, d1, d2)


def assemble_T0(k, op: PerturbationOp, grid: Grid, mats=None) -> np.ndarray:
    """Nystrom matrix of ``T0(k) = L Atilde(k)`` on the nodes."""
    k = complex(k)
    if mats is None:
        mats = assemble(op, grid)
    x = grid.nodes
    K0 = kernel_matrix(grid, x, _k0_kernel(k))
    T = mats.M0 @ K0
    if np.any(mats.M1):
        T += mats.M1 @ kernel_matrix(grid, x, _k1_kernel(k))
    if np.any(mats.M2):
        K2 = k * k * K0 - 0.5 * k * np.outer(np.ones(grid.n), grid.weights)
        K2[np.diag_indices(grid.n)] += 1.0
        T += mats.M2 @ K2
    return T


class _Solver:
    """LU factorization of ``I + eps T0(k)`` with a condition check."""

    def __init__(self, k, eps, op, grid, mats=None):
        self.k, self.eps, self.grid = complex(k), float(eps), grid
        A = np.eye(grid.n, dtype=complex)
        if eps != 0:
            A += eps * assemble_T0(k, op, grid, mats)
        self.matrix = A
        self.lu = sla.lu_factor(A, check_finite=True)
        anorm = np.abs(A).sum(axis=0).max()
        rcond, info = sla.lapack.zgecon(self.lu[0], anorm, norm="1")
        self.condition = math.inf if rcond == 0 else 1.0 / rcond
        if not self.condition < COND_LIMIT:
            raise NearSingular(
                f"I + eps*T0(k) near singular (cond ~ {self.condition:.3g}) "
                f"at eps={eps}, k={k}", self.condition)

    def solve(self, rhs: GridFunction) -> GridFunction:
        return GridFunction(self.grid, sla.lu_solve(self.lu, rhs.values))


def solve_S(k, eps, op, grid, rhs: GridFunction) -> GridFunction:
    """``S(k) rhs = (I + eps T0(k))^{-1} rhs`` by dense LU."""
    if eps == 0:
        return rhs
    return _Solver(k, eps, op, grid).solve(rhs)


def _F(solver: _Solver, v: GridFunction):
    h = solver.solve(v)
    return solver.k - 0.5 * solver.eps * integrate(h), h


def eval_F(eps, k, op, grid, mats=None, v=None) -> complex:
    """Pole function ``k - (eps/2) <S(k) L[1]>``."""
    if v is None:
        v = l_of_one(op, grid)
    return _F(_Solver(k, eps, op, grid, mats), v)[0]


# -- asymptotics ------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticCoeffs:
    m1: complex
    m2: complex

    def expansion(self, eps) -> complex:
        """Two-term small-eps approximation of the root, O(eps^3) accurate.

        ``<S(0) L[1]> = m1 + (eps/2) m2 + O(eps^2)`` because
        ``T0(0) g = (1/2) L[int |x-t| g(t) dt]``; hence the factor 1/2.
        """
        return 0.5 * eps * (self.m1 + 0.5 * eps * self.m2)

    def unhalved_expansion(self, eps) -> complex:
        """``(eps/2)(m1 + eps m2)``, second term without the 1/2; only O(eps^2) accurate."""
        return 0.5 * eps * (self.m1 + eps * self.m2)


def m_coeffs(op: PerturbationOp, grid: Grid) -> AsymptoticCoeffs:
    """First two coefficients of the small-eps expansion of the root.

    ``m1 = <L[1]>`` and ``m2 = -<L[w]>`` with ``w(x) = int |x-y| L[1](y) dy``.
    """
    v = l_of_one(op, grid)
    m1 = integrate(v)

    def w(x):
        return 2.0 * (kernel_matrix(grid, x, _k0_kernel(0.0)) @ v.values)

    def dw(x):
        return 2.0 * (kernel_matrix(grid, x, _k1_kernel(0.0)) @ v.values)

    def d2w(x):
        return 2.0 * v(x)

    m2 = -integrate(apply(op, Probe(w, dw, d2w), grid))
    return AsymptoticCoeffs(complex(m1), complex(m2))


# -- root ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoleResult:
    k: complex
    converged: bool
    iterations: int
    residual: float
    seed: complex
    degenerate: bool = False  # seed uninformative (m1 = m2 = 0)


def find_pole(eps, op, grid, root_tol=ROOT_TOL, max_iter=MAX_ITER,
              coeffs: AsymptoticCoeffs | None = None) -> PoleResult:
    """Secant iteration on ``F(eps, .)`` from the two-term seed.

    Raises
    ------
    NoConvergence
        With ``best`` set to the best iterate seen.
    NearSingular
        If a linear solve along the way is ill conditioned.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    v = l_of_one(op, grid)
    if v.sup_norm() < ZERO_L1:
        return PoleResult(0j, True, 0, 0.0, 0j)
    if coeffs is None:
        coeffs = m_coeffs(op, grid)
    seed = coeffs.expansion(eps)
    mats = assemble(op, grid)

    def F(k):
        return _F(_Solver(k, eps, op, grid, mats), v)[0]

    if abs(coeffs.m1) < ZERO_L1 and abs(coeffs.m2) < ZERO_L1:
        return PoleResult(0j, False, 0, abs(F(0.0)), 0j, degenerate=True)

    def tol(k):
        return root_tol * max(1.0, abs(k))

    k0, k1 = seed, seed * (1 + 1e-6) + 1e-12
    f0, f1 = F(k0), F(k1)
    best = min(((abs(f0), k0), (abs(f1), k1)), key=lambda p: p[0])
    if abs(f0) <= tol(k0):
        return PoleResult(k0, True, 0, abs(f0), seed)
    for it in range(1, max_iter + 1):
        if abs(f1) <= tol(k1):
            return PoleResult(k1, True, it, abs(f1), seed)
        denom = f1 - f0
        if denom == 0:
            break
        k2 = k1 - f1 * (k1 - k0) / denom
        k0, f0 = k1, f1
        k1, f1 = k2, F(k2)
        if abs(f1) < best[0]:
            best = (abs(f1), k1)
    if abs(f1) <= tol(k1):
        return PoleResult(k1, True, max_iter, abs(f1), seed)
    raise NoConvergence(
        f"secant did not reach |F| <= {root_tol:g} in {max_iter} steps",
        PoleResult(best[1], False, max_iter, best[0], seed))


class Verdict(enum.Enum):
    EIGENVALUE = "Eigenvalue"
    NO_EIGENVALUE = "NoEigenvalue"
    MARGINAL = "Marginal"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    pole: PoleResult
    lam: complex | None
    is_real_certified: bool
    margin_tol: float = 0.0


def decide(eps, op, grid, root_tol=ROOT_TOL, pole: PoleResult | None = None,
           coeffs: AsymptoticCoeffs | None = None) -> Decision:
    """Existence verdict from the half-plane of the pole."""
    if pole is None:
        pole = find_pole(eps, op, grid, root_tol=root_tol, coeffs=coeffs)
    certified = is_real(op, grid) is True
    k = pole.k
    margin = 10 * root_tol * max(1.0, abs(k))
    zero_source = l_of_one(op, grid).sup_norm() < ZERO_L1
    if zero_source:
        return Decision(Verdict.NO_EIGENVALUE, pole, None, certified, margin)
    if pole.degenerate or abs(k.real) <= margin:
        return Decision(Verdict.MARGINAL, pole, None, certified, margin)
    if k.real < 0:
        return Decision(Verdict.NO_EIGENVALUE, pole, None, certified, margin)
    lam = -k * k
    if certified:
        if abs(k.imag) > 1e-10 * abs(k):
            raise ShallowBoundError(
                f"real operator produced a non-real pole k={k!r}")
        lam = complex(lam.real, 0.0)
    return Decision(Verdict.EIGENVALUE, pole, lam, certified, margin)


@dataclass(frozen=True, eq=False)
class EigenPair:
    lam: complex
    x: np.ndarray
    phi: np.ndarray
    decay_rate: complex

    def normalized(self) -> "EigenPair":
        """Copy scaled so the sample of largest modulus is real positive."""
        i = int(np.argmax(np.abs(self.phi)))
        c = self.phi[i]
        return EigenPair(self.lam, self.x, self.phi * (abs(c) / c), self.decay_rate)


def eigen_source(eps, k, op, grid) -> GridFunction:
    """``S(k) L[1]``, the density whose ``A(k)``-image is the eigenfunction."""
    return solve_S(k, eps, op, grid, l_of_one(op, grid))


def eigenpair(eps, pole: PoleResult, op, grid, output_x) -> EigenPair:
    """Eigenvalue ``-k^2`` and eigenfunction ``A(k) S(k) L[1]`` on ``output_x``."""
    k = complex(pole.k)
    if not k.real > 0:
        raise ValueError(f"no L2 eigenfunction for Re k = {k.real:g} <= 0")
    h = eigen_source(eps, k, op, grid)
    x = np.asarray(output_x, dtype=float)
    phi = a_probe(k, h).value_at(x)
    return EigenPair(-k * k, x, phi, k)


# -- resolvent ------------------------------------------------------------------------

def resolvent_density(eps, k, f: GridFunction, op, grid) -> GridFunction:
    """``g = P(k) f`` solving ``(I + eps T(k)) g = f``."""
    k = complex(k)
    if k == 0:
        raise ValueError("k = 0 is not allowed for the resolvent")
    solver = _Solver(k, eps, op, grid)
    F, SL = _F(solver, l_of_one(op, grid))
    denom = 2 * F
    if abs(denom) < POLE_GUARD:
        raise AtPole(f"|2k - eps<S L[1]>| = {abs(denom):.3g} at k={k}")
    Sf = solver.solve(f)
    return Sf + SL * (eps * integrate(Sf) / denom)


def apply_resolvent(eps, k, f: GridFunction, op, grid, output_x) -> np.ndarray:
    """Samples of ``u = A(k) P(k) f`` on ``output_x``.

    ``u`` solves ``u'' + eps L[u] = k^2 u + f``; for ``Re k > 0`` this is
    ``-(H - lambda)^{-1} f`` with ``lambda = -k^2``.
    """
    g = resolvent_density(eps, k, f, op, grid)
    return a_probe(k, g).value_at(np.asarray(output_x, dtype=float))


# -- diagnostics -----------------------------------------------------------------------

def winding_number(eps, op, grid, radius, center=0.0, points=16) -> int:
    """Zeros of ``F(eps, .)`` inside ``|k - center| = radius``.

    Discrete argument principle: sum of principal argument increments of
    ``F`` around ``points`` equally spaced contour nodes.
    """
    mats = assemble(op, grid)
    v = l_of_one(op, grid)
    ks = center + radius * np.exp(2j * np.pi * np.arange(points) / points)
    vals = np.array([eval_F(eps, k, op, grid, mats, v) for k in ks])
    steps = np.angle(np.roll(vals, -1) / vals)
    return int(round(steps.sum() / (2 * np.pi)))
