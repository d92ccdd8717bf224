"""Finite-difference spectral oracle for ``H = -(d^2/dx^2 + eps L)``.

This code path shares nothing with the pole engine except the operator
description.  ``H`` is discretized on a truncated line ``[-X, X]`` with
Dirichlet ends:

* a uniform *core* of step ``h`` covering ``Q`` plus a margin, aligned so
  that the endpoints of ``Q`` are nodes;
* outside the core the mesh follows ``x = c + sinh(beta (s - c))/beta``
  in a uniform coordinate ``s`` (``beta = 0`` keeps it uniform).  A shallow
  state decays on the scale ``1/Re k`` which can be 1e5 or more, and the
  stretched tail reaches it with a few thousand nodes.

The three-point Laplacian on the mapped mesh is written in the symmetric
form ``W^{1/2} H W^{-1/2}`` (``W`` = dual cell widths), so real potentials
give a real symmetric matrix.  Integral terms add a dense block on the
``Q`` rows, folded into shift-and-invert solves by a Woodbury correction
of the banded LU.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, eigsh

from .errors import ShallowBoundError
from .perturbation import (D1, D2, Multiply, PerturbationOp, RankOne, Volterra,
                           is_real, sample_coefficient)

__all__ = [
    "OracleConfig", "OracleMesh", "OracleHamiltonian", "OraclePair",
    "OracleSpectrum", "BandCheck", "ComparisonReport", "auto_config",
    "build_mesh", "build_hamiltonian", "bound_states_near_zero",
    "spectral_band_check", "compare", "extrapolated_state", "cross_check",
]

X_CAP = 2000.0


@dataclass(frozen=True)
class OracleConfig:
    """Discretization and search settings.

    ``step`` is the core mesh width, ``stretch`` the tail growth rate
    ``beta``, ``core_margin`` the uniform padding on each side of ``Q``
    (default ``|Q|``).
    """

    half_width: float
    step: float
    shift_seed: complex
    n_states: int = 6
    boundary: str = "dirichlet"
    stretch: float = 0.25
    core_margin: float | None = None
    mass_fraction: float = 0.99
    band_cut: float = 0.1

    def refined(self) -> "OracleConfig":
        return replace(self, step=self.step / 2)


def auto_config(op: PerturbationOp, k_expected, shift=None, *, step=None,
                **overrides) -> OracleConfig:
    """Size the box from the expected decay rate ``Re k``.

    ``X = 15 / Re k`` (``Re k`` floored at 0.05 when there is no state to
    resolve), capped at ``X_CAP``; core step ``|Q|/128`` by default.
    """
    k = complex(k_expected)
    rate = k.real if k.real > 0 else 0.05
    X = min(X_CAP, 15.0 / rate)
    Q = op.interval
    X = max(X, 2 * max(abs(Q.a), abs(Q.b)) + 3 * Q.length)
    if step is None:
        step = Q.length / 128
    if shift is None:
        shift = -k * k if k.real > 0 else -max(abs(k), 1e-2) ** 2
    return OracleConfig(half_width=X, step=step, shift_seed=complex(shift),
                        **overrides)


@dataclass(frozen=True, eq=False)
class OracleMesh:
    x: np.ndarray        # interior (unknown) nodes
    widths: np.ndarray   # dual cell widths W_i
    spacing: np.ndarray  # h_i = x_{i+1} - x_i, including both boundary gaps
    q_index: np.ndarray  # interior indices of nodes in closed Q
    chi: np.ndarray      # 1 inside Q, 1/2 at its endpoints (on q_index)
    h: float             # core step


def _tail(c, h, beta, X, direction):
    out = []
    j = 1
    while True:
        s = j * h
        d = s if beta == 0 else math.sinh(beta * s) / beta
        out.append(c + direction * d)
        if d >= X - abs(c) or abs(out[-1]) >= X:
            break
        j += 1
    return out


def build_mesh(op: PerturbationOp, config: OracleConfig) -> OracleMesh:
    Q = op.interval
    X = config.half_width
    if not (-X < Q.a and Q.b < X):
        raise ShallowBoundError(f"Q = [{Q.a}, {Q.b}] is not inside (-{X}, {X})")
    if config.boundary != "dirichlet":
        raise ValueError("only Dirichlet truncation is implemented")
    nq = max(1, math.ceil(Q.length / config.step - 1e-9))
    h = Q.length / nq
    margin = Q.length if config.core_margin is None else config.core_margin
    m = max(2, math.ceil(margin / h))
    core = Q.a + h * np.arange(-m, nq + m + 1)
    if core[0] <= -X or core[-1] >= X:
        raise ShallowBoundError("box half-width too small for the core mesh")
    right = _tail(core[-1], h, config.stretch, X, +1)
    left = _tail(core[0], h, config.stretch, X, -1)
    full = np.concatenate([left[::-1], core, right])
    spacing = np.diff(full)
    x = full[1:-1]
    widths = 0.5 * (spacing[:-1] + spacing[1:])
    first = len(left) - 1  # interior index of core[0]
    q_index = first + m + np.arange(nq + 1)
    chi = np.ones(nq + 1)
    chi[0] = chi[-1] = 0.5
    return OracleMesh(x, widths, spacing, q_index, chi, h)


class _BandedLU:
    """LAPACK ``?gbtrf`` factorization of a tridiagonal-plus-shift matrix."""

    def __init__(self, lower, diag, upper):
        n = diag.size
        dtype = np.result_type(lower, diag, upper)
        ab = np.zeros((4, n), dtype=dtype)  # kl=ku=1, plus kl rows of fill
        ab[1, 1:] = upper
        ab[2, :] = diag
        ab[3, :-1] = lower
        gbtrf, self._gbtrs = sla.get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
        self.lu, self.piv, info = gbtrf(ab, 1, 1)
        if info > 0:
            raise ShallowBoundError("shift hits an eigenvalue of the banded part")
        self.dtype = dtype

    def solve(self, b):
        b = np.asarray(b, dtype=np.result_type(self.dtype, b))
        x, info = self._gbtrs(self.lu, 1, 1, b, self.piv)
        return x


@dataclass(frozen=True, eq=False)
class OracleHamiltonian:
    """``H = band + U E U^T`` in the symmetrized basis.

    ``band`` is tridiagonal (``lower``, ``diag``, ``upper``); ``E`` acts on
    the ``Q`` rows/columns listed in ``block_index``.
    """

    mesh: OracleMesh
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    block: np.ndarray | None
    block_index: np.ndarray
    real_certified: bool

    @property
    def n(self):
        return self.diag.size

    def matvec(self, v):
        out = self.diag * v
        out[:-1] += self.upper * v[1:]
        out[1:] += self.lower * v[:-1]
        if self.block is not None:
            J = self.block_index
            out[J] += self.block @ v[J]
        return out

    def dense(self):
        A = np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)
        if self.block is not None:
            J = self.block_index
            A[np.ix_(J, J)] += self.block
        return A

    def shift_solver(self, sigma):
        """Return ``r -> (H - sigma I)^{-1} r`` (banded LU + Woodbury)."""
        lu = _BandedLU(self.lower, self.diag - sigma, self.upper)
        if self.block is None:
            return lu.solve
        J, E = self.block_index, self.block
        U = np.zeros((self.n, J.size), dtype=lu.dtype)
        U[J, np.arange(J.size)] = 1.0
        Z = lu.solve(U)
        cap = sla.lu_factor(np.eye(J.size) + E @ Z[J, :])

        def solve(r):
            y = lu.solve(r)
            return y - Z @ sla.lu_solve(cap, E @ y[J])

        return solve


def build_hamiltonian(op: PerturbationOp, eps, config: OracleConfig,
                      mesh: OracleMesh | None = None) -> OracleHamiltonian:
    """Assemble ``-(d^2 + eps L)`` on the oracle mesh."""
    if mesh is None:
        mesh = build_mesh(op, config)
    sp, W = mesh.spacing, mesh.widths
    diag = 2.0 / (sp[:-1] * sp[1:])
    off = -1.0 / (sp[1:-1] * np.sqrt(W[:-1] * W[1:]))
    lower, upper = off.astype(complex), off.astype(complex)
    diag = diag.astype(complex)

    I, chi, h = mesh.q_index, mesh.chi, mesh.h
    xq = mesh.x[I]
    scale = -eps * op.phase
    block = None
    for term in op.terms:
        c = chi * sample_coefficient(term.coef, xq)
        if isinstance(term, Multiply):
            diag[I] += scale * c
        elif isinstance(term, D1):
            upper[I] += scale * c / (2 * h)
            lower[I - 1] += -scale * c / (2 * h)
        elif isinstance(term, D2):
            upper[I] += scale * c / h**2
            lower[I - 1] += scale * c / h**2
            diag[I] += -2 * scale * c / h**2
        elif isinstance(term, (RankOne, Volterra)):
            rho_w = h * chi * sample_coefficient(term.coef, xq)
            if isinstance(term, RankOne):
                E = np.outer(chi, rho_w)
            else:
                m = I.size
                C = np.tril(np.ones((m, m)))
                C[np.arange(m), np.arange(m)] = 0.5
                C[:, 0] *= 0.5
                C[0, 0] = 0.0
                E = chi[:, None] * C * (rho_w / chi)[None, :]
            block = scale * E if block is None else block + scale * E
    certified = is_real(op) is True and eps == float(np.real(eps))
    if certified:
        lower, diag, upper = lower.real, diag.real, upper.real
    return OracleHamiltonian(mesh, lower, diag, upper, block, I, certified)


@dataclass(frozen=True, eq=False)
class OraclePair:
    lam: complex
    vector: np.ndarray   # samples of the eigenfunction (unsymmetrized)
    residual: float      # ||H v - lam v|| / ||v|| in the weighted norm
    mass_inside: float   # fraction of weighted mass in |x| <= X/2


@dataclass(frozen=True, eq=False)
class OracleSpectrum:
    pairs: list
    candidates: list
    x: np.ndarray
    weights: np.ndarray
    real_certified: bool
    metadata: dict = field(default_factory=dict)


def bound_states_near_zero(H: OracleHamiltonian, config: OracleConfig) -> OracleSpectrum:
    """Shift-and-invert search for localized eigenpairs near ``shift_seed``.

    Candidates come from ARPACK in shift-invert mode (``n_states`` nearest
    the shift).  Only those with more than ``mass_fraction`` of their mass
    in ``|x| <= X/2`` and ``|lambda| <= band_cut`` are kept; extended
    states of the truncated continuum fail the mass test.
    """
    mesh = H.mesh
    sigma = complex(config.shift_seed)
    symmetric = H.real_certified and sigma.imag == 0
    if symmetric:
        sigma = sigma.real
    solve = H.shift_solver(sigma)
    dtype = float if symmetric else complex
    n = H.n
    nev = min(config.n_states, n - 2)
    A = LinearOperator((n, n), matvec=H.matvec, dtype=dtype)
    OPinv = LinearOperator((n, n), matvec=solve, dtype=dtype)
    v0 = np.ones(n, dtype=dtype) / math.sqrt(n)
    meta = {"shift": complex(sigma), "n": n, "h": mesh.h,
            "half_width": config.half_width}
    try:
        if symmetric:
            vals, vecs = eigsh(A, k=nev, sigma=sigma, OPinv=OPinv, v0=v0,
                               which="LM", tol=0.0)
        else:
            vals, vecs = eigs(A, k=nev, sigma=sigma, OPinv=OPinv, v0=v0,
                              which="LM", tol=0.0)
    except ArpackNoConvergence as exc:
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        meta["arpack"] = "partial convergence"
    order = np.argsort(np.abs(vals - sigma), kind="stable")
    sw = np.sqrt(mesh.widths)
    inside = np.abs(mesh.x) <= config.half_width / 2
    candidates, kept = [], []
    for j in order:
        lam = complex(vals[j])
        v = vecs[:, j]
        res = np.linalg.norm(H.matvec(v) - lam * v) / np.linalg.norm(v)
        if res > 1e-8:
            lam, v, res = _refine(H, lam, v)
        mass = float(np.sum(np.abs(v[inside]) ** 2) / np.sum(np.abs(v) ** 2))
        pair = OraclePair(lam, v / sw, float(res), mass)
        candidates.append(pair)
        if mass > config.mass_fraction and abs(lam) <= config.band_cut:
            kept.append(pair)
    return OracleSpectrum(kept, candidates, mesh.x, mesh.widths,
                          H.real_certified, meta)


def _refine(H, lam, v, steps=3):
    """A few inverse-iteration steps at the current estimate."""
    for _ in range(steps):
        solve = H.shift_solver(lam * (1 + 1e-12) + 1e-300)
        w = solve(v)
        v = w / np.linalg.norm(w)
        lam = complex(np.vdot(v, H.matvec(v)) / np.vdot(v, v))
        res = np.linalg.norm(H.matvec(v) - lam * v)
        if res <= 1e-10:
            break
    return lam, v, res


@dataclass(frozen=True)
class BandCheck:
    passed: bool
    bound: float
    notes: str = ""


def spectral_band_check(spectrum: OracleSpectrum, eps, c_proxy, slack=0.5) -> BandCheck:
    """Check retained eigenvalues against the a-priori localization band.

    From ``||phi'||^2 - eps <conj(phi) L phi> = lambda`` for normalized
    ``phi``: ``Re lambda >= -eps C`` and ``|Im lambda| <= eps C``, and
    ``lambda`` real for real operators.  ``C`` is the computable proxy
    ``c_proxy``, inflated by ``1 + slack``.  The bound is stated in the
    lambda plane.
    """
    bound = eps * c_proxy * (1 + slack)
    fails = []
    for p in spectrum.pairs:
        lam = complex(p.lam)
        if spectrum.real_certified:
            if abs(lam.imag) > 1e-8:
                fails.append(f"non-real eigenvalue {lam}")
            if lam.real < -bound:
                fails.append(f"{lam.real:.3e} below -{bound:.3e}")
        else:
            if lam.real < -bound:
                fails.append(f"Re {lam.real:.3e} below -{bound:.3e}")
            if abs(lam.imag) > bound:
                fails.append(f"|Im| {abs(lam.imag):.3e} above {bound:.3e}")
    return BandCheck(not fails, bound, "; ".join(fails))


@dataclass(frozen=True)
class ComparisonReport:
    verdict_agreement: bool | None
    lambda_rel_error: float | None
    eigenfunction_correlation: float | None
    band_check: BandCheck | None
    oracle_lambda: complex | None = None
    notes: str = ""


def _resample(x_src, f, x_dst):
    re = np.interp(x_dst, x_src, f.real, left=0.0, right=0.0)
    im = np.interp(x_dst, x_src, f.imag, left=0.0, right=0.0)
    return re + 1j * im


def compare(decision, eigenpair, spectrum: OracleSpectrum, *, oracle_lambda=None,
            band_check: BandCheck | None = None) -> ComparisonReport:
    """Cross-check a pole-engine verdict against an oracle spectrum.

    ``oracle_lambda`` overrides the raw oracle eigenvalue (for example an
    h-extrapolated one) in the relative error.
    """
    from .pole import Verdict

    notes = []
    if decision.verdict is Verdict.MARGINAL:
        notes.append("marginal verdict: agreement indeterminate")
        return ComparisonReport(None, None, None, band_check, None, "; ".join(notes))
    predicted = decision.verdict is Verdict.EIGENVALUE
    found = bool(spectrum.pairs)
    agreement = predicted == found
    rel = corr = lam_o = None
    if predicted and found:
        best = min(spectrum.pairs, key=lambda p: abs(p.lam - decision.lam))
        lam_o = best.lam if oracle_lambda is None else complex(oracle_lambda)
        rel = abs(decision.lam - lam_o) / abs(lam_o)
        if eigenpair is not None:
            phi = eigenpair.phi
            if phi.shape != spectrum.x.shape or not np.array_equal(eigenpair.x, spectrum.x):
                phi = _resample(eigenpair.x, phi, spectrum.x)
            W = spectrum.weights
            v = best.vector
            num = abs(np.sum(W * np.conj(phi) * v))
            den = math.sqrt(np.sum(W * abs(phi) ** 2) * np.sum(W * abs(v) ** 2))
            corr = num / den
    if len(spectrum.pairs) > 1:
        notes.append(f"{len(spectrum.pairs)} localized states retained")
    if not agreement:
        notes.append("verdicts disagree")
    notes.append("band check evaluated in the lambda plane")
    return ComparisonReport(agreement, rel, corr, band_check, lam_o, "; ".join(notes))


def extrapolated_state(op, eps, config: OracleConfig):
    """Oracle at steps ``h`` and ``h/2``; Richardson-extrapolate the state
    nearest the shift.

    Returns ``(coarse, fine, lam_extrapolated)``; the last is ``None``
    when either level retains no state.
    """
    coarse = bound_states_near_zero(build_hamiltonian(op, eps, config), config)
    fine_cfg = config.refined()
    fine = bound_states_near_zero(build_hamiltonian(op, eps, fine_cfg), fine_cfg)
    if not coarse.pairs or not fine.pairs:
        return coarse, fine, None
    sigma = config.shift_seed
    lc = min(coarse.pairs, key=lambda p: abs(p.lam - sigma)).lam
    lf = min(fine.pairs, key=lambda p: abs(p.lam - sigma)).lam
    return coarse, fine, (4 * lf - lc) / 3


def cross_check(op, eps, decision, grid, *, config: OracleConfig | None = None,
                extrapolate=True):
    """Run the oracle for ``decision`` and compare.

    Returns ``(report, spectrum)`` where ``spectrum`` is the finest level.
    """
    from .perturbation import norm_proxy
    from .pole import Verdict, eigenpair as make_eigenpair

    if config is None:
        config = auto_config(op, decision.pole.k)
    if extrapolate:
        _, spectrum, lam_x = extrapolated_state(op, eps, config)
    else:
        spectrum = bound_states_near_zero(build_hamiltonian(op, eps, config), config)
        lam_x = None
    band = spectral_band_check(spectrum, eps, norm_proxy(op, grid))
    ep = None
    if decision.verdict is Verdict.EIGENVALUE and spectrum.pairs:
        ep = make_eigenpair(eps, decision.pole, op, grid, spectrum.x)
    report = compare(decision, ep, spectrum, oracle_lambda=lam_x, band_check=band)
    return report, spectrum
