import math

import numpy as np
import pytest

from shallowbound import pole as P
from shallowbound.errors import AtPole, NearSingular, NoConvergence
from shallowbound.expr import parse_expr
from shallowbound.grid import build_grid, cumulative_integral, integrate, kernel_matrix
from shallowbound.perturbation import (D1, D2, Multiply, PerturbationOp, RankOne,
                                       Volterra, apply, l_of_one, phase_exp_inv)
from shallowbound.pole import (Verdict, a_probe, apply_resolvent, assemble_T0, decide,
                               eigenpair, eval_F, find_pole, kappa, m_coeffs,
                               regularized_probe, resolvent_density, solve_S,
                               winding_number)

BUMP = parse_expr("bump(0, 1)")


def mixed_op(Q):
    return PerturbationOp(Q, (
        Multiply(parse_expr("(1+0.5i)*bump(0.1, 0.8)")),
        D1(parse_expr("0.3*bump(-0.2, 0.5)")),
        D2(parse_expr("0.2*bump(0, 0.6)")),
        RankOne(parse_expr("bump(0.3, 0.4)")),
        Volterra(parse_expr("-0.5i*bump(0, 0.7)")),
    ))


# -- kappa -------------------------------------------------------------------------

def test_kappa_values():
    assert kappa(1.3 - 0.2j, 0.0) == 0
    r = np.array([0.0, 0.5, 2.0, 7.0])
    np.testing.assert_allclose(kappa(0.0, r), r / 2, rtol=1e-16)
    assert abs(kappa(1.0, 1.0) - 0.316060279) < 1e-9
    assert abs(kappa(1.0, 1.0) - (1 - math.exp(-1)) / 2) < 1e-16


def test_kappa_matches_high_precision():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    for k in (1e-9, 0.3 + 0.4j, -0.2 + 1j, 2.0, 1e-3j):
        for r in (1e-6, 0.1, 0.49, 0.51, 1.0, 3.0):
            kk = mpmath.mpc(k)
            exact = complex(-mpmath.expm1(-kk * r) / (2 * kk))
            got = complex(kappa(k, r))
            assert abs(got - exact) <= 4e-16 * abs(exact)


def test_kappa_continuous_at_switch():
    k = 0.5
    lo, hi = kappa(k, 1 - 1e-12), kappa(k, 1 + 1e-12)
    assert abs(hi - lo) < 1e-12


# -- probes -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def g_smooth(grid128):
    return grid128.sample(lambda x: np.cos(x) + 0.3j * x)


def test_a_probe_satisfies_ode(grid128, g_smooth):
    k = 0.7 + 0.2j
    u = a_probe(k, g_smooth)
    x = grid128.nodes[10:-10:7]
    h = 1e-3
    fd = (u.value_at(x + h) - 2 * u.value_at(x) + u.value_at(x - h)) / h**2
    np.testing.assert_allclose(fd - k * k * u.value_at(x), g_smooth.values[10:-10:7], atol=2e-6)
    np.testing.assert_allclose(u.d2_at(x) - k * k * u.value_at(x), g_smooth.values[10:-10:7], atol=1e-15)


def test_a_probe_sign_and_zero_rejected(grid128):
    g = grid128.sample(lambda x: 1 + x**2)
    u = a_probe(0.8, g)
    assert np.all(u.value_at(np.linspace(-5, 5, 101)).real < 0)
    with pytest.raises(ValueError):
        a_probe(0.0, g)


def test_a_probe_far_field(grid128, g_smooth):
    k = 0.9 + 0.1j
    u = a_probe(k, g_smooth)
    for x in (20.0, -20.0):
        s = 1 if x > 0 else -1
        moment = integrate(grid128.function(g_smooth.values * np.exp(s * k * grid128.nodes)))
        pred = -np.exp(-k * abs(x)) / (2 * k) * moment
        assert abs(u.value_at(np.array([x]))[0] - pred) <= 1e-12 * abs(pred)


def test_regularized_probe_identities(grid128, g_smooth):
    k = 0.4 - 0.3j
    reg, plain = regularized_probe(k, g_smooth), a_probe(k, g_smooth)
    x = np.linspace(-3, 3, 41)
    shift = integrate(g_smooth) / (2 * k)
    np.testing.assert_allclose(reg.value_at(x), plain.value_at(x) + shift, atol=1e-12)
    np.testing.assert_allclose(reg.d1_at(x), plain.d1_at(x), atol=1e-14)
    zero_mean = grid128.sample(np.sin)
    np.testing.assert_allclose(regularized_probe(k, zero_mean).value_at(x),
                               a_probe(k, zero_mean).value_at(x), atol=1e-12)


def test_regularized_probe_at_zero(grid128, g_smooth):
    r0 = regularized_probe(0.0, g_smooth)
    x = np.array([-2.0, -0.3, 0.0, 0.55, 4.0])
    K = kernel_matrix(grid128, x, lambda r, side: r)
    np.testing.assert_allclose(r0.value_at(x), 0.5 * K @ g_smooth.values, rtol=1e-14)
    np.testing.assert_allclose(r0.d2_at(x), g_smooth(x), atol=1e-15)


# -- T0 and S ------------------------------------------------------------------------

def test_T0_matches_direct_apply(grid128, unit_q, g_smooth):
    op = mixed_op(unit_q)
    for k in (0.0, 0.3 + 0.1j, 1.5):
        T = assemble_T0(k, op, grid128)
        direct = apply(op, regularized_probe(k, g_smooth), grid128).values
        assert np.max(np.abs(T @ g_smooth.values - direct)) <= 1e-10 * np.max(np.abs(direct))


def test_T0_multiply_rows(grid128, bump_op):
    k = 0.2 + 0.1j
    T = assemble_T0(k, bump_op, grid128)
    K0 = kernel_matrix(grid128, grid128.nodes, lambda r, side: kappa(k, r))
    np.testing.assert_allclose(T, BUMP(grid128.nodes)[:, None] * K0, atol=1e-15)


def test_T0_continuous_at_zero(grid128, unit_q):
    op = mixed_op(unit_q)
    d = np.abs(assemble_T0(0.0, op, grid128) - assemble_T0(1e-8, op, grid128)).max()
    assert d < 1e-7


def test_solve_S(grid128, unit_q, rng):
    op = mixed_op(unit_q)
    rhs = grid128.function(rng.normal(size=grid128.n) + 1j * rng.normal(size=grid128.n))
    k = 0.3 + 0.2j
    assert solve_S(k, 0.0, op, grid128, rhs) is rhs
    T = assemble_T0(k, op, grid128)
    for eps in (0.01, 0.005):
        x = solve_S(k, eps, op, grid128, rhs).values
        resid = x + eps * T @ x - rhs.values
        assert np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(rhs.values)
    e1 = np.linalg.norm(solve_S(k, 0.01, op, grid128, rhs).values - rhs.values + 0.01 * T @ rhs.values)
    e2 = np.linalg.norm(solve_S(k, 0.005, op, grid128, rhs).values - rhs.values + 0.005 * T @ rhs.values)
    assert 3.5 < e1 / e2 < 4.5


def test_solve_S_near_singular(grid128, bump_op, monkeypatch):
    monkeypatch.setattr(P, "COND_LIMIT", 1.0)
    with pytest.raises(NearSingular) as info:
        solve_S(0.1, 0.05, bump_op, grid128, grid128.sample(1.0))
    assert info.value.condition >= 1.0


# -- pole function ----------------------------------------------------------------------

def test_F_for_zero_source(grid128, unit_q):
    op = PerturbationOp(unit_q, (D2(BUMP), D1(BUMP)))
    for k in (0.0, 0.5 + 0.5j, -0.3):
        assert eval_F(0.1, k, op, grid128) == k


def test_F_at_zero_neumann(grid128, bump_op):
    m1 = integrate(l_of_one(bump_op, grid128))
    errs = [abs(eval_F(eps, 0.0, bump_op, grid128) + 0.5 * eps * m1) for eps in (0.02, 0.01)]
    assert errs[1] < 1e-4 and 3.5 < errs[0] / errs[1] < 4.5


def test_F_conjugate_symmetry(grid128, bump_op):
    for k in (0.1 + 0.2j, -0.3 + 0.05j, 0.7 - 0.4j):
        a = eval_F(0.05, k, bump_op, grid128)
        b = eval_F(0.05, np.conj(k), bump_op, grid128)
        assert abs(a - np.conj(b)) <= 1e-15 * max(1, abs(a))


@pytest.mark.parametrize("k0", [0.025, 0.2 + 0.1j, -0.1j])
def test_F_analyticity_proxy(grid128, bump_op, k0):
    def second_diff(h):
        return abs(eval_F(0.05, k0 + h, bump_op, grid128) + eval_F(0.05, k0 - h, bump_op, grid128)
                   - 2 * eval_F(0.05, k0, bump_op, grid128))
    for direction in (1, 1j):
        d1, d2 = second_diff(0.02 * direction), second_diff(0.01 * direction)
        assert 3.5 < d1 / d2 < 4.5


# -- asymptotic coefficients -------------------------------------------------------------------

def test_m_coeffs_complex_zero_mean(grid128, unit_q):
    op = PerturbationOp(unit_q, (Multiply(parse_expr("(1+2i)*dbump(0, 1)")),))
    c = m_coeffs(op, grid128)
    u2 = integrate(grid128.sample(lambda x: BUMP(x) ** 2))
    assert abs(c.m1) < 1e-12
    assert abs(c.m2.real + 6 * u2) <= 1e-6 * abs(6 * u2)


@pytest.mark.parametrize("text", ["sin(pi*x)", "x*(1-x^2)^2", "x*bump(0,1)"])
def test_m2_zero_mean_real(grid128, unit_q, text):
    V = parse_expr(text)
    op = PerturbationOp(unit_q, (Multiply(V),))
    c = m_coeffs(op, grid128)
    W = cumulative_integral(grid128.sample(V))
    target = 2 * integrate(grid128.function(W.values**2))
    assert abs(c.m1) < 1e-14
    assert abs(c.m2 - target) <= 1e-8 * abs(target)
    assert c.m2.imag == 0


def test_m_coeffs_real_op_are_real(grid128, bump_op):
    c = m_coeffs(bump_op, grid128)
    assert abs(c.m1.imag) < 1e-10 and abs(c.m2.imag) < 1e-10
    assert abs(c.m1 - 1) < 1e-10


def test_expansion_forms():
    c = P.AsymptoticCoeffs(2.0, 3.0)
    assert c.expansion(0.1) == pytest.approx(0.05 * (2 + 0.05 * 3))
    assert c.unhalved_expansion(0.1) == pytest.approx(0.05 * (2 + 0.1 * 3))


# -- pole and verdict ------------------------------------------------------------------------

def test_pole_zero_source(grid128, unit_q):
    op = PerturbationOp(unit_q, (D2(parse_expr("bump(0,0.8)")), D1(parse_expr("bump(0.2,0.6)"))))
    p = find_pole(0.1, op, grid128)
    assert p.k == 0 and p.converged and p.iterations == 0
    d = decide(0.1, op, grid128)
    assert d.verdict is Verdict.NO_EIGENVALUE and d.lam is None


def test_pole_bump(grid128, bump_op):
    p = find_pole(0.05, bump_op, grid128)
    assert p.converged and p.residual <= 1e-13 * max(1, abs(p.k))
    assert abs(p.k - 0.025) < 0.05**2
    assert abs(eval_F(0.05, p.k, bump_op, grid128)) <= 1e-13


def test_pole_rejects_nonpositive_eps(grid128, bump_op):
    with pytest.raises(ValueError):
        find_pole(0.0, bump_op, grid128)


def test_no_convergence_reports_best(grid128, bump_op):
    with pytest.raises(NoConvergence) as info:
        find_pole(0.05, bump_op, grid128, root_tol=1e-30, max_iter=1)
    best = info.value.best
    assert best is not None and not best.converged and abs(best.k - 0.0247) < 1e-3


def test_decide_negative_mean(grid128, unit_q):
    op = PerturbationOp(unit_q, (Multiply(parse_expr("-bump(0,1)")),))
    d = decide(0.05, op, grid128)
    assert d.verdict is Verdict.NO_EIGENVALUE and d.pole.k.real < 0


def test_decide_oscillating_phase(grid128, bump_op):
    for n in (3, 4):
        eps = 1 / (2 * math.pi * n)
        op = bump_op.with_phase(phase_exp_inv(eps))
        d = decide(eps, op, grid128)
        assert d.verdict is Verdict.EIGENVALUE and not d.is_real_certified
        ref = -((eps * math.cos(1 / eps)) ** 2) / 4
        assert abs(d.lam - ref) <= 0.1 * abs(ref)


def test_decide_complex_zero_mean(grid128, unit_q):
    op = PerturbationOp(unit_q, (Multiply(parse_expr("(1+2i)*dbump(0, 1)")),))
    assert decide(0.1, op, grid128).verdict is Verdict.NO_EIGENVALUE


def test_lambda_is_minus_k_squared_exactly(grid128, bump_op, unit_q):
    d = decide(0.05, bump_op, grid128)
    assert d.is_real_certified and d.lam.imag == 0
    assert d.lam == -(d.pole.k * d.pole.k)
    op = mixed_op(unit_q)
    d2 = decide(0.05, op, grid128)
    if d2.verdict is Verdict.EIGENVALUE:
        assert d2.lam == -(d2.pole.k * d2.pole.k)


def test_marginal_for_degenerate_and_tiny(grid128, bump_op):
    d = decide(0.05, bump_op, grid128, root_tol=1.0)
    assert d.verdict is Verdict.MARGINAL and d.lam is None
    degenerate = P.PoleResult(0j, False, 0, 0.0, 0j, degenerate=True)
    assert decide(0.05, bump_op, grid128, pole=degenerate).verdict is Verdict.MARGINAL


def test_conjugate_symmetry_gives_real_pole(grid128, bump_op):
    for eps in (0.1, 0.05, 0.02):
        k = find_pole(eps, bump_op, grid128).k
        assert abs(k.imag) <= 1e-10 * max(1, abs(k))


def test_winding_number_one(grid128, bump_op, unit_q):
    for eps, op in ((0.05, bump_op), (0.02, mixed_op(unit_q))):
        p = find_pole(eps, op, grid128)
        assert winding_number(eps, op, grid128, 4 * abs(p.seed) + eps) == 1


def test_grid_refinement_fourth_order(unit_q):
    op = PerturbationOp(unit_q, (Multiply(parse_expr("exp(x)*bump(0.1,0.9)")),))
    ks = [find_pole(0.1, op, build_grid(unit_q, n)).k for n in (32, 64, 128, 256)]
    d = [abs(ks[i] - ks[i + 1]) for i in range(3)]
    assert d[2] < 1e-9
    assert d[0] / d[1] > 10 and d[1] / d[2] > 10


# -- eigenpair -------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def bump_pair(grid128, bump_op):
    d = decide(0.05, bump_op, grid128)
    x = np.arange(-3.0, 3.0 + 5e-4, 1e-3)
    return d, eigenpair(0.05, d.pole, bump_op, grid128, x)


def test_eigenpair_lambda_and_shape(bump_pair):
    d, ep = bump_pair
    assert ep.lam == -(d.pole.k ** 2) and ep.decay_rate == d.pole.k
    assert np.linalg.norm(ep.phi) > 0


def test_eigenpair_tail_slope(grid128, bump_op):
    d = decide(0.05, bump_op, grid128)
    k = d.pole.k.real
    x = np.linspace(5.0, 10 / k, 200)
    phi = eigenpair(0.05, d.pole, bump_op, grid128, x).phi
    slope = np.polyfit(x, np.log(np.abs(phi)), 1)[0]
    assert abs(slope + k) <= 0.01 * k


def test_eigenpair_fd_residual(bump_pair):
    d, ep = bump_pair
    h = ep.x[1] - ep.x[0]
    phi = ep.phi
    d2 = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h**2
    res = -d2 - 0.05 * BUMP(ep.x[1:-1]) * phi[1:-1] - ep.lam * phi[1:-1]
    assert np.linalg.norm(res) / np.linalg.norm(phi[1:-1]) <= 1e-6


def test_eigenpair_even_for_symmetric_setup(bump_pair):
    _, ep = bump_pair
    np.testing.assert_allclose(ep.phi, ep.phi[::-1], atol=1e-10 * np.abs(ep.phi).max())


def test_eigenpair_rejects_decaying_pole(grid128, bump_op):
    with pytest.raises(ValueError):
        eigenpair(0.05, P.PoleResult(-0.01 + 0j, True, 1, 0.0, 0j), bump_op, grid128, [0.0])


def test_normalized_phase():
    ep = P.EigenPair(-1.0, np.array([0.0, 1.0]), np.array([1j, -2j]), 1.0)
    n = ep.normalized()
    assert n.phi[1] == 2 and abs(n.phi[0] + 1) < 1e-16


# -- resolvent ----------------------------------------------------------------------------------

def test_resolvent_free_case(grid128, bump_op):
    f = grid128.sample(lambda x: np.exp(-x**2))
    k = 0.8 + 0.1j
    x = np.linspace(-0.9, 0.9, 9)
    u = apply_resolvent(0.0, k, f, bump_op, grid128, x)
    g = resolvent_density(0.0, k, f, bump_op, grid128)
    np.testing.assert_allclose(g.values, f.values)
    def fd(h):
        return (apply_resolvent(0.0, k, f, bump_op, grid128, x + h) - 2 * u
                + apply_resolvent(0.0, k, f, bump_op, grid128, x - h)) / h**2

    d2 = (4 * fd(0.01) - fd(0.02)) / 3
    np.testing.assert_allclose(d2 - k * k * u, f(x), atol=1e-6)


def test_resolvent_residual(grid128, unit_q, rng):
    op = mixed_op(unit_q)
    eps, k = 0.01, 1 + 0.3j
    for _ in range(3):
        f = grid128.function(rng.normal(size=grid128.n) + 1j * rng.normal(size=grid128.n))
        g = resolvent_density(eps, k, f, op, grid128)
        u = a_probe(k, g)
        nodes = grid128.nodes
        res = (u.d2_at(nodes) + eps * apply(op, u, grid128).values
               - k * k * u.value_at(nodes) - f.values)
        assert np.linalg.norm(res[1:-1]) <= 1e-8 * np.linalg.norm(f.values)


def test_resolvent_pole_factor(grid128, bump_op):
    eps = 0.05
    d = decide(eps, bump_op, grid128)
    x = np.linspace(-20, 20, 401)
    f = grid128.sample(lambda t: 1 + t)
    assert abs(integrate(f)) > 0
    delta = 1e-6
    u = apply_resolvent(eps, d.pole.k + delta, f, bump_op, grid128, x) * delta
    phi = eigenpair(eps, d.pole, bump_op, grid128, x).phi
    corr = abs(np.vdot(phi, u)) / (np.linalg.norm(phi) * np.linalg.norm(u))
    assert corr >= 0.999
    with pytest.raises(AtPole):
        apply_resolvent(eps, d.pole.k, f, bump_op, grid128, x)
    with pytest.raises(ValueError):
        apply_resolvent(eps, 0.0, f, bump_op, grid128, x)
