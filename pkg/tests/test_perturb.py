import numpy as np
import pytest

from adelim import models, perturb, tcl
from adelim.errors import (
    DegenerateDenominator,
    NonzeroSurvivingEigenvalue,
    SingularFastBlock,
)
from adelim.liouvillian import devectorize, vectorize
from adelim.spectral import analyze
from conftest import random_density


@pytest.fixture(scope="module")
def three_level_basis_op(three_level_sys):
    return perturb.eigenbasis_op(three_level_sys, analyze(three_level_sys.L0))


def two_point_slope(xs, ys):
    return np.polyfit(np.log(xs), np.log(ys), 1)[0]


def test_eigenbasis_round_trip(three_level_sys, three_level_basis_op):
    back = three_level_basis_op.to_physical(three_level_basis_op.B)
    assert np.linalg.norm(back - three_level_sys.L1) < 1e-10


def test_orders_zero_perturbation(three_level_sys):
    sys0 = models.three_level(models.three_level_reference(0.0))
    basis = perturb.eigenbasis_op(sys0, analyze(sys0.L0))
    series = perturb.p_orders_asymptotic(basis, max_order=3)
    for term in series.terms[1:]:
        assert np.linalg.norm(term) < 1e-12


def test_asymptotic_series_scaling(three_level_sys, three_level_basis_op):
    # truncation at order n leaves an eps^{n+1} residual
    eps_values = np.array([0.02, 0.04, 0.08])
    series = perturb.p_orders_asymptotic(three_level_basis_op, max_order=3)
    for order, expected in ((1, 2.0), (2, 3.0), (3, 4.0)):
        resid = []
        for eps in eps_values:
            sys = models.three_level(models.three_level_reference(eps))
            ctx = tcl.build_context(sys)
            exact = tcl.p_inv_asymptotic(ctx)
            resid.append(np.linalg.norm(exact - series.evaluate(eps, order)))
        slope = two_point_slope(eps_values, resid)
        assert abs(slope - expected) < 0.3


def test_rabi_first_order_analytic(rng, rabi_params_small, rabi_sys_small):
    # eps P_1(t) rho = -i g |1><0| (x) sigma_gamma(t) rho_B + h.c. on manifold
    # states (image in the fast modes, coefficients c_pm(t))
    p = rabi_params_small
    basis = perturb.eigenbasis_op(rabi_sys_small, analyze(rabi_sys_small.L0))
    rho_B = random_density(rng, 2)
    steady = np.zeros((p.n_tr, p.n_tr), dtype=complex)
    steady[0, 0] = 1.0
    v = vectorize(np.kron(steady, rho_B))
    ten = np.zeros((p.n_tr, p.n_tr), dtype=complex)
    ten[1, 0] = 1.0  # |1><0| on the oscillator
    for t in (0.8, np.inf):
        if np.isinf(t):
            series = perturb.p_orders_asymptotic(basis, max_order=1)
            cp, cm = 1.0 / p.gamma_plus, 1.0 / p.gamma_minus
        else:
            series = perturb.p_orders_timedep(basis, t, max_order=1)
            cp = (1.0 - np.exp(-p.gamma_plus * t)) / p.gamma_plus
            cm = (1.0 - np.exp(-p.gamma_minus * t)) / p.gamma_minus
        sigma_gamma = cm * models.SIGMA_MINUS + cp * models.SIGMA_PLUS
        block = -1j * p.g * np.kron(ten, sigma_gamma @ rho_B)
        want = block + block.conj().T
        got = devectorize(p.g * (series.terms[1] @ v), 2 * p.n_tr)
        assert np.linalg.norm(got - want) < 1e-10


def test_timedep_vanishes_at_zero(three_level_basis_op):
    series = perturb.p_orders_timedep(three_level_basis_op, 0.0, max_order=2)
    assert np.linalg.norm(series.terms[1]) < 1e-12
    assert np.linalg.norm(series.terms[2]) < 1e-12


def test_timedep_reaches_asymptotic(three_level_basis_op):
    t = 50.0 / three_level_basis_op.gap
    td = perturb.p_orders_timedep(three_level_basis_op, t, max_order=2)
    asym = perturb.p_orders_asymptotic(three_level_basis_op, max_order=2)
    for n in (1, 2):
        assert np.linalg.norm(td.terms[n] - asym.terms[n]) < 1e-9


def simpson_sigma2(sys, spec, t, n_outer=160, n_inner=160):
    """2-D Simpson quadrature of the second-order double integral."""
    P = spec.eig.right[:, spec.surviving] @ spec.eig.left_dag[spec.surviving, :]
    Q = np.eye(P.shape[0]) - P
    L0, L1 = sys.L0, sys.L1

    def e0(tau):
        return (spec.eig.right * np.exp(spec.eig.values * tau)) @ spec.eig.left_dag

    def integrand_outer(t1):
        taus = np.linspace(0.0, t1, 2 * n_inner + 1)
        h = taus[1] - taus[0] if t1 > 0 else 0.0
        w = np.ones(taus.size)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        acc = np.zeros_like(L0)
        if t1 == 0.0:
            return acc
        for wi, t2 in zip(w, taus):
            term1 = e0(t1 - t2) @ Q @ L1 @ e0(t2) @ Q @ L1 @ P @ e0(-t1)
            term2 = e0(t1) @ Q @ L1 @ P @ e0(-t2) @ L1 @ e0(t2 - t1)
            acc = acc + wi * (term1 - term2)
        return acc * (h / 3.0)

    t1s = np.linspace(0.0, t, 2 * n_outer + 1)
    H = t1s[1] - t1s[0]
    W = np.ones(t1s.size)
    W[1:-1:2], W[2:-1:2] = 4.0, 2.0
    out = np.zeros_like(L0)
    for Wi, t1 in zip(W, t1s):
        out = out + Wi * integrand_outer(t1)
    return out * (H / 3.0)


def test_timedep_second_order_vs_quadrature(three_level_sys, three_level_basis_op):
    t = 2.0
    spec = analyze(three_level_sys.L0)
    want = simpson_sigma2(three_level_sys, spec, t) @ (
        spec.eig.right[:, spec.surviving] @ spec.eig.left_dag[spec.surviving, :])
    got = perturb.p_orders_timedep(three_level_basis_op, t, max_order=2).terms[2]
    assert np.linalg.norm(got - want) < 1e-6


def test_order_terms_structure(three_level_basis_op, rng):
    # every correction annihilates against P_inv from the left and preserves
    # Hermiticity of states
    P_inv = three_level_basis_op.to_physical(
        np.diag(np.isin(np.arange(9), three_level_basis_op.surviving).astype(complex)))
    rho = random_density(rng, 3)
    v = vectorize(rho)
    asym = perturb.p_orders_asymptotic(three_level_basis_op, max_order=3)
    td = perturb.p_orders_timedep(three_level_basis_op, 1.3, max_order=2)
    for series in (asym, td):
        for n, term in enumerate(series.terms):
            if n >= 1:
                assert np.linalg.norm(P_inv @ term) < 1e-10
            out = devectorize(term @ v, 3)
            assert np.linalg.norm(out - out.conj().T) < 1e-10


def test_degenerate_denominator_guard():
    lam = np.array([0.0, -1e-15 - 1.0j, -1.0j])  # fast mode on top of surviving
    basis = perturb.EigenbasisOp(
        lam=lam, B=np.zeros((3, 3), dtype=complex),
        surviving=np.array([0, 2]), fast=np.array([1]), gap=1.0, eps=0.1,
        tol_s=1e-9, right=np.eye(3, dtype=complex), left_dag=np.eye(3, dtype=complex))
    with pytest.raises(DegenerateDenominator):
        perturb.p_orders_asymptotic(basis, max_order=1)


def test_geometric_recursion_requires_zero_modes(three_level_basis_op):
    with pytest.raises(NonzeroSurvivingEigenvalue):
        perturb.geometric_recursion(three_level_basis_op, 2)


def test_geometric_recursion_base_and_gauge():
    p = models.rabi_reference(g=0.05, n_tr=5, omega_eg=0.0)
    sys = models.rabi(p)
    spec = analyze(sys.L0)
    basis = perturb.eigenbasis_op(sys, spec)
    K_terms, F_terms = perturb.geometric_recursion(basis, 3)
    chi_L = spec.eig.left_dag[spec.surviving, :]
    chi_R = spec.eig.right[:, spec.surviving]
    assert np.linalg.norm(K_terms[0] - chi_R) < 1e-12
    assert np.linalg.norm(F_terms[0]) == 0.0
    for n in (1, 2, 3):
        assert np.linalg.norm(chi_L @ K_terms[n]) < 1e-10


def test_geometric_recursion_matches_exact():
    # order-2 series approaches the exact maps with >= g^3 scaling (K side;
    # the reduced generator for this model terminates at g^2)
    gs = np.array([0.02, 0.04, 0.08])
    dK, dF = [], []
    for g in gs:
        p = models.rabi_reference(g=g, n_tr=5, omega_eg=0.0)
        sys = models.rabi(p)
        spec = analyze(sys.L0)
        basis = perturb.eigenbasis_op(sys, spec)
        K_terms, F_terms = perturb.geometric_recursion(basis, 2)
        ctx = tcl.build_context(sys)
        red = tcl.reduce(ctx)
        K2 = sum(g ** n * K_terms[n] for n in range(3))
        F2 = sum(g ** n * F_terms[n] for n in range(3))
        dK.append(np.linalg.norm(red.K - K2))
        dF.append(np.linalg.norm(red.F - F2))
    slope_K = two_point_slope(gs, dK)
    assert slope_K >= 3.0 - 0.3
    assert max(dF) < 1e-10  # generator series terminates at second order here


def test_laplace_eps_zero(three_level_sys):
    sys0 = models.three_level(models.three_level_reference(0.0))
    spec = analyze(sys0.L0)
    basis = perturb.eigenbasis_op(sys0, spec)
    gen = perturb.laplace_generator(basis)
    lam_s = spec.eig.values[spec.surviving]
    assert np.linalg.norm(gen - np.diag(lam_s)) < 1e-12


def test_laplace_singular_fast_block():
    lam = np.array([0.0, -1e-14, -1.0])
    basis = perturb.EigenbasisOp(
        lam=lam, B=np.zeros((3, 3), dtype=complex),
        surviving=np.array([0]), fast=np.array([1, 2]), gap=1.0, eps=0.0,
        tol_s=1e-16, right=np.eye(3, dtype=complex), left_dag=np.eye(3, dtype=complex))
    with pytest.raises(SingularFastBlock):
        perturb.laplace_generator(basis)


def test_laplace_three_level_second_order_mismatch(three_level_basis_op):
    gs = np.array([0.02, 0.04, 0.08])
    diffs = []
    for g in gs:
        sys = models.three_level(models.three_level_reference(g))
        ctx = tcl.build_context(sys)
        basis = perturb.eigenbasis_op(sys, ctx.spec0)
        diffs.append(np.linalg.norm(
            perturb.laplace_generator(basis) - tcl.reduce(ctx).F))
    assert abs(two_point_slope(gs, diffs) - 2.0) < 0.3
