import numpy as np
import pytest
import scipy.linalg as sla

from adelim import models, tcl
from adelim.liouvillian import vectorize
from adelim.numerics import fit_exponential
from conftest import random_density


def simpson_sigma(ctx, t, panels=2000):
    """Quadrature oracle for the memory superoperator: composite Simpson on
    eps * int_0^t e^{QLQ tau} Q L1 P e^{-L tau} d tau."""
    sys = ctx.sys
    Q = ctx.basis.complement()
    P = ctx.basis.projector()
    L = sys.full
    qlq = Q @ L @ Q
    mid = Q @ (sys.eps * sys.L1) @ P
    taus = np.linspace(0.0, t, 2 * panels + 1)
    h = taus[1] - taus[0]
    weights = np.ones(taus.size)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    acc = np.zeros_like(L)
    for w, tau in zip(weights, taus):
        acc = acc + w * (sla.expm(qlq * tau) @ mid @ ctx.eig_full.propagator(-tau))
    return acc * (h / 3.0)


def test_sigma_at_zero(three_level_ctx):
    assert np.linalg.norm(tcl.sigma_inv(three_level_ctx, 0.0)) < 1e-12


def test_sigma_eps_zero():
    sys = models.three_level(models.three_level_reference(0.0))
    ctx = tcl.build_context(sys)
    for t in (0.5, 2.0):
        assert np.linalg.norm(tcl.sigma_inv(ctx, t)) < 1e-10


def test_sigma_left_annihilated(three_level_ctx):
    P = three_level_ctx.basis.projector()
    for t in (0.3, 1.0, 4.0):
        assert np.linalg.norm(P @ tcl.sigma_inv(three_level_ctx, t)) < 1e-10


def test_sigma_matches_quadrature(three_level_ctx):
    t = 1.0
    want = simpson_sigma(three_level_ctx, t)
    got = tcl.sigma_inv(three_level_ctx, t)
    assert np.linalg.norm(got - want) < 1e-7


def test_p_inv_t_at_zero(three_level_ctx):
    P0 = tcl.p_inv_t(three_level_ctx, 0.0)
    assert np.linalg.norm(P0 - three_level_ctx.basis.projector()) < 1e-10


def test_p_inv_t_eps_zero():
    sys = models.three_level(models.three_level_reference(0.0))
    ctx = tcl.build_context(sys)
    P_inv = ctx.basis.projector()
    for t in (0.7, 3.0):
        assert np.linalg.norm(tcl.p_inv_t(ctx, t) - P_inv) < 1e-9


def test_p_inv_t_matches_sigma_construction(three_level_ctx):
    # independent route: P(t) = [I - Sigma(t)]^{-1} P_inv
    t = 3.0
    Sig = tcl.sigma_inv(three_level_ctx, t)
    want = np.linalg.solve(np.eye(9) - Sig, three_level_ctx.basis.projector())
    got = tcl.p_inv_t(three_level_ctx, t)
    assert np.linalg.norm(got - want) < 1e-8


def test_p_inv_t_projector_laws(three_level_ctx):
    P_inv = three_level_ctx.basis.projector()
    for t in (0.2, 1.0, 5.0):
        P = tcl.p_inv_t(three_level_ctx, t)
        assert np.linalg.norm(P @ P - P) < 1e-9
        assert np.linalg.norm(P @ P_inv - P) < 1e-9


def test_j_at_zero(three_level_ctx):
    J0 = tcl.j_inv_t(three_level_ctx, 0.0)
    assert np.linalg.norm(J0 - three_level_ctx.basis.complement()) < 1e-10


def test_j_eps_zero_spectral_sum():
    sys = models.three_level(models.three_level_reference(0.0))
    ctx = tcl.build_context(sys)
    spec = ctx.spec0
    for t in (0.4, 1.5):
        want = np.zeros((9, 9), dtype=complex)
        for f in spec.fast:
            want += np.exp(spec.eig.values[f] * t) * np.outer(
                spec.eig.right[:, f], spec.eig.left_dag[f, :])
        got = tcl.j_inv_t(ctx, t)
        assert np.linalg.norm(got - want) < 1e-9


def test_j_decay_rate_near_gap(three_level_ctx):
    ts = np.arange(0.0, 12.0, 0.05)
    norms = np.array([np.linalg.norm(tcl.j_inv_t(three_level_ctx, t)) for t in ts])
    fit = fit_exponential(ts, norms, (2.0, 12.0))
    assert abs(fit.rate - three_level_ctx.gap) / three_level_ctx.gap < 0.05


def test_p_asymptotic_eps_zero():
    sys = models.three_level(models.three_level_reference(0.0))
    ctx = tcl.build_context(sys)
    assert np.linalg.norm(tcl.p_inv_asymptotic(ctx) - ctx.basis.projector()) < 1e-10


def test_p_asymptotic_image_and_kernel(three_level_ctx):
    ctx = three_level_ctx
    P = tcl.p_inv_asymptotic(ctx)
    assert np.linalg.norm(P @ P - P) < 1e-10
    for col in ctx.surviving_eps:
        r = ctx.eig_full.right[:, col]
        assert np.linalg.norm(P @ r - r) < 1e-9
    for f in ctx.spec0.fast:
        r = ctx.spec0.eig.right[:, f]
        assert np.linalg.norm(P @ r) < 1e-9


def test_p_asymptotic_prop2(three_level_ctx, rabi_ctx_small):
    for ctx in (three_level_ctx, rabi_ctx_small):
        L = ctx.L_hat
        P = tcl.p_inv_asymptotic(ctx)
        resid = np.linalg.norm((np.eye(ctx.dim2) - P) @ L @ P)
        assert resid < 1e-9 * np.linalg.norm(L)


def test_p_inv_t_converges_to_asymptotic(three_level_ctx):
    P_inf = tcl.p_inv_asymptotic(three_level_ctx)
    t = 30.0 / three_level_ctx.gap
    assert np.linalg.norm(tcl.p_inv_t(three_level_ctx, t) - P_inf) < 1e-8


def test_reduce_eps_zero():
    sys = models.three_level(models.three_level_reference(0.0))
    ctx = tcl.build_context(sys)
    red = tcl.reduce(ctx)
    assert np.linalg.norm(red.K - ctx.basis.chi_R) < 1e-10
    lam_s = ctx.spec0.eig.values[ctx.spec0.surviving]
    assert np.linalg.norm(red.F - np.diag(lam_s)) < 1e-10


def test_reduce_rabi_weak_coupling_limit():
    p = models.rabi_reference(g=1e-4, n_tr=5)
    ctx = tcl.build_context(models.rabi(p), basis=models.rabi_reduced_basis(p))
    red = tcl.reduce(ctx)
    evals = np.linalg.eigvals(red.F)
    want = np.array([0.0, 0.0, 1j * p.omega_eg, -1j * p.omega_eg])
    for w in want:
        assert np.min(np.abs(evals - w)) < 1e-4
        evals = np.delete(evals, np.argmin(np.abs(evals - w)))


def test_reduce_invariance_and_gauge(three_level_ctx, rabi_ctx_small):
    for ctx in (three_level_ctx, rabi_ctx_small):
        red = tcl.reduce(ctx)
        L = ctx.L_hat
        resid = np.linalg.norm(L @ red.K - red.K @ red.F) / np.linalg.norm(red.K)
        assert resid < 1e-9
        gauge = np.linalg.norm(ctx.basis.chi_L_dag @ red.K - np.eye(ctx.n_surviving))
        assert gauge < 1e-8


def test_f_tcl_at_zero(three_level_ctx):
    ctx = three_level_ctx
    want = ctx.basis.chi_L_dag @ ctx.L_hat @ ctx.basis.chi_R
    assert np.linalg.norm(tcl.f_tcl_t(ctx, 0.0) - want) < 1e-10


def test_f_tcl_converges(three_level_ctx):
    red = tcl.reduce(three_level_ctx)
    F50 = tcl.f_tcl_t(three_level_ctx, 50.0 / three_level_ctx.gap)
    assert np.linalg.norm(F50 - red.F) < 1e-10


def test_f_tcl_matches_analytic_time_dependent():
    # second-order analytic generator differs from the exact one at O(g^4)
    t = 2.0
    diffs = []
    gs = np.array([0.02, 0.04, 0.08])
    for g in gs:
        p = models.rabi_reference(g=g, n_tr=6)
        ctx = tcl.build_context(models.rabi(p), basis=models.rabi_reduced_basis(p))
        got = tcl.f_tcl_t(ctx, t)
        want = models.rabi_analytic_F(p, t)
        diffs.append(np.linalg.norm(got - want))
    slope = np.polyfit(np.log(gs), np.log(diffs), 1)[0]
    assert abs(slope - 4.0) < 0.3


def test_evolve_reduced_constant_cases():
    grid = np.linspace(0.0, 1.0, 11)
    out = tcl.evolve_reduced(np.zeros((3, 3)), np.ones(3), grid, dt=0.01)
    assert np.allclose(out, 1.0)
    out = tcl.evolve_reduced(-np.eye(1), np.array([1.0]), np.array([0.0, 1.0]),
                             dt=1e-3)
    assert abs(out[-1, 0] - np.exp(-1.0)) < 1e-9


def test_evolve_reduced_vs_expm(rng):
    F = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    F = F - np.max(F.real) * np.eye(4)  # keep it non-explosive
    x0 = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    grid = np.linspace(0.0, 2.0, 21)
    out = tcl.evolve_reduced(F, x0, grid, dt=1e-3)
    err = max(
        np.linalg.norm(out[k] - sla.expm(F * t) @ x0)
        for k, t in enumerate(grid)
    )
    assert err < 1e-9


def test_in_manifold_exactness(three_level_ctx, rng):
    # rho(0) = devec(K x0) with unit trace follows K x(t) exactly
    ctx = three_level_ctx
    red = tcl.reduce(ctx)
    P_eps = tcl.p_inv_asymptotic(ctx)
    v0 = P_eps @ vectorize(random_density(rng, 3))
    x0 = ctx.basis.chi_L_dag @ v0
    grid = np.linspace(0.0, 8.0, 41)
    xs = tcl.evolve_reduced(red.F, x0, grid, dt=1e-3)
    for k, t in enumerate(grid):
        full = ctx.eig_full.propagator(t) @ v0
        assert np.linalg.norm(full - red.K @ xs[k]) < 1e-8


def test_prop1_fit_orders(three_level_ctx):
    # both norms decay at the gap rate; amplitude ratio is of order eps/gap
    ctx = three_level_ctx
    ts = np.arange(0.0, 14.0, 0.02)
    stream = tcl.stream_from_context(ctx)
    dP, J = stream.series(ts)
    fit_P = fit_exponential(ts, dP, (2.0, 12.0))
    fit_J = fit_exponential(ts, J, (2.0, 12.0))
    gap = ctx.gap
    assert abs(fit_P.rate / gap - 1.0) < 0.05
    assert abs(fit_J.rate / gap - 1.0) < 0.05
    eps_over_gap = ctx.sys.eps / gap
    ratio = fit_P.amplitude / fit_J.amplitude
    assert 0.5 * eps_over_gap < ratio < 2.0 * eps_over_gap


def test_stream_matches_dense(rabi_ctx_small):
    ctx = rabi_ctx_small
    stream = tcl.stream_from_context(ctx)
    P_eps = tcl.p_inv_asymptotic(ctx)
    for t in (0.0, 0.8, 3.0, 10.0):
        dP_want = np.linalg.norm(tcl.p_inv_t(ctx, t) - P_eps)
        J_want = np.linalg.norm(tcl.j_inv_t(ctx, t))
        dP_got, J_got = stream.norms(t)
        assert abs(dP_got - dP_want) < 1e-8 * max(1.0, dP_want)
        assert abs(J_got - J_want) < 1e-8 * max(1.0, J_want)


def test_context_rejects_wrong_basis(three_level_sys, rabi_ctx_small):
    with pytest.raises(ValueError):
        tcl.build_context(three_level_sys, basis=rabi_ctx_small.basis)


def test_negative_time_rejected(three_level_ctx):
    for fn in (tcl.sigma_inv, tcl.p_inv_t, tcl.f_tcl_t):
        with pytest.raises(ValueError):
            fn(three_level_ctx, -0.1)


def test_singular_surviving_block(three_level_ctx):
    # the decaying surviving modes make A(t) collapse at extreme times
    from adelim.errors import SingularA

    with pytest.raises(SingularA):
        tcl.p_inv_t(three_level_ctx, 5000.0)


def test_evolve_reduced_grid_validation():
    with pytest.raises(ValueError):
        tcl.evolve_reduced(np.eye(2), np.ones(2), np.array([0.0, 0.0, 1.0]))


def test_overlap_matrices(three_level_ctx):
    # N, M stay well conditioned at the reference coupling; inside degenerate
    # surviving clusters they are block mixtures, so only invertibility and
    # the exact eps = 0 limit are contract
    ctx = three_level_ctx
    assert np.linalg.cond(ctx.N) < 1e2
    assert np.linalg.cond(ctx.M) < 1e2
    sys0 = models.three_level(models.three_level_reference(0.0))
    ctx0 = tcl.build_context(sys0)
    assert np.linalg.norm(ctx0.N - np.eye(4)) < 1e-10
    assert np.linalg.norm(ctx0.M - np.eye(4)) < 1e-10
