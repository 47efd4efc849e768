"""Exact time-convolutionless reduction of a gapped Liouvillian.

Given L = L0 + eps*L1 with a clean spectral gap, this module evaluates the
memory superoperator Sigma(t), the time-dependent projector P(t) and
inhomogeneity J(t), their asymptotic limit P^(eps), and the reduction maps
(K, F) that satisfy the invariance condition L K = K F together with the
gauge chi_L^dag K = I.

All time-dependent objects use closed forms built from the spectral
decomposition of the full generator; no time quadrature is performed (the
quadrature definitions are kept as independent test oracles).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import AmbiguousMatching, SingularA, SingularN
from .liouvillian import SplitLiouvillian
from .numerics import EigenSystem, eig_biorthonormal
from .spectral import (
    ModeMatching,
    ReducedBasis,
    SpectralData,
    analyze,
    identify_surviving,
    match_modes,
    reduced_basis,
)

COND_A_MAX = 1e10
COND_N_MAX = 1e8
BASIS_CONSISTENCY_TOL = 1e-8


@dataclass(frozen=True)
class TclContext:
    """Everything the reduction needs, computed once per (L0, eps*L1) split."""

    sys: SplitLiouvillian
    spec0: SpectralData
    basis: ReducedBasis
    eig_full: EigenSystem
    matching: ModeMatching | None  # full-spectrum bijection, when unambiguous
    surviving_eps: np.ndarray      # perturbed-mode columns spanning the manifold
    N: np.ndarray                  # N_{ss'} = <l_s | r_{s'}^(eps)>
    M: np.ndarray                  # M_{ss'} = <l_s^(eps) | r_{s'}>
    Cr: np.ndarray                 # left_dag_full @ chi_R

    @property
    def dim2(self) -> int:
        return self.eig_full.dim

    @property
    def n_surviving(self) -> int:
        return self.basis.n_surviving

    @property
    def gap(self) -> float:
        return self.spec0.gap

    @property
    def L_hat(self) -> np.ndarray:
        return self.sys.full


@dataclass(frozen=True)
class ReducedModel:
    """Lift map K (d^2 x n_s) and reduced generator F (n_s x n_s)."""

    K: np.ndarray
    F: np.ndarray


def build_context(
    sys: SplitLiouvillian,
    tol_s: float | None = None,
    basis: ReducedBasis | None = None,
) -> TclContext:
    """Diagonalize L0 and L, match modes, and assemble the overlap matrices.

    ``basis`` may override the eigen-derived reduced basis with any other
    biorthonormal basis of the same surviving subspace (e.g. an analytically
    known one); it is checked against the eigenprojector.
    """
    spec0 = analyze(sys.L0, tol_s)
    eig_basis = reduced_basis(spec0)
    if basis is None:
        basis = eig_basis
    else:
        drift = np.linalg.norm(basis.projector() - eig_basis.projector())
        if drift > BASIS_CONSISTENCY_TOL * max(1.0, np.linalg.norm(basis.projector())):
            raise ValueError(
                f"override basis spans a different subspace (drift {drift:.2e})"
            )
    eig_full = eig_biorthonormal(sys.full)
    surv_eps = identify_surviving(basis.chi_L_dag, eig_full.right)
    try:
        # full bijection kept as diagnostics; deep fast modes may mix too
        # strongly for it even when the surviving identification is clean
        matching = match_modes(spec0, eig_full)
    except AmbiguousMatching:
        matching = None
    N = basis.chi_L_dag @ eig_full.right[:, surv_eps]
    M = eig_full.left_dag[surv_eps, :] @ basis.chi_R
    for name, mat in (("N", N), ("M", M)):
        cond = np.linalg.cond(mat)
        if not np.isfinite(cond) or cond > COND_N_MAX:
            raise SingularN(f"{name} condition number {cond:.3e} exceeds {COND_N_MAX:.1e}")
    Cr = eig_full.left_dag @ basis.chi_R
    return TclContext(
        sys=sys, spec0=spec0, basis=basis, eig_full=eig_full,
        matching=matching, surviving_eps=surv_eps, N=N, M=M, Cr=Cr,
    )


# ---------------------------------------------------------------------------
# time-dependent objects


def _propagated_chiR(ctx: TclContext, t: float) -> np.ndarray:
    """e^{L t} chi_R via the spectral decomposition of L."""
    u = np.exp(ctx.eig_full.values * t)
    return ctx.eig_full.right @ (u[:, None] * ctx.Cr)


def _surviving_block(ctx: TclContext, W: np.ndarray, t: float) -> np.ndarray:
    """A(t)_{ss'} = <l_s| e^{L t} |r_{s'}> with an invertibility guard."""
    A = ctx.basis.chi_L_dag @ W
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_A_MAX:
        raise SingularA(f"A(t={t:g}) condition number {cond:.3e}")
    return A


def sigma_inv(ctx: TclContext, t: float) -> np.ndarray:
    """Memory superoperator Sigma(t) = Q - e^{Q L Q t} Q e^{-L t}.

    Satisfies Sigma(0) = 0 and P_inv Sigma(t) = 0; vanishes identically at
    eps = 0.  Formed explicitly (O(d^6) per call), intended for moderate
    dimensions and as a reference for the projector identities.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    Q = ctx.basis.complement()
    L = ctx.L_hat
    qlq = Q @ L @ Q
    return Q - sla.expm(qlq * t) @ Q @ ctx.eig_full.propagator(-t)


def p_inv_t(ctx: TclContext, t: float) -> np.ndarray:
    """Time-dependent projector P(t) = e^{L t} chi_R A(t)^{-1} chi_L^dag."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    W = _propagated_chiR(ctx, t)
    A = _surviving_block(ctx, W, t)
    return W @ np.linalg.solve(A, ctx.basis.chi_L_dag)


def j_inv_t(ctx: TclContext, t: float) -> np.ndarray:
    """Inhomogeneity J(t) = [I - P(t)] e^{L t} Q; J(0) = Q, decays ~ e^{-t Delta}."""
    P = p_inv_t(ctx, t)
    EQ = ctx.eig_full.propagator(t) @ ctx.basis.complement()
    return EQ - P @ EQ


def p_inv_asymptotic(ctx: TclContext) -> np.ndarray:
    """Asymptotic projector P^(eps) = sum_{ss'} |r_s^(eps)> [N^-1]_{ss'} <l_s'|."""
    R_S = ctx.eig_full.right[:, ctx.surviving_eps]
    return R_S @ np.linalg.solve(ctx.N, ctx.basis.chi_L_dag)


def reduce(ctx: TclContext) -> ReducedModel:
    """Reduction maps K = P^(eps) chi_R and F = chi_L^dag L P^(eps) chi_R.

    By construction K F = L K holds to roundoff and chi_L^dag K = I (the
    gauge choice x_s = <l_s|rho>).
    """
    P_eps = p_inv_asymptotic(ctx)
    K = P_eps @ ctx.basis.chi_R
    F = ctx.basis.chi_L_dag @ (ctx.L_hat @ K)
    return ReducedModel(K=K, F=F)


def f_tcl_t(ctx: TclContext, t: float) -> np.ndarray:
    """Time-dependent reduced generator F(t) = chi_L^dag L P(t) chi_R."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    W = _propagated_chiR(ctx, t)
    A = _surviving_block(ctx, W, t)
    LW = ctx.basis.chi_L_dag @ (ctx.L_hat @ W)
    return LW @ np.linalg.inv(A)


def evolve_reduced(F, x0: np.ndarray, grid: np.ndarray, dt: float | None = None) -> np.ndarray:
    """RK4 integration of x' = F x (F a matrix or a callable t -> matrix).

    Integrates between consecutive grid points, subdividing so internal
    steps never exceed ``dt`` when given.  Returns x at every grid point,
    shape (len(grid), len(x0)).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    x = np.asarray(x0, dtype=complex).copy()
    if callable(F):
        F_at = F
    else:
        F_const = np.asarray(F, dtype=complex)
        F_at = lambda _t: F_const  # noqa: E731
    out = np.empty((grid.size, x.size), dtype=complex)
    out[0] = x
    for k in range(1, grid.size):
        span = grid[k] - grid[k - 1]
        nsub = 1 if dt is None else max(1, int(np.ceil(span / dt - 1e-12)))
        h = span / nsub
        t = grid[k - 1]
        for _ in range(nsub):
            k1 = F_at(t) @ x
            k2 = F_at(t + 0.5 * h) @ (x + 0.5 * h * k1)
            k3 = F_at(t + 0.5 * h) @ (x + 0.5 * h * k2)
            k4 = F_at(t + h) @ (x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        out[k] = x
    return out


# ---------------------------------------------------------------------------
# streaming Frobenius norms for large systems


class SuperopNormStream:
    """Frobenius norms of dP(t) = P(t) - P^(eps) and J(t) without forming them.

    P(t) and P^(eps) have rank n_s, and e^{L t} Q enters J(t) only through
    traces against rank-n_s factors, so every norm reduces to n_s x n_s Gram
    matrices plus one quadratic form with a precomputed n^2 kernel.  Per-time
    cost is O(d^4 n_s) instead of O(d^6).
    """

    def __init__(
        self,
        values: np.ndarray,
        right: np.ndarray,
        left_dag: np.ndarray,
        basis: ReducedBasis,
        R_S: np.ndarray,
        N: np.ndarray,
    ):
        chi_R, chi_L = basis.chi_R, basis.chi_L_dag
        self.lam = values
        self.R = right
        self.RH = right.conj().T
        self.chi_L = chi_L
        self.Cr = left_dag @ chi_R
        self.Cl = chi_L @ right
        Q = basis.complement()
        self.Lq = left_dag @ Q
        self.LqH = self.Lq.conj().T
        Gr = self.RH @ right
        GQ = self.Lq @ self.LqH
        self.Hmat = Gr * GQ.T
        del Gr, GQ
        self.U2 = R_S @ np.linalg.inv(N)
        self.Gl = chi_L @ chi_L.conj().T

    def norms(self, t: float) -> tuple[float, float]:
        """Return (||dP(t)||_F, ||J(t)||_F)."""
        u = np.exp(self.lam * t)
        W = self.R @ (u[:, None] * self.Cr)
        A = self.chi_L @ W
        U1 = np.linalg.solve(A.T, W.T).T  # W @ A^{-1}
        dU = U1 - self.U2
        dP2 = float(np.trace((dU.conj().T @ dU) @ self.Gl).real)
        # J(t) = E(t) Q - U1 V(t) with E(t) Q = R diag(u) Lq
        V = (self.Cl * u[None, :]) @ self.Lq
        na2 = float((u.conj() @ (self.Hmat @ u)).real)
        cross = np.einsum("i,ik,ki->", u.conj(), self.RH @ U1, V @ self.LqH)
        nb2 = float(np.trace((U1.conj().T @ U1) @ (V @ V.conj().T)).real)
        J2 = na2 - 2.0 * cross.real + nb2
        return np.sqrt(max(dP2, 0.0)), np.sqrt(max(J2, 0.0))

    def series(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dP = np.empty(len(ts))
        J = np.empty(len(ts))
        for k, t in enumerate(ts):
            dP[k], J[k] = self.norms(float(t))
        return dP, J


def stream_from_context(ctx: TclContext) -> SuperopNormStream:
    return SuperopNormStream(
        values=ctx.eig_full.values,
        right=ctx.eig_full.right,
        left_dag=ctx.eig_full.left_dag,
        basis=ctx.basis,
        R_S=ctx.eig_full.right[:, ctx.surviving_eps],
        N=ctx.N,
    )
