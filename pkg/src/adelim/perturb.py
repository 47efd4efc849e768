"""Perturbative expansions of the reduction, order by order in eps.

Everything is evaluated in the biorthonormal eigenbasis of L0, where the
projector resolvents are diagonal scalings and the mode sums collapse to
elementwise kernels on the transformed perturbation matrix
B_ij = <l_i| L1 |r_j>.  Orders 1-3 of the asymptotic projector, orders 1-2 of
the time-dependent projector, the order-by-order solution of the invariance
condition for zero surviving eigenvalues, and the Laplace-domain generator
used for cross-method comparisons are provided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDenominator,
    NonzeroSurvivingEigenvalue,
    SingularFastBlock,
)
from .liouvillian import SplitLiouvillian
from .spectral import SpectralData

COND_FAST_MAX = 1e12
DEGENERACY_REL = 1e-12  # |lambda_s - lambda_f| threshold, relative to the gap
KERNEL_LIMIT_REL = 1e-10  # switch double-integral kernels to their limits


@dataclass(frozen=True)
class EigenbasisOp:
    """The perturbation expressed in the eigenbasis of the free generator."""

    lam: np.ndarray        # L0 eigenvalues, eigensystem order
    B: np.ndarray          # B_ij = <l_i| L1 |r_j>
    surviving: np.ndarray
    fast: np.ndarray
    gap: float
    eps: float
    tol_s: float
    right: np.ndarray      # eigenvectors, for transforming back
    left_dag: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.lam.size

    def to_physical(self, X_eig: np.ndarray) -> np.ndarray:
        """Map an eigenbasis matrix back to the vectorized representation."""
        return self.right @ X_eig @ self.left_dag

    def injection(self) -> np.ndarray:
        """chi_R in eigenbasis coordinates (unit columns on surviving modes)."""
        K0 = np.zeros((self.n_modes, self.surviving.size), dtype=complex)
        K0[self.surviving, np.arange(self.surviving.size)] = 1.0
        return K0


def eigenbasis_op(sys: SplitLiouvillian, spec0: SpectralData) -> EigenbasisOp:
    """Transform L1 into the eigenbasis of L0."""
    es = spec0.eig
    return EigenbasisOp(
        lam=es.values,
        B=es.left_dag @ sys.L1 @ es.right,
        surviving=spec0.surviving,
        fast=spec0.fast,
        gap=spec0.gap,
        eps=sys.eps,
        tol_s=spec0.tol_s,
        right=es.right,
        left_dag=es.left_dag,
    )


@dataclass(frozen=True)
class PerturbSeries:
    """Series sum_n eps^n terms[n]; term 0 is P_inv for projector series."""

    terms: list

    @property
    def max_order(self) -> int:
        return len(self.terms) - 1

    def evaluate(self, eps: float, order: int | None = None) -> np.ndarray:
        if order is None:
            order = self.max_order
        out = np.zeros_like(self.terms[0])
        for n in range(order + 1):
            out = out + (eps ** n) * self.terms[n]
        return out


def _gap_denominators(basis: EigenbasisOp) -> np.ndarray:
    """DT[f, s] = lambda_s - lambda_f, guarded against degeneracy."""
    DT = basis.lam[basis.surviving][None, :] - basis.lam[basis.fast][:, None]
    if DT.size and np.min(np.abs(DT)) < DEGENERACY_REL * basis.gap:
        raise DegenerateDenominator(
            f"min |lambda_s - lambda_f| = {np.min(np.abs(DT)):.3e} "
            f"below {DEGENERACY_REL:g} * gap"
        )
    return DT


def _pinv_eig(basis: EigenbasisOp) -> np.ndarray:
    P = np.zeros((basis.n_modes, basis.n_modes), dtype=complex)
    P[basis.surviving, basis.surviving] = 1.0
    return P


def p_orders_asymptotic(basis: EigenbasisOp, max_order: int = 3) -> PerturbSeries:
    """Asymptotic-projector expansion P^(eps) = P_inv + sum_n eps^n P_n.

    P_1 carries the kernel 1/(lambda_s - lambda_f); P_2 and P_3 add the
    second- and third-order resolvent strings, all realized as diagonal
    scalings in the eigenbasis.  Terms are returned in the vectorized
    physical representation.
    """
    if not 1 <= max_order <= 3:
        raise ValueError("max_order must be 1, 2 or 3")
    S, F = basis.surviving, basis.fast
    B = basis.B
    DT = _gap_denominators(basis)  # (nf, ns)
    Bff, Bfs, Bsf, Bss = B[np.ix_(F, F)], B[np.ix_(F, S)], B[np.ix_(S, F)], B[np.ix_(S, S)]
    terms = [basis.to_physical(_pinv_eig(basis))]

    def embed(block_fs: np.ndarray) -> np.ndarray:
        X = np.zeros((basis.n_modes, basis.n_modes), dtype=complex)
        X[np.ix_(F, S)] = block_fs
        return basis.to_physical(X)

    X1 = Bfs / DT
    terms.append(embed(X1))
    if max_order >= 2:
        term1 = Bff @ X1
        term2 = X1 @ Bss
        terms.append(embed((term1 - term2) / DT))
    if max_order >= 3:
        nf, ns = F.size, S.size
        block = np.zeros((nf, ns), dtype=complex)
        # t2 is fully vectorized; t1, t3, t4, t5 loop over the few surviving s
        t2 = np.einsum("fa,ab,fb,bs->fs", X1, Bss, 1.0 / DT, Bss)
        for k in range(ns):
            inv_sf = 1.0 / DT[:, k]  # 1/(lambda_s - lambda_F)
            y1 = Bfs[:, k] * inv_sf
            t1_col = Bff @ ((Bff @ y1) * inv_sf)
            G = Bff @ (Bfs * inv_sf[:, None])          # (nf, ns)
            t3_col = (G / DT) @ Bss[:, k]
            w = Bsf @ y1
            t4_col = X1 @ w
            C = Bss[:, k][:, None] / DT.T              # (ns, nf)
            inner = X1 @ C                             # (nf', nf)
            t5_col = -np.einsum("fa,a,af->f", Bff, inv_sf, inner)
            block[:, k] = (t1_col + t2[:, k] - t3_col - t4_col) / DT[:, k] + t5_col
        terms.append(embed(block))
    return PerturbSeries(terms=terms)


# ---------------------------------------------------------------------------
# time-dependent kernels


def _e1(c: np.ndarray, t: float) -> np.ndarray:
    """int_0^t e^{c tau} d tau = (e^{c t} - 1)/c, with the small-|ct| series."""
    c = np.asarray(c, dtype=complex)
    ct = c * t
    small = np.abs(ct) < 1e-6
    safe = np.where(small, 1.0, c)
    direct = (np.exp(ct) - 1.0) / safe
    series = t * (1.0 + ct / 2.0 + ct * ct / 6.0 + ct * ct * ct / 24.0)
    return np.where(small, series, direct)


def _e1_prime(a: np.ndarray, t: float) -> np.ndarray:
    """int_0^t tau e^{a tau} d tau = (t e^{a t} - E1(a, t))/a."""
    a = np.asarray(a, dtype=complex)
    at = a * t
    small = np.abs(at) < 1e-6
    safe = np.where(small, 1.0, a)
    direct = (t * np.exp(at) - _e1(a, t)) / safe
    series = 0.5 * t * t * (1.0 + 2.0 * at / 3.0 + at * at / 4.0)
    return np.where(small, series, direct)


def _double_kernel(a: np.ndarray, b: np.ndarray, t: float, gap: float) -> np.ndarray:
    """int_0^t d tau1 e^{a tau1} int_0^tau1 d tau2 e^{b tau2}.

    Coinciding exponents (|b| below the degeneracy threshold) are replaced
    by the analytic t e^{a t}-type limit.
    """
    a, b = np.broadcast_arrays(np.asarray(a, complex), np.asarray(b, complex))
    tol_b = KERNEL_LIMIT_REL * gap
    degen = np.abs(b) < tol_b
    safe_b = np.where(degen, 1.0, b)
    direct = (_e1(a + b, t) - _e1(a, t)) / safe_b
    return np.where(degen, _e1_prime(a, t), direct)


def p_orders_timedep(basis: EigenbasisOp, t: float, max_order: int = 2) -> PerturbSeries:
    """Time-dependent projector expansion P(t) = P_inv + sum_n eps^n P_n(t).

    Order 1 uses the kernel (1 - e^{(lambda_f - lambda_s) t})/(lambda_s -
    lambda_f); order 2 evaluates the nested double integrals in closed form.
    All orders vanish at t = 0 and converge to the asymptotic terms for
    t >> 1/gap.
    """
    if not 1 <= max_order <= 2:
        raise ValueError("max_order must be 1 or 2")
    if t < 0:
        raise ValueError("t must be nonnegative")
    S, F = basis.surviving, basis.fast
    lam, B = basis.lam, basis.B
    DT = _gap_denominators(basis)
    Bff, Bfs, Bss = B[np.ix_(F, F)], B[np.ix_(F, S)], B[np.ix_(S, S)]
    terms = [basis.to_physical(_pinv_eig(basis))]

    def embed(block_fs):
        X = np.zeros((basis.n_modes, basis.n_modes), dtype=complex)
        X[np.ix_(F, S)] = block_fs
        return basis.to_physical(X)

    k1 = (1.0 - np.exp(-DT * t)) / DT
    terms.append(embed(Bfs * k1))
    if max_order >= 2:
        lamF, lamS = lam[F], lam[S]
        a3 = lamF[:, None, None] - lamS[None, None, :]        # (nf, 1, ns)
        bff = lamF[None, :, None] - lamF[:, None, None]       # (nf, nf, 1)
        K1 = _double_kernel(a3, bff, t, basis.gap)            # (nf, nf, ns)
        term1 = np.einsum("fg,gs,fgs->fs", Bff, Bfs, K1)
        bss = lamS[None, None, :] - lamS[None, :, None]       # (1, ns, ns)
        K2 = _double_kernel(a3, bss, t, basis.gap)            # (nf, ns, ns)
        term2 = np.einsum("fp,ps,fps->fs", Bfs, Bss, K2)
        terms.append(embed(term1 - term2))
    return PerturbSeries(terms=terms)


# ---------------------------------------------------------------------------
# invariance-condition recursion (zero surviving eigenvalues)


def geometric_recursion(basis: EigenbasisOp, max_order: int) -> tuple[list, list]:
    """Order-by-order solution of K F = L K when all lambda_s = 0.

    Returns (K_terms, F_terms): K_n as d^2 x n_s matrices in the physical
    representation (K_0 = chi_R), F_n as n_s x n_s reduced generators
    (F_0 = 0).  The gauge chi_L^dag K_n = 0 (n >= 1) is imposed when
    inverting L0 on the fast subspace.

    Raises
    ------
    NonzeroSurvivingEigenvalue
        If any surviving eigenvalue exceeds the classification tolerance.
    """
    if max_order < 0:
        raise ValueError("max_order must be nonnegative")
    S, F = basis.surviving, basis.fast
    lam, B = basis.lam, basis.B
    if S.size and np.max(np.abs(lam[S])) > basis.tol_s:
        raise NonzeroSurvivingEigenvalue(
            f"max |lambda_s| = {np.max(np.abs(lam[S])):.3e} exceeds "
            f"tol {basis.tol_s:.3e}"
        )
    ns = S.size
    K0 = basis.injection()
    K_eig = [K0]
    F_terms = [np.zeros((ns, ns), dtype=complex)]
    for n in range(1, max_order + 1):
        BK = B @ K_eig[n - 1]
        # gauge kills the surviving rows of K_m (m >= 1) inside the sum
        Fn = BK[S, :].copy()
        rhs = K0 @ Fn - BK
        for m in range(1, n):
            rhs += K_eig[m] @ F_terms[n - m]
        Kn = np.zeros_like(K0)
        Kn[F, :] = rhs[F, :] / lam[F][:, None]
        K_eig.append(Kn)
        F_terms.append(Fn)
    K_terms = [basis.right @ Kn for Kn in K_eig]
    return K_terms, F_terms


# ---------------------------------------------------------------------------
# Laplace-domain generator (for the cross-method comparison)


def laplace_generator(
    basis: EigenbasisOp,
    include_M1: bool = True,
    eps: float | None = None,
) -> np.ndarray:
    """Reduced generator [I - M1]^{-1} M0 of the Laplace-transform method.

    M0 = P L P - P L Q [Q L Q]^{-1} Q L P and M1 = -P L Q [Q L Q]^{-2} Q L P,
    with [Q L Q]^{-1} the inverse of L restricted to the fast eigenspace of
    L0.  Returned restricted to the reduced basis (n_s x n_s).  At eps = 0 it
    equals diag(lambda_s); away from it, it generally disagrees with the
    exact reduced generator beyond leading orders.
    """
    S, F = basis.surviving, basis.fast
    lam, B = basis.lam, basis.B
    if eps is None:
        eps = basis.eps
    Lss = np.diag(lam[S]) + eps * B[np.ix_(S, S)]
    Lsf = eps * B[np.ix_(S, F)]
    Lfs = eps * B[np.ix_(F, S)]
    Lff = np.diag(lam[F]) + eps * B[np.ix_(F, F)]
    cond = np.linalg.cond(Lff)
    if not np.isfinite(cond) or cond > COND_FAST_MAX:
        raise SingularFastBlock(f"fast block condition number {cond:.3e}")
    invF_Lfs = np.linalg.solve(Lff, Lfs)
    M0 = Lss - Lsf @ invF_Lfs
    if not include_M1:
        return M0
    M1 = -Lsf @ np.linalg.solve(Lff, invF_Lfs)
    return np.linalg.solve(np.eye(S.size) - M1, M0)
