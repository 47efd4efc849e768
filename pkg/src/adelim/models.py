"""Concrete systems: a dissipative three-level Lambda configuration and the
Rabi model with a strongly damped oscillator mode, plus the closed-form
second-order reduction maps of the latter.

Conventions: three-level basis order {|0>, |1>, |e>}; qubit basis order
{|g>, |e>} with sigma_z = |e><e| - |g><g|; oscillator truncated to n_tr Fock
states by zeroing matrix elements at or beyond the cutoff; the bipartite
composite orders the oscillator (A) before the qubit (B).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams
from .liouvillian import (
    HilbertSpec,
    SplitLiouvillian,
    build_gksl,
    compose_bipartite,
    sandwich_super,
    vectorize,
)
from .spectral import ReducedBasis

SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)   # |e><g|
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|
SIGMA_X = SIGMA_PLUS + SIGMA_MINUS


# ---------------------------------------------------------------------------
# three-level system


@dataclass(frozen=True)
class ThreeLevelParams:
    """Frequencies, decay rates and couplings (all in units of the total
    decay rate when following the reference parameter point)."""

    omega1: float
    omega_e: float
    Gamma0: float
    Gamma1: float
    g0: float
    g1: float

    def __post_init__(self):
        if self.Gamma0 < 0 or self.Gamma1 < 0 or self.Gamma0 + self.Gamma1 <= 0:
            raise InvalidParams("need Gamma0, Gamma1 >= 0 with Gamma0 + Gamma1 > 0")
        if self.g0 < 0 or self.g1 < 0:
            raise InvalidParams("couplings must be nonnegative")


def three_level_reference(g: float = 0.1) -> ThreeLevelParams:
    """The reference parameter point (Gamma = 1 units) with coupling g."""
    return ThreeLevelParams(omega1=0.5, omega_e=1.0, Gamma0=0.5, Gamma1=0.5,
                            g0=g, g1=g)


def three_level(p: ThreeLevelParams) -> SplitLiouvillian:
    """L0 = free Hamiltonian + spontaneous decay 2*Gamma_i D[|i><e|];
    eps*L1 = -i[g0 |0><e| + g1 |1><e| + h.c., .] with eps = max(g0, g1)."""
    ket = np.eye(3, dtype=complex)
    H0 = p.omega1 * np.outer(ket[1], ket[1]) + p.omega_e * np.outer(ket[2], ket[2])
    jump0 = np.outer(ket[0], ket[2])  # |0><e|
    jump1 = np.outer(ket[1], ket[2])  # |1><e|
    L0 = build_gksl(H0, [(2.0 * p.Gamma0, jump0), (2.0 * p.Gamma1, jump1)])
    eps = max(p.g0, p.g1)
    if eps > 0:
        H1 = p.g0 * jump0 + p.g1 * jump1
        H1 = H1 + H1.conj().T
        L1 = build_gksl(H1, []) / eps
    else:
        L1 = np.zeros_like(L0)
    return SplitLiouvillian(L0=L0, L1=L1, eps=eps, space=HilbertSpec((3,)))


# ---------------------------------------------------------------------------
# Rabi model with a lossy oscillator


@dataclass(frozen=True)
class RabiParams:
    """Oscillator frequency/loss, qubit splitting, coupling, Fock cutoff."""

    omega_ph: float
    omega_eg: float
    kappa: float
    g: float
    n_tr: int = 10
    gamma_plus: complex = field(init=False)
    gamma_minus: complex = field(init=False)

    def __post_init__(self):
        if self.kappa <= 0:
            raise InvalidParams("kappa must be positive")
        if self.g < 0:
            raise InvalidParams("g must be nonnegative")
        if self.n_tr < 2:
            raise InvalidParams("n_tr must be at least 2")
        object.__setattr__(
            self, "gamma_plus", 0.5 * self.kappa + 1j * (self.omega_ph + self.omega_eg)
        )
        object.__setattr__(
            self, "gamma_minus", 0.5 * self.kappa + 1j * (self.omega_ph - self.omega_eg)
        )

    @property
    def kappa_bar(self) -> complex:
        return self.kappa + 2j * self.omega_ph

    @property
    def dims(self) -> tuple[int, int]:
        return (self.n_tr, 2)


def annihilation(n_tr: int) -> np.ndarray:
    """Truncated annihilation operator, <n-1|a|n> = sqrt(n)."""
    return np.diag(np.sqrt(np.arange(1, n_tr, dtype=float)), k=1).astype(complex)


def rabi(p: RabiParams) -> SplitLiouvillian:
    """Composite generator: damped oscillator (A), free qubit (B), and the
    transverse coupling -i g [(a^dag + a) (x) sigma_x, .] as eps*L1, eps = g."""
    a = annihilation(p.n_tr)
    L_A = build_gksl(p.omega_ph * (a.conj().T @ a), [(p.kappa, a)])
    L_B = build_gksl(0.5 * p.omega_eg * SIGMA_Z, [])
    if p.g > 0:
        H_int = p.g * np.kron(a.conj().T + a, SIGMA_X)
        L_int = build_gksl(H_int, [])
        comp = compose_bipartite(L_A, L_B, L_int, p.dims)
        return SplitLiouvillian(L0=comp.L0, L1=comp.L1 / p.g, eps=p.g,
                                space=comp.space)
    comp = compose_bipartite(L_A, L_B, np.zeros(((2 * p.n_tr) ** 2,) * 2), p.dims)
    return SplitLiouvillian(L0=comp.L0, L1=comp.L1, eps=0.0, space=comp.space)


def rabi_reference(g: float, n_tr: int = 10, omega_eg: float = 1.0) -> RabiParams:
    """Reference parameter point (kappa = 1 units): resonant frequencies."""
    return RabiParams(omega_ph=1.0, omega_eg=omega_eg, kappa=1.0, g=g, n_tr=n_tr)


def rabi_reduced_basis(p: RabiParams) -> ReducedBasis:
    """Surviving-mode basis fixed to the vectorized qubit matrix units.

    Column n*2+m is vec(|0><0|_A (x) |m><n|_B) and the matching left row is
    vec(I_A (x) |m><n|)^dag, so x = chi_L^dag vec(rho) reproduces the column
    stacking of the reduced state tr_A rho.
    """
    n_tr = p.n_tr
    d = 2 * n_tr
    steady = np.zeros((n_tr, n_tr), dtype=complex)
    steady[0, 0] = 1.0
    eyeA = np.eye(n_tr, dtype=complex)
    chi_R = np.empty((d * d, 4), dtype=complex)
    chi_L = np.empty((4, d * d), dtype=complex)
    for m in range(2):
        for n in range(2):
            E = np.zeros((2, 2), dtype=complex)
            E[m, n] = 1.0
            col = n * 2 + m
            chi_R[:, col] = vectorize(np.kron(steady, E))
            chi_L[col, :] = vectorize(np.kron(eyeA, E)).conj()
    return ReducedBasis(chi_R=chi_R, chi_L_dag=chi_L)


def _c_pm(p: RabiParams, t: float) -> tuple[complex, complex]:
    """Relaxation kernels c_pm(t) = (1 - e^{-gamma_pm t})/gamma_pm."""
    if np.isinf(t):
        return 1.0 / p.gamma_plus, 1.0 / p.gamma_minus
    return (
        (1.0 - np.exp(-p.gamma_plus * t)) / p.gamma_plus,
        (1.0 - np.exp(-p.gamma_minus * t)) / p.gamma_minus,
    )


def rabi_analytic_F(p: RabiParams, t: float = np.inf) -> np.ndarray:
    """Second-order reduced generator on the vectorized qubit state.

    The coherent shift is -(i/2)[omega_eg + g^2 Im(c_- - c_+)] [sigma_z, .]
    (the anti-Hermitian part of sigma_x sigma_gamma = c_- |e><e| + c_+ |g><g|)
    and the dissipative part carries the coefficient matrix
    K_jk(t) = c_j(t) + c_k(t)^*; t = inf gives the asymptotic generator.
    """
    cp, cm = _c_pm(p, t)
    shift = p.omega_eg + p.g ** 2 * (cm - cp).imag
    gen = -0.5j * shift * (sandwich_super(SIGMA_Z, np.eye(2))
                           - sandwich_super(np.eye(2), SIGMA_Z))
    cs = {1: cp, -1: cm}
    sig = {1: SIGMA_PLUS, -1: SIGMA_MINUS}
    for j in (1, -1):
        for k in (1, -1):
            Kjk = cs[j] + np.conj(cs[k])
            sj, sk = sig[j], sig[k]
            skd_sj = sk.conj().T @ sj
            gen = gen + p.g ** 2 * Kjk * (
                sandwich_super(sj, sk.conj().T)
                - 0.5 * sandwich_super(skd_sj, np.eye(2))
                - 0.5 * sandwich_super(np.eye(2), skd_sj)
            )
    return gen


def assemble_k_matrix(p: RabiParams, t: float = np.inf) -> np.ndarray:
    """The 2x2 Hermitian coefficient matrix K_jk(t), rows/cols ordered (+, -)."""
    cp, cm = _c_pm(p, t)
    return np.array(
        [[cp + np.conj(cp), cp + np.conj(cm)],
         [cm + np.conj(cp), cm + np.conj(cm)]],
        dtype=complex,
    )


def k_matrix_eigenvalues(p: RabiParams) -> tuple[float, float]:
    """Closed-form eigenvalues of the asymptotic coefficient matrix.

    trace(K) = kappa/|gamma_+|^2 + kappa/|gamma_-|^2 > 0; when omega_eg != 0
    the discriminant exceeds 1 and exactly one eigenvalue is negative.
    """
    tr = p.kappa / abs(p.gamma_plus) ** 2 + p.kappa / abs(p.gamma_minus) ** 2
    disc = np.sqrt(
        1.0 + (4.0 * p.omega_eg / (abs(p.gamma_plus * p.gamma_minus) * tr)) ** 2
    )
    return 0.5 * tr * (1.0 + disc), 0.5 * tr * (1.0 - disc)


def rabi_analytic_K(p: RabiParams) -> np.ndarray:
    """Second-order lift map: vectorized qubit state -> vectorized total state.

    Built from (I + W)(|0><0| (x) rho_B)(I + W)^dag minus the g^2
    sigma_gamma sandwich, with W = -i g a^dag (x) sigma_gamma
    - g^2 (a^dag)^2 (x) (sigma_- sigma_+ / (kbar gamma_+) +
    sigma_+ sigma_- / (kbar gamma_-)) and sigma_gamma = sigma_-/gamma_-
    + sigma_+/gamma_+.  Returns a (2 n_tr)^2 x 4 matrix.
    """
    n_tr = p.n_tr
    a = annihilation(n_tr)
    ad = a.conj().T
    sigma_gamma = SIGMA_MINUS / p.gamma_minus + SIGMA_PLUS / p.gamma_plus
    W = -1j * p.g * np.kron(ad, sigma_gamma) - (p.g ** 2) * np.kron(
        ad @ ad,
        (SIGMA_MINUS @ SIGMA_PLUS) / (p.kappa_bar * p.gamma_plus)
        + (SIGMA_PLUS @ SIGMA_MINUS) / (p.kappa_bar * p.gamma_minus),
    )
    eye = np.eye(2 * n_tr, dtype=complex)
    one_plus_W = eye + W
    embed = rabi_reduced_basis(p).chi_R  # columns vec(|0><0| (x) E_mn)
    sg_full = np.kron(np.eye(n_tr, dtype=complex), sigma_gamma)
    kraus_part = sandwich_super(one_plus_W, one_plus_W.conj().T)
    counter = sandwich_super(sg_full, sg_full.conj().T)
    return (kraus_part - (p.g ** 2) * counter) @ embed
