"""Vectorized superoperators for Lindblad-type generators.

Convention: column stacking, ``vec(A)[j*d + i] = A[i, j]``, under which the
Hilbert-Schmidt inner product is the plain vector inner product,
``vec(A)^dag vec(B) = tr(A^dag B)``, and the map ``rho -> A rho B`` becomes
the matrix ``kron(B.T, A)``.  Bipartite systems order subsystem A first:
composite kets are indexed by (a, b) = a*d_B + b, i.e. operators combine as
``kron(op_A, op_B)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonHermitianH

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10


@dataclass(frozen=True)
class HilbertSpec:
    """Subsystem dimensions; ``dims=(d,)`` for a monopartite space."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) == 0 or any(d < 1 for d in self.dims):
            raise DimensionMismatch(f"invalid subsystem dims {self.dims}")

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))


def vectorize(A: np.ndarray) -> np.ndarray:
    """Column-stack a d x d operator into a d^2 vector."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square operator, got {A.shape}")
    return A.reshape(-1, order="F")


def devectorize(v: np.ndarray, d: int | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v, dtype=complex).ravel()
    if d is None:
        d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionMismatch(f"vector of length {v.size} is not d^2 with d={d}")
    return v.reshape((d, d), order="F")


def sandwich_super(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix of the map rho -> A rho B."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"incompatible shapes {A.shape}, {B.shape}")
    return np.kron(B.T, A)


def spre(A: np.ndarray) -> np.ndarray:
    """Matrix of rho -> A rho."""
    return np.kron(np.eye(A.shape[0]), A)


def spost(B: np.ndarray) -> np.ndarray:
    """Matrix of rho -> rho B."""
    return np.kron(B.T, np.eye(B.shape[0]))


def dissipator(L: np.ndarray) -> np.ndarray:
    """Matrix of D[L] rho = L rho L^dag - (L^dag L rho + rho L^dag L)/2."""
    LdL = L.conj().T @ L
    return sandwich_super(L, L.conj().T) - 0.5 * (spre(LdL) + spost(LdL))


def build_gksl(H: np.ndarray, jumps: list[tuple[float, np.ndarray]]) -> np.ndarray:
    """Generator of rho' = -i[H, rho] + sum_k rate_k D[L_k] rho.

    Rates multiply whole dissipators (they are not absorbed into the jump
    operators), and must be nonnegative.  H must be Hermitian to 1e-10
    relative to its norm.
    """
    H = np.asarray(H, dtype=complex)
    scale = max(1.0, np.linalg.norm(H))
    if np.linalg.norm(H - H.conj().T) > HERMITICITY_TOL * scale:
        raise NonHermitianH("Hamiltonian is not Hermitian to tolerance")
    gen = -1j * (spre(H) - spost(H))
    for rate, L in jumps:
        if rate < 0:
            raise ValueError(f"negative jump rate {rate}")
        L = np.asarray(L, dtype=complex)
        if L.shape != H.shape:
            raise DimensionMismatch(f"jump operator shape {L.shape} != {H.shape}")
        gen = gen + rate * dissipator(L)
    return gen


@dataclass(frozen=True)
class SplitLiouvillian:
    """Generator split L = L0 + eps * L1 on a given Hilbert space."""

    L0: np.ndarray
    L1: np.ndarray
    eps: float
    space: HilbertSpec = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        d2 = self.L0.shape[0]
        if self.space is None:
            object.__setattr__(self, "space", HilbertSpec((int(round(np.sqrt(d2))),)))
        d = self.space.total_dim
        if self.L0.shape != (d * d, d * d) or self.L1.shape != (d * d, d * d):
            raise DimensionMismatch("superoperator shapes do not match the space")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        for name, gen in (("L0", self.L0), ("L1", self.L1)):
            if not np.all(np.isfinite(gen)):
                raise ValueError(f"{name} has non-finite entries")
            err = trace_preservation_defect(gen, d)
            tol = TRACE_TOL * max(1.0, np.linalg.norm(gen, np.inf))
            if err > tol:
                raise ValueError(f"{name} is not trace preserving: defect {err:.2e}")

    @property
    def dim(self) -> int:
        return self.space.total_dim

    @property
    def full(self) -> np.ndarray:
        """The total generator L0 + eps * L1."""
        return self.L0 + self.eps * self.L1


def trace_preservation_defect(gen: np.ndarray, d: int) -> float:
    """max |vec(I)^dag . gen|, zero for any valid generator."""
    return float(np.max(np.abs(vectorize(np.eye(d)).conj() @ gen)))


def lift_superop(S: np.ndarray, dims: tuple[int, int], subsystem: int) -> np.ndarray:
    """Embed a subsystem superoperator into the composite vectorized space.

    ``subsystem=0`` lifts S_A to S_A (x) I_B, ``subsystem=1`` to I_A (x) S_B,
    in the operator-level sense, respecting the composite index (a, b) =
    a*d_B + b.  Works for arbitrary superoperators, not only sandwich forms.
    """
    dA, dB = dims
    ds = dims[subsystem]
    if S.shape != (ds * ds, ds * ds):
        raise DimensionMismatch(f"superoperator shape {S.shape} != {(ds*ds, ds*ds)}")
    d_other = dims[1 - subsystem]
    eye = np.eye(d_other)
    # Vectorized row index j*d + i splits (C order) into (j_A, j_B, i_A, i_B).
    S4 = S.reshape(ds, ds, ds, ds)  # axes (j_s, i_s, l_s, k_s)
    if subsystem == 0:
        out = np.einsum("jilk,bd,ac->jbialdkc", S4, eye, eye)
    else:
        out = np.einsum("jilk,bd,ac->bjaidlck", S4, eye, eye)
    d2 = dA * dB * dA * dB
    return out.reshape(d2, d2)


def compose_bipartite(
    L_A: np.ndarray,
    L_B: np.ndarray,
    L_int: np.ndarray,
    dims: tuple[int, int],
    eps: float = 1.0,
) -> SplitLiouvillian:
    """Assemble L0 = lift(L_A) + lift(L_B), L1 = L_int on the A (x) B space."""
    dA, dB = dims
    d2 = (dA * dB) ** 2
    if L_int.shape != (d2, d2):
        raise DimensionMismatch(f"interaction shape {L_int.shape} != {(d2, d2)}")
    L0 = lift_superop(L_A, dims, 0) + lift_superop(L_B, dims, 1)
    return SplitLiouvillian(L0=L0, L1=L_int, eps=eps, space=HilbertSpec(dims))


def partial_trace_A(rho: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Trace out subsystem A of an operator on A (x) B."""
    dA, dB = dims
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dA * dB, dA * dB):
        raise DimensionMismatch(f"operator shape {rho.shape} != {(dA*dB, dA*dB)}")
    return np.einsum("abac->bc", rho.reshape(dA, dB, dA, dB))
