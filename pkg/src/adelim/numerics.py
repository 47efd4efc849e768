"""Dense complex linear-algebra substrate.

Biorthonormal eigendecompositions of non-Hermitian matrices, matrix
exponentials, and log-linear exponential fits.  Everything here operates on
plain ``numpy.ndarray`` objects; all returned containers are immutable
dataclasses holding arrays that callers must not mutate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InsufficientSamples, NonDiagonalizable

#: condition-number threshold above which a matrix is treated as defective
COND_MAX = 1e12


def _as_square(M: np.ndarray) -> np.ndarray:
    M = np.ascontiguousarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return M


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues with biorthonormal right/left eigenvector families.

    ``left_dag`` is the inverse of ``right``, so the normalization
    <l_i|r_j> = delta_ij holds by construction.  Eigenvalues are sorted by
    descending real part, then ascending imaginary part.
    """

    values: np.ndarray    # (n,) complex
    right: np.ndarray     # (n, n), columns are right eigenvectors
    left_dag: np.ndarray  # (n, n), rows are conjugated left eigenvectors

    @property
    def dim(self) -> int:
        return self.values.size

    def propagator(self, t: float) -> np.ndarray:
        """exp(M t) assembled from the spectral decomposition."""
        return (self.right * np.exp(self.values * t)) @ self.left_dag

    def reconstruct(self) -> np.ndarray:
        """Rebuild the original matrix (round-trip check)."""
        return (self.right * self.values) @ self.left_dag


def eig_biorthonormal(M: np.ndarray, cond_max: float = COND_MAX) -> EigenSystem:
    """Diagonalize M with an exactly biorthonormal left/right pair.

    The left family is obtained by inverting the right-eigenvector matrix
    rather than from a second eigensolve, which enforces <l_i|r_j> = delta_ij
    up to roundoff.  The 1-norm condition number of the right-eigenvector
    matrix is used to detect (numerically) defective input.

    Raises
    ------
    NonDiagonalizable
        If cond_1(right) exceeds ``cond_max``.
    """
    M = _as_square(M)
    values, right = sla.eig(M)
    order = np.lexsort((values.imag, -values.real))
    values = values[order]
    right = right[:, order]
    try:
        left_dag = np.linalg.inv(right)
    except np.linalg.LinAlgError as exc:
        raise NonDiagonalizable("right-eigenvector matrix is singular") from exc
    cond1 = np.linalg.norm(right, 1) * np.linalg.norm(left_dag, 1)
    if not np.isfinite(cond1) or cond1 > cond_max:
        raise NonDiagonalizable(
            f"right-eigenvector matrix condition {cond1:.3e} exceeds {cond_max:.1e}"
        )
    return EigenSystem(values=values, right=right, left_dag=left_dag)


def expm(M: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(M t), spectral when M is diagonalizable, scaling-and-squaring else."""
    M = _as_square(M)
    try:
        return eig_biorthonormal(M).propagator(t)
    except NonDiagonalizable:
        return sla.expm(M * t)


@dataclass(frozen=True)
class ExpFit:
    """Result of a log-linear fit y ~= amplitude * exp(-rate * t)."""

    amplitude: float
    rate: float
    window: tuple[float, float]
    residual: float
    n_samples: int

    def predict(self, t):
        return self.amplitude * np.exp(-self.rate * np.asarray(t))


def fit_exponential(
    t: np.ndarray,
    y: np.ndarray,
    window: tuple[float, float],
    floor: float = 1e-13,
) -> ExpFit:
    """Least-squares fit of ln y = ln a - b t over samples inside ``window``.

    Samples with y <= floor are excluded so that values at the machine noise
    level do not pollute the slope.  Returns the fitted (a, b) together with
    the RMS residual in log space.

    Raises
    ------
    InsufficientSamples
        If fewer than two usable points remain.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape:
        raise ValueError("t and y must have the same shape")
    t_min, t_max = window
    keep = (t >= t_min) & (t <= t_max) & (y > floor)
    if np.count_nonzero(keep) < 2:
        raise InsufficientSamples(
            f"need >= 2 samples in window {window} above floor {floor:g}, "
            f"got {np.count_nonzero(keep)}"
        )
    ts, ln_y = t[keep], np.log(y[keep])
    # ln y = c0 + c1 t, so a = exp(c0), b = -c1
    c1, c0 = np.polyfit(ts, ln_y, 1)
    pred = c0 + c1 * ts
    rms = float(np.sqrt(np.mean((ln_y - pred) ** 2)))
    return ExpFit(
        amplitude=float(np.exp(c0)),
        rate=float(-c1),
        window=(float(t_min), float(t_max)),
        residual=rms,
        n_samples=int(np.count_nonzero(keep)),
    )
