"""Spectral splitting of a Liouvillian into surviving and fast modes.

Surviving modes sit on the imaginary axis (|Re lambda| below a tolerance),
fast modes are separated from it by the gap Delta = min_f Re(-lambda_f).
The reduced basis collects the surviving right eigenvectors as columns of
chi_R and the matching left eigenvectors as rows of chi_L^dag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousMatching, NoGap
from .numerics import EigenSystem, eig_biorthonormal

#: default surviving-mode tolerance, relative to the largest eigenvalue
REL_TOL_S = 1e-9
MIN_OVERLAP = 0.5


@dataclass(frozen=True)
class SpectralData:
    """Eigensystem of a generator with its surviving/fast classification."""

    eig: EigenSystem
    surviving: np.ndarray  # indices into eig.values, ordered by (Re desc, Im asc)
    fast: np.ndarray
    gap: float
    tol_s: float

    @property
    def n_surviving(self) -> int:
        return self.surviving.size


@dataclass(frozen=True)
class ReducedBasis:
    """chi_R columns |r_s>, chi_L_dag rows <l_s|; chi_L_dag chi_R = I."""

    chi_R: np.ndarray      # (d^2, n_s)
    chi_L_dag: np.ndarray  # (n_s, d^2)

    @property
    def n_surviving(self) -> int:
        return self.chi_R.shape[1]

    def projector(self) -> np.ndarray:
        """P_inv = chi_R chi_L_dag."""
        return self.chi_R @ self.chi_L_dag

    def complement(self) -> np.ndarray:
        """Q_inv = I - P_inv."""
        return np.eye(self.chi_R.shape[0]) - self.projector()


@dataclass(frozen=True)
class ModeMatching:
    """Bijection perm[perturbed index] = unperturbed index with its overlaps."""

    perm: np.ndarray
    overlaps: np.ndarray


def analyze(L: np.ndarray, tol_s: float | None = None) -> SpectralData:
    """Classify the modes of L and compute the spectral gap.

    A mode is surviving iff |Re lambda| <= tol_s (default 1e-9 * max|lambda|).
    The classification is rejected when any fast mode comes within 2*tol_s
    of the imaginary axis, which would make the split ambiguous.
    """
    es = eig_biorthonormal(L)
    lam = es.values
    if tol_s is None:
        scale = float(np.max(np.abs(lam))) if lam.size else 0.0
        tol_s = REL_TOL_S * max(scale, 1e-300)
    surv_mask = np.abs(lam.real) <= tol_s
    if not surv_mask.any():
        raise NoGap(f"no mode within {tol_s:g} of the imaginary axis")
    surviving = np.flatnonzero(surv_mask)
    fast = np.flatnonzero(~surv_mask)
    if fast.size == 0:
        gap = np.inf
    else:
        decay = -lam.real[fast]
        if np.min(decay) < 2.0 * tol_s:
            raise NoGap(
                f"fast mode at Re lambda = {-np.min(decay):.3e} is within "
                f"2*tol_s = {2*tol_s:.3e} of the axis"
            )
        gap = float(np.min(decay))
    return SpectralData(eig=es, surviving=surviving, fast=fast, gap=gap,
                        tol_s=float(tol_s))


def projector_Pinv(spec: SpectralData) -> np.ndarray:
    """P_inv = sum_s |r_s><l_s|, the projector onto the surviving eigenspaces."""
    S = spec.surviving
    return spec.eig.right[:, S] @ spec.eig.left_dag[S, :]


def reduced_basis(spec: SpectralData) -> ReducedBasis:
    """Collect the surviving eigenvector pairs, in sorted eigenvalue order."""
    S = spec.surviving
    return ReducedBasis(chi_R=spec.eig.right[:, S].copy(),
                        chi_L_dag=spec.eig.left_dag[S, :].copy())


def _degenerate_groups(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Cluster (sorted) eigenvalues into exact-degeneracy groups."""
    n = values.size
    unassigned = np.ones(n, dtype=bool)
    groups = []
    for j in range(n):
        if not unassigned[j]:
            continue
        members = np.flatnonzero(unassigned & (np.abs(values - values[j]) <= tol))
        unassigned[members] = False
        groups.append(members)
    return groups


def match_modes(spec0: SpectralData, eps_sys: EigenSystem) -> ModeMatching:
    """Assign perturbed modes to unperturbed ones, tracking the eps -> 0 limit.

    Unperturbed eigenvalues are clustered into exact-degeneracy groups (a
    perturbed eigenvector emerging from a degenerate subspace is an arbitrary
    mixture within it, so only the cluster is identifiable).  Perturbed modes
    are assigned to clusters by eigenvalue continuity, greedily in ascending
    distance with cluster capacities enforced, then paired inside a cluster
    in spectral order.  Assignments into surviving clusters are additionally
    validated by the left-eigenvector weight sum_s |<l_s|r_i>|^2, which must
    dominate; eigenvector weights are not used for fast clusters, where a
    strongly non-orthogonal eigenbasis makes them meaningless even at small
    eps.  The recorded overlap is the weight for surviving assignments and
    the distance-margin confidence d2/(d1 + d2) otherwise; both equal 1 at
    eps = 0 and drop to 0.5 when the assignment becomes a coin flip.

    Raises
    ------
    AmbiguousMatching
        If any recorded overlap is <= 0.5.
    """
    n = spec0.eig.dim
    if eps_sys.dim != n:
        raise AmbiguousMatching("eigensystem dimensions differ")
    lam0 = spec0.eig.values
    scale = float(np.max(np.abs(lam0))) if n else 0.0
    groups = _degenerate_groups(lam0, tol=max(1e-6 * scale, 1e-12))
    centers = np.array([lam0[g].mean() for g in groups])
    dist = np.abs(centers[:, None] - eps_sys.values[None, :])  # (group, i)
    order = np.argsort(dist, axis=None)
    group_of = np.full(n, -1, dtype=int)
    capacity = np.array([g.size for g in groups])
    assigned = 0
    for flat in order:
        g, i = divmod(int(flat), n)
        if group_of[i] >= 0 or capacity[g] == 0:
            continue
        group_of[i] = g
        capacity[g] -= 1
        assigned += 1
        if assigned == n:
            break
    # distance-margin confidence against the nearest other cluster
    d1 = dist[group_of, np.arange(n)]
    if len(groups) == 1:
        confidence = np.ones(n)
    else:
        masked = dist.copy()
        masked[group_of, np.arange(n)] = np.inf
        d2 = np.min(masked, axis=0)
        confidence = d2 / np.maximum(d1 + d2, 1e-300)
    # surviving assignments must also dominate in left-eigenvector weight
    surv_set = set(spec0.surviving.tolist())
    surv_groups = {gi for gi, g in enumerate(groups) if g[0] in surv_set}
    surv_weight = np.sum(
        np.abs(spec0.eig.left_dag[spec0.surviving, :] @ eps_sys.right) ** 2, axis=0
    )
    overlaps = confidence.copy()
    on_surviving = np.isin(group_of, list(surv_groups))
    overlaps[on_surviving] = np.minimum(confidence, surv_weight)[on_surviving]
    if np.any(overlaps <= MIN_OVERLAP):
        raise AmbiguousMatching(
            f"weakest matched overlap {float(np.min(overlaps)):.3f} <= {MIN_OVERLAP}"
        )
    perm = np.full(n, -1, dtype=int)
    for g_idx, members in enumerate(groups):
        # pair order-preservingly: both families are already in spectral order
        pert = np.flatnonzero(group_of == g_idx)
        perm[pert] = members
    return ModeMatching(perm=perm, overlaps=overlaps)


def surviving_perturbed(spec0: SpectralData, matching: ModeMatching) -> np.ndarray:
    """Perturbed-mode indices matched to the surviving set, in chi order."""
    inverse = np.empty_like(matching.perm)
    inverse[matching.perm] = np.arange(matching.perm.size)
    return inverse[spec0.surviving]


def identify_surviving(chi_L_dag: np.ndarray, right: np.ndarray,
                       min_weight: float = MIN_OVERLAP) -> np.ndarray:
    """Perturbed-eigenbasis columns spanning the surviving subspace.

    Selects the n_s columns carrying the largest weight sum_s |<l_s|r_i>|^2
    inside the surviving left-subspace and requires a clean separation from
    the runner-up.  Any such set spans the invariant subspace, so downstream
    constructions are insensitive to the order (which is by column index).
    Unlike a full-spectrum bijection this stays well conditioned when deep
    fast modes mix strongly.

    Raises
    ------
    AmbiguousMatching
        If the selected weights do not separate cleanly from the rest.
    """
    n_s = chi_L_dag.shape[0]
    weight = np.sum(np.abs(chi_L_dag @ right) ** 2, axis=0)
    picked = np.sort(np.argsort(weight)[-n_s:])
    runner_up = np.partition(weight, -n_s - 1)[-n_s - 1] if weight.size > n_s else 0.0
    if np.min(weight[picked]) <= min_weight or runner_up > min_weight:
        raise AmbiguousMatching(
            "surviving perturbed modes are not cleanly separated "
            f"(weights {np.sort(weight)[-n_s - 1:]})"
        )
    return picked
