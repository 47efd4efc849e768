"""Adiabatic elimination of fast-decaying modes in Lindblad-type dynamics.

The reduction splits a generator L = L0 + eps*L1 whose free part has a
spectral gap, projects onto the slow (surviving) eigenspaces, and computes
the maps (K, F) with K F = L K: F generates the reduced dynamics and K lifts
reduced coordinates back to the full density operator.  Exact time-dependent
projection objects, their perturbative expansions, two worked models, and
the reproduction experiments live in the submodules.
"""

from . import errors, experiments, liouvillian, models, numerics, perturb, spectral, tcl
from .liouvillian import (
    HilbertSpec,
    SplitLiouvillian,
    build_gksl,
    compose_bipartite,
    devectorize,
    partial_trace_A,
    sandwich_super,
    vectorize,
)
from .numerics import EigenSystem, ExpFit, eig_biorthonormal, expm, fit_exponential
from .spectral import ReducedBasis, SpectralData, analyze, match_modes, projector_Pinv, reduced_basis
from .tcl import (
    ReducedModel,
    TclContext,
    build_context,
    evolve_reduced,
    f_tcl_t,
    j_inv_t,
    p_inv_asymptotic,
    p_inv_t,
    reduce,
    sigma_inv,
)

__version__ = "0.1.0"
