"""Reproduction experiments: full-system oracle integration, relaxation-norm
fits, truncation studies, Choi positivity, and the Laplace-method comparison.

Each experiment is a pure function config -> report.  Reports carry named
time series, exponential fits, scalars, and an explicit pass/fail entry for
every declared check.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import models, perturb, spectral, tcl
from .errors import AdelimError
from .liouvillian import build_gksl, devectorize, vectorize
from .numerics import ExpFit, eig_biorthonormal, fit_exponential

# expected fit coefficients for the truncation study, keyed by Fock cutoff
REFERENCE_TRUNCATION_TABLE = {
    10: {"a_P": 0.655, "a_J": 19.1, "b_P": 0.98193, "b_J": 1.0066},
    20: {"a_P": 0.926, "a_J": 39.1, "b_P": 0.98193, "b_J": 1.0063},
    30: {"a_P": 1.13, "a_J": 59.0, "b_P": 0.98193, "b_J": 1.0061},
}
# expected state-level fit, independent of the cutoff
REFERENCE_STATE_FIT = {"a": 0.147, "b": 1.001}


# ---------------------------------------------------------------------------
# config / report containers


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        if self.grid.get("dt", 1.0) <= 0:
            raise ValueError("grid dt must be positive")
        if "t_max" in self.grid and "t_min" in self.fit:
            if self.grid["t_max"] <= self.fit["t_min"]:
                raise ValueError("grid t_max must exceed the fit window start")

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model,
            "grid": self.grid,
            "fit": self.fit,
            "sweep": self.sweep,
            "tolerances": self.tolerances,
            "threads": self.threads,
        }


@dataclass(frozen=True)
class CheckResult:
    value: float
    passed: bool
    detail: str = ""


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    series: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    fits: dict[str, ExpFit] = field(default_factory=dict)
    scalars: dict[str, float] = field(default_factory=dict)
    checks: dict[str, CheckResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def add_check(self, name: str, value: float, passed: bool, detail: str = ""):
        self.checks[name] = CheckResult(value=float(value), passed=bool(passed),
                                        detail=detail)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "fits": {
                k: {
                    "amplitude": f.amplitude,
                    "rate": f.rate,
                    "window": list(f.window),
                    "residual": f.residual,
                    "n_samples": f.n_samples,
                }
                for k, f in self.fits.items()
            },
            "scalars": self.scalars,
            "checks": {
                k: {"value": c.value, "passed": c.passed, "detail": c.detail}
                for k, c in self.checks.items()
            },
            "passed": self.passed,
        }


EXPERIMENTS = (
    "prop-verify",
    "rabi-truncation",
    "choi",
    "laplace-compare",
    "equivalence",
)


def default_config(experiment: str) -> ExperimentConfig:
    """Built-in parameter sets reproducing the reference runs."""
    if experiment == "prop-verify":
        return ExperimentConfig(
            experiment=experiment,
            model={"name": "three_level",
                   "params": {"omega1": 0.5, "omega_e": 1.0, "Gamma0": 0.5,
                              "Gamma1": 0.5, "g0": 0.1, "g1": 0.1}},
            grid={"t_max": 14.0, "dt": 0.02},
            fit={"t_min": 2.0, "t_max": 12.0, "floor": 1e-13},
            tolerances={"slope_rel": 0.05, "ratio_lo": 0.10, "ratio_hi": 0.15},
        )
    if experiment == "rabi-truncation":
        return ExperimentConfig(
            experiment=experiment,
            model={"name": "rabi",
                   "params": {"omega_ph": 1.0, "omega_eg": 1.0, "kappa": 1.0,
                              "g": 0.05}},
            grid={"t_max": 50.0, "dt": 0.1, "rk4_dt": 1e-3},
            fit={"t_min": 5.0, "t_max": 30.0, "floor": 1e-13},
            sweep=[10, 20, 30],
            tolerances={"amp_rel": 0.05, "rate_abs": 1e-3,
                        "state_amp_rel": 0.05, "state_rate_abs": 1e-2,
                        "discrepancy_max": 1e-12, "projector_identity_max": 1e-12},
        )
    if experiment == "choi":
        return ExperimentConfig(
            experiment=experiment,
            model={"name": "rabi",
                   "params": {"omega_ph": 1.0, "omega_eg": 1.0, "kappa": 1.0,
                              "g": 0.1}},
            grid={"t_max": 10.0, "dt": 1e-3},
            tolerances={"min_eig": -1e-9},
        )
    if experiment == "laplace-compare":
        return ExperimentConfig(
            experiment=experiment,
            model={
                "three_level": {"omega1": 0.5, "omega_e": 1.0,
                                "Gamma0": 0.5, "Gamma1": 0.5},
                "rabi": {"omega_ph": 1.0, "omega_eg": 0.0, "kappa": 1.0,
                         "n_tr": 8},
            },
            grid={"t_max": 1.0, "dt": 1.0},
            sweep=[0.02, 0.04, 0.08],
            tolerances={"exponent_three_level": 2.0, "exponent_rabi": 4.0,
                        "exponent_abs": 0.3, "eps0_max": 1e-12},
        )
    if experiment == "equivalence":
        return ExperimentConfig(
            experiment=experiment,
            model={"name": "three_level",
                   "params": {"omega1": 0.5, "omega_e": 1.0, "Gamma0": 0.5,
                              "Gamma1": 0.5, "g0": 0.1, "g1": 0.1}},
            grid={"t_max": 12.0, "dt": 0.02, "rk4_dt": 1e-3},
            fit={"t_min": 2.0, "t_max": 12.0, "floor": 1e-13},
            tolerances={"invariance": 1e-8, "gauge": 1e-8, "prop2": 1e-9,
                        "inmanifold": 1e-8, "quench_rate_rel": 0.10},
        )
    raise ValueError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")


def load_config(path: str | None, experiment: str, threads: int = 1) -> ExperimentConfig:
    """Defaults for ``experiment``, overlaid with the JSON document at path."""
    cfg = default_config(experiment)
    cfg.threads = threads
    if path is None:
        return cfg
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("experiment", experiment) != experiment:
        raise ValueError(
            f"config is for {doc['experiment']!r}, requested {experiment!r}"
        )
    for key in ("model", "grid", "fit", "tolerances"):
        if key in doc:
            merged = dict(getattr(cfg, key))
            merged.update(doc[key])
            setattr(cfg, key, merged)
    if "sweep" in doc:
        cfg.sweep = list(doc["sweep"])
    if "threads" in doc:
        cfg.threads = int(doc["threads"])
    return cfg


# ---------------------------------------------------------------------------
# full-system oracle integrator


def _as_operator(L):
    """Sparse view for generators that are mostly zeros (large models)."""
    if sp.issparse(L):
        return L
    if L.shape[0] >= 256:
        density = np.count_nonzero(L) / L.size
        if density < 0.2:
            return sp.csr_matrix(L)
    return L


def _rk4_vec(L, v0: np.ndarray, grid: np.ndarray, dt: float) -> np.ndarray:
    """RK4 propagation of v' = L v, sampled at every grid point."""
    A = _as_operator(L)
    v = np.asarray(v0, dtype=complex).copy()
    out = np.empty((len(grid), v.size), dtype=complex)
    out[0] = v
    for k in range(1, len(grid)):
        span = grid[k] - grid[k - 1]
        nsub = max(1, int(np.ceil(span / dt - 1e-12)))
        h = span / nsub
        for _ in range(nsub):
            k1 = A @ v
            k2 = A @ (v + 0.5 * h * k1)
            k3 = A @ (v + 0.5 * h * k2)
            k4 = A @ (v + h * k3)
            v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k] = v
    return out


def integrate_master(L, rho0: np.ndarray, grid: np.ndarray, dt: float = 1e-3) -> np.ndarray:
    """RK4 trajectory of rho' = L rho from a unit-trace Hermitian state.

    Returns the density operators at the grid points, shape (T, d, d).
    Trace conservation is monitored and a gross violation (beyond 1e-6,
    signalling an unstable step size) raises.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    if abs(np.trace(rho0) - 1.0) > 1e-10:
        raise ValueError(f"initial state trace {np.trace(rho0)} != 1")
    if np.linalg.norm(rho0 - rho0.conj().T) > 1e-10 * max(1.0, np.linalg.norm(rho0)):
        raise ValueError("initial state is not Hermitian")
    grid = np.asarray(grid, dtype=float)
    traj = _rk4_vec(L, vectorize(rho0), grid, dt)
    # a C-order reshape of a column-stacked row gives rho^T; transpose back
    rhos = traj.reshape(len(grid), d, d).transpose(0, 2, 1)
    drift = float(np.max(np.abs(np.einsum("tii->t", rhos) - 1.0)))
    if drift > 1e-6:
        raise ArithmeticError(
            f"trace drift {drift:.2e}; dt={dt} too large for this generator"
        )
    return rhos


def make_grid(t_max: float, dt: float) -> np.ndarray:
    return np.arange(0.0, t_max + 0.5 * dt, dt)


def _fit_or_none(t, y, window, floor) -> ExpFit | None:
    try:
        return fit_exponential(t, y, window, floor)
    except AdelimError:
        return None


# ---------------------------------------------------------------------------
# experiment: relaxation of the projector and inhomogeneity norms


def run_prop_verify(cfg: ExperimentConfig) -> ExperimentReport:
    """Exponential decay of ||P(t) - P^(eps)||_F and ||J(t)||_F.

    Fits both norms over the configured window and checks that the rates sit
    within 5% of the gap and that the amplitude ratio is of order eps/gap.
    """
    report = ExperimentReport("prop-verify", cfg.to_dict())
    p = models.ThreeLevelParams(**cfg.model["params"])
    sys = models.three_level(p)
    ctx = tcl.build_context(sys)
    gap = ctx.gap
    ts = make_grid(cfg.grid["t_max"], cfg.grid["dt"])
    report.scalars["gap"] = gap
    report.scalars["eps"] = sys.eps
    report.scalars["perturbation_over_gap"] = (
        sys.eps * np.linalg.norm(sys.L1) / gap
    )
    stream = tcl.stream_from_context(ctx)
    dP, J = stream.series(ts)
    report.series["dP_norm"] = (ts, dP)
    report.series["J_norm"] = (ts, J)
    if sys.eps == 0.0:
        # dP vanishes identically; nothing to fit
        report.scalars["max_dP"] = float(np.max(dP))
        report.add_check("dP_identically_zero", float(np.max(dP)),
                         np.max(dP) < 1e-12, "eps = 0 short-circuit")
        return report
    window = (cfg.fit["t_min"], cfg.fit["t_max"])
    floor = cfg.fit["floor"]
    fit_P = fit_exponential(ts, dP, window, floor)
    fit_J = fit_exponential(ts, J, window, floor)
    report.fits["dP_norm"] = fit_P
    report.fits["J_norm"] = fit_J
    bP, bJ = fit_P.rate / gap, fit_J.rate / gap
    ratio = fit_P.amplitude / fit_J.amplitude
    report.scalars.update({"b_P_over_gap": bP, "b_J_over_gap": bJ,
                           "a_P": fit_P.amplitude, "a_J": fit_J.amplitude,
                           "amplitude_ratio": ratio})
    tol = cfg.tolerances
    report.add_check("rate_P_near_gap", bP, abs(bP - 1.0) <= tol["slope_rel"],
                     f"|b_P/gap - 1| <= {tol['slope_rel']}")
    report.add_check("rate_J_near_gap", bJ, abs(bJ - 1.0) <= tol["slope_rel"],
                     f"|b_J/gap - 1| <= {tol['slope_rel']}")
    report.add_check("amplitude_ratio_in_range", ratio,
                     tol["ratio_lo"] <= ratio <= tol["ratio_hi"],
                     f"a_P/a_J in [{tol['ratio_lo']}, {tol['ratio_hi']}]")
    return report


# ---------------------------------------------------------------------------
# experiment: Fock-truncation study


def _rabi_gap(p: models.RabiParams) -> float:
    """Gap of the composite free generator = decay rate of the oscillator part.

    Uses plain eigenvalues: the oscillator eigenbasis conditioning grows
    combinatorially with the cutoff, but the eigenvalues near the axis stay
    accurate, and only they enter the gap.
    """
    a = models.annihilation(p.n_tr)
    L_A = build_gksl(p.omega_ph * (a.conj().T @ a), [(p.kappa, a)])
    lam = np.linalg.eigvals(L_A)
    tol = 1e-9 * np.max(np.abs(lam))
    decay = -lam.real[np.abs(lam.real) > tol]
    return float(np.min(decay))


def _truncation_point(p: models.RabiParams, cfg: ExperimentConfig):
    """All per-cutoff series and fits for the truncation study."""
    n_tr = p.n_tr
    tag = f"ntr{n_tr}"
    sys = models.rabi(p)
    basis = models.rabi_reduced_basis(p)
    gap = _rabi_gap(p)
    # the generator family is diagonalizable with an analytically known
    # spectrum; its eigenbasis conditioning grows combinatorially with the
    # cutoff, so the defectiveness guard is lifted here.  Deep-mode noise is
    # suppressed by e^{lambda_f t} everywhere the fits look.
    eig_full = eig_biorthonormal(sys.full, cond_max=np.inf)
    cols = spectral.identify_surviving(basis.chi_L_dag, eig_full.right)
    R_S = eig_full.right[:, cols]
    N = basis.chi_L_dag @ R_S
    stream = tcl.SuperopNormStream(eig_full.values, eig_full.right,
                                   eig_full.left_dag, basis, R_S, N)
    del eig_full

    window = (cfg.fit["t_min"], cfg.fit["t_max"])
    floor = cfg.fit["floor"]
    ts_super = make_grid(cfg.fit["t_max"], cfg.grid["dt"])
    dP, J = stream.series(ts_super)
    del stream
    fit_P = fit_exponential(ts_super, dP, window, floor)
    fit_J = fit_exponential(ts_super, J, window, floor)

    # state-level study from rho(0) = |0><0| (x) |e><e|
    d = 2 * n_tr
    rho0 = np.zeros((d, d), dtype=complex)
    rho0[1, 1] = 1.0  # composite index (a=0, b=e) = 1
    ts_state = make_grid(cfg.grid["t_max"], cfg.grid["dt"])
    rk4_dt = cfg.grid.get("rk4_dt", 1e-3)
    Lfull = sys.full
    traj = _rk4_vec(Lfull, vectorize(rho0), ts_state, rk4_dt)
    # ||rho - P^(eps) rho|| equals ||dP(t) rho(t)|| here since rho = P(t) rho
    coords = traj @ basis.chi_L_dag.T                 # row i holds chi_L^dag rho(t_i)
    proj_asym = (R_S @ np.linalg.solve(N, coords.T)).T
    state_dP = np.linalg.norm(traj - proj_asym, axis=1)
    fit_state = fit_exponential(ts_state, state_dP, window, floor)

    # projector identity rho(t) = P(t) rho(t), with P(t) from propagated chi_R
    Wtraj = np.empty((len(ts_state), d * d, 4), dtype=complex)
    for k in range(4):
        Wtraj[:, :, k] = _rk4_vec(Lfull, basis.chi_R[:, k], ts_state, rk4_dt)
    proj_resid = np.empty(len(ts_state))
    for i in range(len(ts_state)):
        A = basis.chi_L_dag @ Wtraj[i]
        proj_resid[i] = np.linalg.norm(traj[i] - Wtraj[i] @ np.linalg.solve(A, coords[i]))
    max_proj_resid = float(np.max(proj_resid))
    del Wtraj

    # truncation convergence against the cutoff enlarged by 5
    p_big = models.RabiParams(omega_ph=p.omega_ph, omega_eg=p.omega_eg,
                              kappa=p.kappa, g=p.g, n_tr=n_tr + 5)
    sys_big = models.rabi(p_big)
    d_big = 2 * p_big.n_tr
    rho0_big = np.zeros((d_big, d_big), dtype=complex)
    rho0_big[1, 1] = 1.0
    traj_big = _rk4_vec(sys_big.full, vectorize(rho0_big), ts_state, rk4_dt)
    del sys_big
    discrepancy = 0.0
    for i in range(len(ts_state)):
        small = devectorize(traj[i], d)
        big = devectorize(traj_big[i], d_big)[:d, :d]  # common low-Fock block
        discrepancy = max(discrepancy, float(np.max(np.abs(small - big))))

    out = {
        "tag": tag, "gap": gap,
        "ts_super": ts_super, "dP": dP, "J": J,
        "ts_state": ts_state, "state_dP": state_dP,
        "fit_P": fit_P, "fit_J": fit_J, "fit_state": fit_state,
        "max_proj_resid": max_proj_resid, "discrepancy": discrepancy,
    }
    return out


def run_rabi_truncation(cfg: ExperimentConfig) -> ExperimentReport:
    """Truncation-dimension study of the superoperator and state-level decays.

    For each Fock cutoff in the sweep, fits a_P e^{-b_P t Delta} to
    ||dP(t)||_F and a_J e^{-b_J t Delta} to ||J(t)||_F, plus the cutoff-
    independent state-level decay; also measures the density-operator
    discrepancy against a cutoff enlarged by 5 and the projector identity
    rho(t) = P(t) rho(t).
    """
    report = ExperimentReport("rabi-truncation", cfg.to_dict())
    base = dict(cfg.model["params"])
    cutoffs = [int(n) for n in (cfg.sweep or [10])]
    params = [models.RabiParams(n_tr=n, **base) for n in cutoffs]

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda p: _truncation_point(p, cfg), params))
    else:
        results = [_truncation_point(p, cfg) for p in params]

    tol = cfg.tolerances
    bP_vals, bJ_vals, state_fits = [], [], []
    aP_vals, aJ_vals = [], []
    for n, res in zip(cutoffs, results):
        tag = res["tag"]
        gap = res["gap"]
        report.series[f"dP_norm_{tag}"] = (res["ts_super"], res["dP"])
        report.series[f"J_norm_{tag}"] = (res["ts_super"], res["J"])
        report.series[f"state_dP_{tag}"] = (res["ts_state"], res["state_dP"])
        report.fits[f"dP_norm_{tag}"] = res["fit_P"]
        report.fits[f"J_norm_{tag}"] = res["fit_J"]
        report.fits[f"state_dP_{tag}"] = res["fit_state"]
        bP = res["fit_P"].rate / gap
        bJ = res["fit_J"].rate / gap
        b_state = res["fit_state"].rate / gap
        report.scalars[f"a_P_{tag}"] = res["fit_P"].amplitude
        report.scalars[f"a_J_{tag}"] = res["fit_J"].amplitude
        report.scalars[f"b_P_{tag}"] = bP
        report.scalars[f"b_J_{tag}"] = bJ
        report.scalars[f"state_a_{tag}"] = res["fit_state"].amplitude
        report.scalars[f"state_b_{tag}"] = b_state
        report.scalars[f"discrepancy_{tag}"] = res["discrepancy"]
        report.scalars[f"projector_identity_{tag}"] = res["max_proj_resid"]
        bP_vals.append(bP)
        bJ_vals.append(bJ)
        aP_vals.append(res["fit_P"].amplitude)
        aJ_vals.append(res["fit_J"].amplitude)
        state_fits.append((res["fit_state"].amplitude, b_state))
        if n in REFERENCE_TRUNCATION_TABLE and n == min(cutoffs):
            ref = REFERENCE_TRUNCATION_TABLE[n]
            report.add_check(
                f"a_P_{tag}", res["fit_P"].amplitude,
                abs(res["fit_P"].amplitude - ref["a_P"]) <= tol["amp_rel"] * ref["a_P"],
                f"within {tol['amp_rel']:.0%} of {ref['a_P']}")
            report.add_check(
                f"a_J_{tag}", res["fit_J"].amplitude,
                abs(res["fit_J"].amplitude - ref["a_J"]) <= tol["amp_rel"] * ref["a_J"],
                f"within {tol['amp_rel']:.0%} of {ref['a_J']}")
            report.add_check(
                f"b_P_{tag}", bP, abs(bP - ref["b_P"]) <= tol["rate_abs"],
                f"within {tol['rate_abs']} of {ref['b_P']}")
            report.add_check(
                f"b_J_{tag}", bJ, abs(bJ - ref["b_J"]) <= tol["rate_abs"],
                f"within {tol['rate_abs']} of {ref['b_J']}")
        report.add_check(
            f"discrepancy_{tag}", res["discrepancy"],
            res["discrepancy"] <= tol["discrepancy_max"],
            f"density-operator truncation discrepancy <= {tol['discrepancy_max']:g}")
        report.add_check(
            f"projector_identity_{tag}", res["max_proj_resid"],
            res["max_proj_resid"] <= tol["projector_identity_max"],
            f"max ||rho - P(t) rho|| <= {tol['projector_identity_max']:g}")
        report.add_check(
            f"state_a_{tag}", res["fit_state"].amplitude,
            abs(res["fit_state"].amplitude - REFERENCE_STATE_FIT["a"])
            <= tol["state_amp_rel"] * REFERENCE_STATE_FIT["a"],
            f"within {tol['state_amp_rel']:.0%} of {REFERENCE_STATE_FIT['a']}")
        report.add_check(
            f"state_b_{tag}", b_state,
            abs(b_state - REFERENCE_STATE_FIT["b"]) <= tol["state_rate_abs"],
            f"within {tol['state_rate_abs']} of {REFERENCE_STATE_FIT['b']}")

    if len(cutoffs) > 1:
        spread_P = max(bP_vals) - min(bP_vals)
        spread_J = max(bJ_vals) - min(bJ_vals)
        report.scalars["b_P_spread"] = spread_P
        report.scalars["b_J_spread"] = spread_J
        report.add_check("b_P_stable", spread_P, spread_P <= tol["rate_abs"],
                         f"spread across cutoffs <= {tol['rate_abs']}")
        report.add_check("b_J_stable", spread_J, spread_J <= tol["rate_abs"],
                         f"spread across cutoffs <= {tol['rate_abs']}")
        grows = all(x < y for x, y in zip(aP_vals, aP_vals[1:])) and all(
            x < y for x, y in zip(aJ_vals, aJ_vals[1:]))
        report.add_check("amplitudes_grow_with_cutoff", float(grows), grows,
                         "a_P and a_J increase with the cutoff")
    return report


# ---------------------------------------------------------------------------
# experiment: Choi positivity of the time-dependent reduced propagator


def run_choi(cfg: ExperimentConfig) -> ExperimentReport:
    """Complete positivity of the time-dependent second-order propagator.

    Integrates the 4x4 matrix ODE X' = F(t) X (X(0) = I) with RK4, assembles
    the Choi matrix at every step, and records its smallest eigenvalue; also
    reports the asymptotic coefficient-matrix eigenvalues (one negative when
    the qubit splitting is nonzero).
    """
    report = ExperimentReport("choi", cfg.to_dict())
    pp = dict(cfg.model["params"])
    pp.setdefault("n_tr", 2)  # oscillator space is not used by the analytic maps
    p = models.RabiParams(**pp)
    dt = cfg.grid["dt"]
    n_steps = int(round(cfg.grid["t_max"] / dt))
    ts = np.arange(n_steps + 1) * dt
    # RK4 needs F on the half grid as well
    F_cache = [models.rabi_analytic_F(p, 0.5 * dt * k) for k in range(2 * n_steps + 1)]
    X = np.eye(4, dtype=complex)
    props = np.empty((n_steps + 1, 4, 4), dtype=complex)
    props[0] = X
    for k in range(n_steps):
        F0, Fh, F1 = F_cache[2 * k], F_cache[2 * k + 1], F_cache[2 * k + 2]
        k1 = F0 @ X
        k2 = Fh @ (X + 0.5 * dt * k1)
        k3 = Fh @ (X + 0.5 * dt * k2)
        k4 = F1 @ (X + dt * k3)
        X = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        props[k + 1] = X
    # Choi matrix: C = sum_pq |p><q| (x) Lambda(|p><q|)
    choi = np.zeros((n_steps + 1, 4, 4), dtype=complex)
    for pq in range(4):
        m, n = pq % 2, pq // 2  # column index of vec(|m><n|)
        images = props[:, :, n * 2 + m].reshape(-1, 2, 2).transpose(0, 2, 1)
        E = np.zeros((2, 2))
        E[m, n] = 1.0
        choi += np.einsum("ab,tcd->tacbd", E, images).reshape(-1, 4, 4)
    choi = 0.5 * (choi + choi.conj().transpose(0, 2, 1))
    min_eig = np.linalg.eigvalsh(choi)[:, 0]
    report.series["choi_min_eig"] = (ts, min_eig)
    global_min = float(np.min(min_eig))
    report.scalars["choi_min_eig_global"] = global_min
    k_hi, k_lo = models.k_matrix_eigenvalues(p)
    report.scalars["k_matrix_eig_hi"] = k_hi
    report.scalars["k_matrix_eig_lo"] = k_lo
    tol = cfg.tolerances
    report.add_check("choi_positive", global_min, global_min >= tol["min_eig"],
                     f"min Choi eigenvalue >= {tol['min_eig']:g}")
    n_negative = int(k_hi < 0) + int(k_lo < 0)
    expect_neg = 1 if p.omega_eg != 0 else 0
    report.add_check("k_matrix_negative_count", float(n_negative),
                     n_negative == expect_neg,
                     "asymptotic coefficient matrix eigenvalue signs")
    return report


# ---------------------------------------------------------------------------
# experiment: Laplace-method generator vs the exact reduced generator


def _laplace_point(name: str, params: dict, coupling: float) -> tuple[float, float]:
    """(leading, resummed) Laplace-vs-exact generator differences at one coupling."""
    if name == "three_level":
        p = models.ThreeLevelParams(g0=coupling, g1=coupling, **params)
        sys = models.three_level(p)
    elif name == "rabi":
        p = models.RabiParams(g=coupling, **params)
        sys = models.rabi(p)
    else:
        raise ValueError(f"unknown model {name!r}")
    ctx = tcl.build_context(sys)
    F_exact = tcl.reduce(ctx).F
    basis_op = perturb.eigenbasis_op(sys, ctx.spec0)
    d_leading = np.linalg.norm(
        perturb.laplace_generator(basis_op, include_M1=False) - F_exact)
    d_resummed = np.linalg.norm(
        perturb.laplace_generator(basis_op, include_M1=True) - F_exact)
    return float(d_leading), float(d_resummed)


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_laplace_compare(cfg: ExperimentConfig) -> ExperimentReport:
    """Coupling-scaling of the Laplace-vs-exact reduced-generator difference.

    The leading Laplace-domain generator L_eff(z = 0) misses the exact
    reduction at eps^2 when surviving eigenvalues are nonzero (three-level)
    and at eps^4 when they all vanish (Rabi at zero qubit splitting); those
    exponents are fitted over the sweep and checked.  The resummed variant
    [I - M1]^{-1} M0 is fitted as well and reported as a scalar: on the
    transverse-coupled model P L1 P = 0 cancels its order-4 and order-5
    mismatch, pushing the first disagreement to eps^6.
    """
    report = ExperimentReport("laplace-compare", cfg.to_dict())
    sweep = np.asarray(cfg.sweep, dtype=float)
    tol = cfg.tolerances
    jobs = [("three_level", cfg.model["three_level"]),
            ("rabi", cfg.model["rabi"])]

    def one_model(job):
        name, params = job
        return [_laplace_point(name, params, g) for g in sweep]

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            diffs = list(pool.map(one_model, jobs))
    else:
        diffs = [one_model(j) for j in jobs]

    for (name, params), dvals in zip(jobs, diffs):
        leading = np.asarray([d[0] for d in dvals])
        resummed = np.asarray([d[1] for d in dvals])
        report.series[f"generator_difference_{name}"] = (sweep, leading)
        report.series[f"generator_difference_resummed_{name}"] = (sweep, resummed)
        slope = _loglog_slope(sweep, leading)
        report.scalars[f"exponent_{name}"] = slope
        report.scalars[f"exponent_resummed_{name}"] = _loglog_slope(sweep, resummed)
        expected = tol[f"exponent_{name}"]
        report.add_check(
            f"exponent_{name}", slope,
            abs(slope - expected) <= tol["exponent_abs"],
            f"log-log slope within {tol['exponent_abs']} of {expected}")

    # decoupled limit: both generators collapse to the free reduced generator
    p0 = models.ThreeLevelParams(g0=0.0, g1=0.0, **cfg.model["three_level"])
    sys0 = models.three_level(p0)
    ctx0 = tcl.build_context(sys0)
    F_exact0 = tcl.reduce(ctx0).F
    F_lap0 = perturb.laplace_generator(perturb.eigenbasis_op(sys0, ctx0.spec0))
    eps0_diff = float(np.linalg.norm(F_lap0 - F_exact0))
    report.scalars["eps0_difference"] = eps0_diff
    report.add_check("eps0_difference", eps0_diff, eps0_diff <= tol["eps0_max"],
                     f"generators coincide at eps = 0 to {tol['eps0_max']:g}")
    return report


# ---------------------------------------------------------------------------
# experiment: exact-structure identities and trajectory equivalence


def _build_model(model_cfg: dict):
    name = model_cfg["name"]
    params = model_cfg["params"]
    if name == "three_level":
        p = models.ThreeLevelParams(**params)
        sys = models.three_level(p)
        # superposition (|0> + |e>)/sqrt(2): carries gap-mode coherences, so
        # the out-of-manifold error relaxes at the gap rate (|e><e| alone
        # would decay at twice the total rate, the population-sector mode)
        psi = np.array([1.0, 0.0, 1.0], dtype=complex) / np.sqrt(2.0)
        quench = np.outer(psi, psi.conj())
        return sys, quench, None
    if name == "rabi":
        p = models.RabiParams(**params)
        sys = models.rabi(p)
        d = 2 * p.n_tr
        quench = np.zeros((d, d), dtype=complex)
        quench[1, 1] = 1.0  # |0><0| (x) |e><e|
        return sys, quench, models.rabi_reduced_basis(p)
    raise ValueError(f"unknown model {name!r}")


def run_equivalence(cfg: ExperimentConfig) -> ExperimentReport:
    """Invariance/gauge/projector identities plus trajectory equivalence.

    Checks the exact-construction residuals, then compares K x(t) against
    the RK4 oracle: from an in-manifold initial state the two trajectories
    coincide for all times; from a quench state the mismatch decays at a
    rate close to the gap.
    """
    report = ExperimentReport("equivalence", cfg.to_dict())
    sys, quench_rho, basis = _build_model(cfg.model)
    ctx = tcl.build_context(sys, basis=basis)
    gap = ctx.gap
    L_hat = ctx.L_hat
    red = tcl.reduce(ctx)
    P_eps = tcl.p_inv_asymptotic(ctx)
    tol = cfg.tolerances

    inv_resid = np.linalg.norm(L_hat @ red.K - red.K @ red.F) / np.linalg.norm(red.K)
    gauge_resid = np.linalg.norm(ctx.basis.chi_L_dag @ red.K - np.eye(ctx.n_surviving))
    prop2_resid = np.linalg.norm(
        (np.eye(ctx.dim2) - P_eps) @ L_hat @ P_eps) / np.linalg.norm(L_hat)
    report.scalars.update({
        "gap": gap,
        "invariance_residual": float(inv_resid),
        "gauge_residual": float(gauge_resid),
        "prop2_residual": float(prop2_resid),
        "perturbation_over_gap": sys.eps * np.linalg.norm(sys.L1) / gap,
    })
    report.add_check("invariance", float(inv_resid), inv_resid <= tol["invariance"],
                     f"||L K - K F||/||K|| <= {tol['invariance']:g}")
    report.add_check("gauge", float(gauge_resid), gauge_resid <= tol["gauge"],
                     f"||chi_L^dag K - I|| <= {tol['gauge']:g}")
    report.add_check("prop2", float(prop2_resid), prop2_resid <= tol["prop2"],
                     f"||(I - P^eps) L P^eps||/||L|| <= {tol['prop2']:g}")

    ts = make_grid(cfg.grid["t_max"], cfg.grid["dt"])
    rk4_dt = cfg.grid.get("rk4_dt", 1e-3)
    d = sys.dim

    # in-manifold: project the maximally mixed state onto the invariant subspace
    rho_seed = np.eye(d, dtype=complex) / d
    v0 = P_eps @ vectorize(rho_seed)
    rho0 = devectorize(v0, d)
    rho0 = 0.5 * (rho0 + rho0.conj().T)
    report.scalars["inmanifold_min_eig"] = float(
        np.min(np.linalg.eigvalsh(rho0)))
    x0 = ctx.basis.chi_L_dag @ vectorize(rho0)
    xs = tcl.evolve_reduced(red.F, x0, ts, dt=rk4_dt)
    rhos = integrate_master(sys.full, rho0, ts, dt=rk4_dt)
    err = np.array([
        np.linalg.norm(vectorize(rhos[i]) - red.K @ xs[i]) for i in range(len(ts))
    ])
    report.series["inmanifold_error"] = (ts, err)
    max_err = float(np.max(err))
    report.scalars["inmanifold_max_error"] = max_err
    report.add_check("inmanifold_error", max_err, max_err <= tol["inmanifold"],
                     f"max ||vec rho - K x|| <= {tol['inmanifold']:g}")

    # quench: initial state with fast-mode content.  Reduced coordinates are
    # the gauge parametrization x_s = <l_s|rho(t)> of the oracle trajectory;
    # the lift error then equals (I - P^eps) rho(t) and decays at the gap
    # rate (coordinates evolved by F instead would keep an O(eps) offset
    # accumulated during the fast transient).
    rhoqs = integrate_master(sys.full, quench_rho, ts, dt=rk4_dt)
    err_q = np.empty(len(ts))
    for i in range(len(ts)):
        v = vectorize(rhoqs[i])
        err_q[i] = np.linalg.norm(v - red.K @ (ctx.basis.chi_L_dag @ v))
    report.series["quench_error"] = (ts, err_q)
    window = (cfg.fit["t_min"], cfg.fit["t_max"])
    fit_q = _fit_or_none(ts, err_q, window, cfg.fit["floor"])
    if fit_q is not None:
        report.fits["quench_error"] = fit_q
        rate_ratio = fit_q.rate / gap
        report.scalars["quench_rate_over_gap"] = rate_ratio
        report.add_check(
            "quench_rate_near_gap", rate_ratio,
            abs(rate_ratio - 1.0) <= tol["quench_rate_rel"],
            f"|rate/gap - 1| <= {tol['quench_rate_rel']}")
    return report


RUNNERS = {
    "prop-verify": run_prop_verify,
    "rabi-truncation": run_rabi_truncation,
    "choi": run_choi,
    "laplace-compare": run_laplace_compare,
    "equivalence": run_equivalence,
}


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Dispatch to the runner named by ``cfg.experiment``."""
    try:
        runner = RUNNERS[cfg.experiment]
    except KeyError:
        raise ValueError(f"unknown experiment {cfg.experiment!r}") from None
    return runner(cfg)
