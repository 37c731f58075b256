"""End-to-end ToF estimators: the phase-retrieval pipeline and the self-convolution baseline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import autocorr, chronos, preproc
from .disambiguate import DisambiguationConfig, HypothesisResult, LowMarginWarning, hypothesis_test
from .reconstruct import (CirEstimate, DegeneratePairError, NoConsistentPlacementError, cir_from_delays,
                          enumerate_placements, polish_delays, rank_placements, reconstruct_cir)
from .errors import PipelineError
from .signal_model import BandPlan, CsiSnapshot
from .sparse_solver import RankDeficientError, SolverConfig


class IllConditionedFitError(PipelineError):
    """A least-squares refit had nearly collinear atoms."""

    tag = "ill_conditioned"


@dataclass(frozen=True)
class PrSettings:
    num_paths: int
    tau_max: float
    rho: float
    lam: float
    eta: float
    tau_bar: float
    shift_step: float
    threshold: float = 0.05
    dft_size: int | None = None  # L, defaults to 3N
    grid_size: int | None = None  # G, defaults to 3MN
    aligned_cost: bool = True
    refine_positions: bool = True
    polish_delays: bool = True  # nonlinear refit of the delays on the magnitudes
    support_search: str = "scored"  # or "turnpike": k-means lags + exact difference-set search
    candidate_threshold: float = 0.01  # relative weight floor for candidate lags (scored search)
    merge_width: float | None = None  # candidate grouping width, defaults to resolution / 6
    max_candidates: int = 10
    num_polish: int = 5
    order_fallback: bool = True  # retry with fewer paths when the gains of K paths are degenerate
    solver: SolverConfig = field(default_factory=SolverConfig)
    autocorr_solver: SolverConfig = field(default_factory=lambda: SolverConfig(method="homotopy"))

    def __post_init__(self):
        if self.support_search not in ("scored", "turnpike"):
            raise ValueError(f"unknown support search {self.support_search!r}")


@dataclass(frozen=True)
class BaselineSettings:
    tau_max: float
    lam: float
    grid_size: int
    threshold: float = 0.1
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass(eq=False)
class PrOutcome:
    tof: float
    estimate: CirEstimate
    acf: autocorr.AutocorrEstimate
    decision: HypothesisResult
    diagnostics: dict


@lru_cache(maxsize=4)
def _dft(num_subcarriers: int, size: int) -> preproc.DftDictionary:
    return preproc.DftDictionary(num_subcarriers, size)


_ACF_CACHE: dict = {}


def autocorr_dictionary(plan: BandPlan, grid_size: int, tau_max: float) -> autocorr.AutocorrDictionary:
    """Shared read-only dictionary per (plan, G, tau_max) inside one process."""
    key = (plan.num_bands, plan.subcarriers_per_band, plan.subcarrier_spacing,
           tuple(plan.carrier_freqs.tolist()), grid_size, tau_max)
    if key not in _ACF_CACHE:
        if len(_ACF_CACHE) >= 4:
            _ACF_CACHE.clear()
        _ACF_CACHE[key] = autocorr.build_autocorr_dictionary(plan, grid_size, tau_max)
    return _ACF_CACHE[key]


def run_pr(tx: CsiSnapshot, rx: CsiSnapshot, settings: PrSettings) -> PrOutcome:
    """Denoise both ends, recover the autocorrelation from the receiver's magnitudes,
    reconstruct the CIR and resolve shift and reflection with the exchanged vector."""
    try:
        return _run_pr(tx, rx, settings)
    except RankDeficientError as exc:
        raise IllConditionedFitError(str(exc)) from exc


def _run_pr(tx: CsiSnapshot, rx: CsiSnapshot, settings: PrSettings) -> PrOutcome:
    plan = rx.plan
    L = settings.dft_size or 3 * plan.subcarriers_per_band
    G = settings.grid_size or 3 * plan.size
    D = _dft(plan.subcarriers_per_band, L)
    den_rx = preproc.denoise_snapshot(rx, D, settings.rho, settings.solver)
    den_tx = preproc.denoise_snapshot(tx, D, settings.rho, settings.solver)
    y_ex = preproc.exchange_zero_subcarrier(den_tx.zero_subcarrier, den_rx.zero_subcarrier)

    u = autocorr.magnitudes(den_rx.stacked)
    diag: dict = {"denoise_converged": bool(den_rx.converged.all() and den_tx.converged.all())}
    K = settings.num_paths
    if K == 1:
        acf = autocorr.ls_coefficients(u, [], plan.flat_freqs)
        est = reconstruct_cir(acf, 1, settings.eta)
        diag["autocorr_converged"] = True
    else:
        A = autocorr_dictionary(plan, G, settings.tau_max)
        sol = autocorr.recover_autocorr(u, A, settings.lam, settings.autocorr_solver)
        diag["autocorr_converged"] = bool(sol.converged)
        diag["autocorr_iterations"] = int(sol.iterations)
        if settings.support_search == "turnpike":
            est, acf = _turnpike_support(u, sol.x, A.grid, plan, settings, diag)
        else:
            est, acf = _scored_support(u, sol.x, A.grid, plan, settings, diag)
    cfg = DisambiguationConfig(settings.tau_bar, settings.shift_step, settings.aligned_cost)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", LowMarginWarning)
        decision = hypothesis_test(est, y_ex, plan.carrier_freqs, cfg)
    diag["hypothesis"] = decision.hypothesis
    diag["hypothesis_margin"] = decision.margin
    diag["low_margin"] = any(issubclass(w.category, LowMarginWarning) for w in caught)
    return PrOutcome(decision.tof, decision.estimate, acf, decision, diag)


def _turnpike_support(u, x, grid, plan, settings, diag):
    K = settings.num_paths
    lags = autocorr.refine_support(x, settings.threshold, autocorr.num_lags(K), grid)
    acf = autocorr.ls_coefficients(u, lags, plan.flat_freqs)
    stats: dict = {}
    est = reconstruct_cir(acf, K, settings.eta, settings.refine_positions, stats)
    diag["backtracks"] = stats.get("backtracks", 0)
    if settings.polish_delays:
        est, acf = cir_from_delays(u, plan.flat_freqs, polish_delays(u, plan.flat_freqs, est.delays))
    return est, acf


def _scored_support(u, x, grid, plan, settings, diag):
    """Enumerate delay sets explained by the candidate lags and keep the best magnitude fit.

    With ``order_fallback`` a K-path fit that is degenerate, ill-conditioned or
    has no consistent placement (paths closer than the band can separate) is
    retried with K-1 paths, down to a single path.
    """
    freqs = plan.flat_freqs
    width = settings.merge_width or 1.0 / (6 * (freqs.max() - freqs.min()))
    cands, _ = autocorr.candidate_lags(x, grid, settings.candidate_threshold, width, settings.max_candidates)
    diag["candidates"] = int(cands.size)
    lowest = 1 if settings.order_fallback else settings.num_paths
    for K in range(settings.num_paths, lowest - 1, -1):
        diag["model_order"] = K
        try:
            return _best_placement(u, freqs, cands, K, settings, diag)
        except (DegeneratePairError, RankDeficientError, NoConsistentPlacementError):
            if K == lowest:
                raise


def _best_placement(u, freqs, cands, K, settings, diag):
    if K == 1:
        return cir_from_delays(u, freqs, [0.0])
    placements = enumerate_placements(cands, K, settings.eta)
    diag["placements"] = len(placements)
    if not placements:
        raise NoConsistentPlacementError(
            f"no {K}-point delay set is explained by the {cands.size} candidate lags within eta={settings.eta:.3e}"
        )
    delays, _ = rank_placements(u, freqs, placements, settings.num_polish if settings.polish_delays else 0)
    return cir_from_delays(u, freqs, delays)


def run_baseline(tx: CsiSnapshot, rx: CsiSnapshot, settings: BaselineSettings) -> chronos.SelfConvolutionEstimate:
    """Spline the missing zero subcarriers at both ends, exchange, and locate 2 x ToF."""
    y_ex = preproc.exchange_zero_subcarrier(preproc.spline_snapshot(tx), preproc.spline_snapshot(rx))
    return chronos.chronos_estimate(y_ex, rx.plan.carrier_freqs, settings.tau_max, settings.lam,
                                    settings.grid_size, settings.threshold, settings.solver)
