"""Shift and reflection disambiguation against the exchanged zero-subcarrier vector.

For a candidate first-path delay t the estimate predicts y'_m = F(f_m; t)^2,
with F the CFR of the shifted (or reflected and shifted) CIR at the band
carriers. Both hypotheses are grid-searched over [0, tau_bar]; the smaller
minimum wins and its argmin is the ToF.

The default cost aligns the global phase of the prediction to y' before
comparing, since the reconstructed gains carry an arbitrary phase that
squaring turns into a factor exp(j 2 phi). ``aligned=False`` compares directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .reconstruct import CirEstimate, finalize


class LowMarginWarning(UserWarning):
    """The two hypotheses fit the data almost equally well."""


@dataclass(frozen=True)
class DisambiguationConfig:
    tau_bar: float
    step: float
    aligned: bool = True
    refine: bool = True
    margin_warning: float = 0.01

    def __post_init__(self):
        if not self.tau_bar > 0:
            raise ValueError("tau_bar must be positive")
        if not self.step > 0:
            raise ValueError("shift step must be positive")

    @property
    def grid(self) -> np.ndarray:
        n = int(np.floor(self.tau_bar / self.step + 1e-9))
        return np.append(self.step * np.arange(n + 1), self.tau_bar) if n * self.step < self.tau_bar \
            else self.step * np.arange(n + 1)


@dataclass(frozen=True, eq=False)
class HypothesisResult:
    hypothesis: str
    tof: float
    estimate: CirEstimate
    costs: dict  # hypothesis -> minimum cost g
    margin: float  # |g1 - g2| / max(g1, g2)


def _base_cfr(estimate: CirEstimate, carriers, reflected: bool) -> np.ndarray:
    est = estimate.reflected() if reflected else estimate
    return np.exp(-2j * np.pi * np.outer(carriers, est.delays)) @ est.gains


def tentative_cfr_squared(estimate: CirEstimate, shift, carriers, reflected: bool = False) -> np.ndarray:
    """p_m = F(f_m; shift)^2 for one shift (shape (M,)) or an array of shifts (shape (S, M))."""
    carriers = np.asarray(carriers, dtype=float)
    F0 = _base_cfr(estimate, carriers, reflected)
    shift = np.asarray(shift, dtype=float)
    return (F0 ** 2) * np.exp(-4j * np.pi * np.multiply.outer(shift, carriers))


def hypothesis_cost(p, y_ex, aligned: bool = True) -> np.ndarray:
    """g = ||p e^{j chi} - y'|| with chi the best phase (aligned) or chi = 0 (raw).

    Works row-wise when ``p`` is 2-D.
    """
    p = np.asarray(p)
    y_ex = np.asarray(y_ex)
    inner = p.conj() @ y_ex
    cross = np.abs(inner) if aligned else inner.real
    g2 = np.sum(np.abs(p) ** 2, axis=-1) + np.vdot(y_ex, y_ex).real - 2 * cross
    return np.sqrt(np.maximum(g2, 0.0))


def _search(F0sq, y_ex, carriers, config: DisambiguationConfig):
    grid = config.grid
    cost = hypothesis_cost(F0sq * np.exp(-4j * np.pi * np.outer(grid, carriers)), y_ex, config.aligned)
    i = int(np.argmin(cost))
    t, g = float(grid[i]), float(cost[i])
    if config.refine and grid.size > 1:
        lo = max(0.0, t - config.step)
        hi = min(config.tau_bar, t + config.step)

        def f(s):
            return float(hypothesis_cost(F0sq * np.exp(-4j * np.pi * s * carriers), y_ex, config.aligned))

        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": config.step * 1e-4})
        if res.fun < g:
            t, g = float(res.x), float(res.fun)
    return t, g


def hypothesis_test(estimate: CirEstimate, y_ex, carriers, config: DisambiguationConfig) -> HypothesisResult:
    """Pick H1 (estimate as is) or H2 (reflected, conjugated) and the shift minimizing the cost."""
    carriers = np.asarray(carriers, dtype=float)
    y_ex = np.asarray(y_ex, dtype=complex)
    if y_ex.shape != carriers.shape:
        raise ValueError("exchanged vector needs one value per band carrier")
    found = {}
    for tag, refl in (("H1", False), ("H2", True)):
        F0sq = _base_cfr(estimate, carriers, refl) ** 2
        found[tag] = _search(F0sq, y_ex, carriers, config)
    g1, g2 = found["H1"][1], found["H2"][1]
    tag = "H1" if g1 <= g2 else "H2"
    top = max(g1, g2)
    margin = abs(g1 - g2) / top if top > 0 else 0.0
    if estimate.num_paths > 1 and margin < config.margin_warning:
        warnings.warn(f"hypothesis costs differ by {100 * margin:.2f}% only", LowMarginWarning, stacklevel=2)
    tof = found[tag][0]
    return HypothesisResult(tag, tof, finalize(estimate, tof, tag == "H2"),
                            {"H1": g1, "H2": g2}, margin)
