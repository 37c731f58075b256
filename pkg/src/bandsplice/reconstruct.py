"""CIR reconstruction from an autocorrelation estimate.

The delays come from a turnpike search over the positive lags, the gain
magnitudes from the log pair-coefficient matrix and the phases from the
coefficients of the pairs involving the first path. The result is defined only
up to a shift, a reflection and a global phase; those are resolved later.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares, linear_sum_assignment

from .autocorr import AutocorrEstimate, ls_coefficients, num_lags
from .errors import PipelineError


class NoConsistentPlacementError(PipelineError):
    tag = "no_consistent_placement"


class AmbiguousMatchError(PipelineError):
    tag = "ambiguous_match"


class DegeneratePairError(PipelineError):
    tag = "degenerate_pair"


@dataclass(frozen=True, eq=False)
class CirEstimate:
    """Delays (ascending) and gains; ``tof``/``hypothesis`` set once disambiguated."""

    delays: np.ndarray
    gains: np.ndarray
    tof: float | None = None
    hypothesis: str | None = None

    def __post_init__(self):
        d = np.array(self.delays, dtype=float)
        g = np.array(self.gains, dtype=complex)
        if d.ndim != 1 or g.shape != d.shape or d.size < 1:
            raise ValueError("need one gain per delay")
        if np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "gains", g)

    @property
    def num_paths(self) -> int:
        return self.delays.size

    def reflected(self) -> "CirEstimate":
        """(max - tau_k, conj c_k), re-sorted; the other member of the ambiguity class."""
        return CirEstimate(self.delays[-1] - self.delays[::-1], self.gains[::-1].conj())

    def autocorrelation(self):
        """Positive lags tau_k - tau_l (k > l) and coefficients c_k conj(c_l), keyed by pair."""
        return {(k, l): (self.delays[k] - self.delays[l], self.gains[k] * np.conj(self.gains[l]))
                for k in range(self.num_paths) for l in range(k)}

    def to_dict(self) -> dict:
        return {
            "delays": self.delays.tolist(),
            "gains_re": self.gains.real.tolist(),
            "gains_im": self.gains.imag.tolist(),
            "tof": self.tof,
            "hypothesis": self.hypothesis,
        }


def _assign(diffs, lags, free, eta):
    """Match each difference to a distinct free lag within eta (min total deviation).

    Returns the chosen lag indices or None.
    """
    idx = np.flatnonzero(free)
    if idx.size < len(diffs):
        return None
    dev = np.abs(np.asarray(diffs)[:, None] - lags[idx][None, :])
    ok = dev <= eta
    if not ok.any(axis=1).all():
        return None
    cost = np.where(ok, dev, 1e3 * (eta + 1.0) + dev)
    rows, cols = linear_sum_assignment(cost)
    if not ok[rows, cols].all():
        return None
    out = np.empty(len(diffs), dtype=int)
    out[rows] = idx[cols]
    return out


def recover_support(lags, num_paths: int, eta: float, weights=None, stats: dict | None = None) -> np.ndarray:
    """Delay set with minimum 0 whose difference set reproduces ``lags`` within ``eta``.

    Depth-first search: start from {0, max lag}, then try lag values as new
    positions in order of decreasing ``weights`` (coefficient magnitude), each
    placement consuming one unused lag per already placed point. Backtracks
    when no candidate fits. ``stats['backtracks']`` counts abandoned branches.
    """
    lags = np.asarray(lags, dtype=float)
    K = int(num_paths)
    if K < 1:
        raise ValueError("need at least one path")
    if lags.size != num_lags(K):
        raise ValueError(f"K={K} needs {num_lags(K)} lags, got {lags.size}")
    if stats is not None:
        stats["backtracks"] = 0
    if K == 1:
        return np.zeros(1)
    if np.any(lags <= 0):
        raise ValueError("lags must be positive")
    weights = np.ones(lags.size) if weights is None else np.asarray(weights, dtype=float)
    order = np.lexsort((lags, -weights))  # strongest first, ties by smaller lag
    top = int(np.argmax(lags))
    free = np.ones(lags.size, dtype=bool)
    free[top] = False
    placed = [0.0, float(lags[top])]
    backtracks = 0

    def dfs():
        nonlocal backtracks
        if len(placed) == K:
            return True
        for i in order:
            if not free[i]:
                continue
            p = float(lags[i])
            if min(abs(p - x) for x in placed) <= eta:
                continue
            use = _assign([abs(p - x) for x in placed], lags, free, eta)
            if use is None:
                continue
            free[use] = False
            placed.append(p)
            if dfs():
                return True
            placed.pop()
            free[use] = True
            backtracks += 1
        return False

    found = dfs()
    if stats is not None:
        stats["backtracks"] = backtracks
    if not found:
        raise NoConsistentPlacementError(
            f"no placement of {K} points reproduces the {lags.size} lags within eta={eta:.3e}"
        )
    return np.sort(np.asarray(placed))


def match_lags_to_pairs(delays, lags, eta: float) -> dict:
    """Map each pair (k, l), k > l, of the sorted delays to the index of its lag.

    Uses a minimum-deviation bijection; raises when no bijection within eta
    exists or when two pairs have the same difference (a collision).
    """
    d = np.sort(np.asarray(delays, dtype=float))
    lags = np.asarray(lags, dtype=float)
    pairs = [(k, l) for k in range(d.size) for l in range(k)]
    if len(pairs) != lags.size:
        raise ValueError(f"{d.size} delays make {len(pairs)} pairs but {lags.size} lags were given")
    if not pairs:
        return {}
    diffs = np.array([d[k] - d[l] for k, l in pairs])
    use = _assign(diffs, lags, np.ones(lags.size, dtype=bool), eta)
    if use is None:
        raise AmbiguousMatchError("pair differences cannot be matched one-to-one with the lags within eta")
    order = np.sort(diffs)
    if np.any(np.diff(order) <= 1e-12 * order[-1]):
        raise AmbiguousMatchError("two pairs share the same difference, so their lags cannot be told apart")
    return {p: int(i) for p, i in zip(pairs, use)}


def fit_positions(num_paths: int, pair_map: dict, lags) -> np.ndarray:
    """Least-squares delays (first fixed at 0) from the matched pair lags."""
    lags = np.asarray(lags, dtype=float)
    K = num_paths
    if K == 1:
        return np.zeros(1)
    rows = []
    for (k, l), i in pair_map.items():
        r = np.zeros(K - 1)
        r[k - 1] += 1.0
        if l > 0:
            r[l - 1] -= 1.0
        rows.append((r, lags[i]))
    B = np.array([r for r, _ in rows])
    b = np.array([v for _, v in rows])
    tau = np.linalg.lstsq(B, b, rcond=None)[0]
    return np.concatenate([[0.0], tau])


def log_pair_matrix(pair_abs: dict, num_paths: int) -> np.ndarray:
    """C[k, l] = C[l, k] = log|r_(k,l)|, zero diagonal."""
    C = np.zeros((num_paths, num_paths))
    for (k, l), v in pair_abs.items():
        if not v > 0:
            raise DegeneratePairError(f"pair {(k, l)} has nonpositive coefficient magnitude {v!r}")
        C[k, l] = C[l, k] = np.log(v)
    return C


def recover_magnitudes(pair_abs: dict, num_paths: int, zero_lag: float | None = None) -> np.ndarray:
    """|c_k| from pair magnitudes |r_(k,l)| = |c_k||c_l|.

    K > 2: log|c_k| = (sum_l C[k,l] - beta / (2(K-1))) / (K-2) with beta = sum C.
    K = 2: |c_0|^2, |c_1|^2 are the roots of t^2 - r0 t + |r_1|^2 (larger one first).
    K = 1: sqrt(r0).
    """
    K = int(num_paths)
    if K <= 2 and zero_lag is None:
        raise ValueError("K <= 2 needs the zero-lag coefficient")
    if K == 1:
        if zero_lag < 0:
            raise DegeneratePairError("negative zero-lag coefficient")
        return np.array([np.sqrt(zero_lag)])
    if K == 2:
        p = pair_abs[(1, 0)]
        if not p > 0:
            raise DegeneratePairError("pair coefficient is zero")
        disc = max(zero_lag ** 2 - 4 * p ** 2, 0.0)  # clamp: noise can push r0 below 2|r1|
        t = np.array([(zero_lag + np.sqrt(disc)) / 2, (zero_lag - np.sqrt(disc)) / 2])
        if t[1] <= 0:
            t[1] = p ** 2 / t[0]
        return np.sqrt(t)
    C = log_pair_matrix(pair_abs, K)
    beta = C.sum()
    return np.exp((C.sum(axis=1) - beta / (2 * (K - 1))) / (K - 2))


def recover_phases(pair_coeffs: dict, c0_abs: float, num_paths: int) -> np.ndarray:
    """Gains with c_0 = |c_0| real and c_k = r_(k,0) / |c_0|."""
    scale = max([abs(v) for v in pair_coeffs.values()] + [c0_abs])
    if not c0_abs > 1e-12 * scale:
        raise DegeneratePairError(f"|c_0| = {c0_abs!r} too small to divide by")
    g = np.empty(num_paths, dtype=complex)
    g[0] = c0_abs
    for k in range(1, num_paths):
        g[k] = pair_coeffs[(k, 0)] / c0_abs
    return g


def reconstruct_cir(acf: AutocorrEstimate, num_paths: int, eta: float, refine_positions: bool = True,
                    stats: dict | None = None) -> CirEstimate:
    """Support search, pair matching, magnitudes and phases; delays start at 0."""
    K = int(num_paths)
    if K == 1:
        return CirEstimate([0.0], recover_magnitudes({}, 1, acf.zero_lag).astype(complex))
    stats = {} if stats is None else stats
    lags = acf.lags
    delays = recover_support(lags, K, eta, np.abs(acf.coefficients), stats)
    pairs = match_lags_to_pairs(delays, lags, eta)
    if refine_positions:
        delays = fit_positions(K, pairs, lags)
        if np.any(np.diff(delays) <= 0):
            raise NoConsistentPlacementError("refined delays are not increasing")
    coeffs = {p: acf.coefficients[i] for p, i in pairs.items()}
    mags = recover_magnitudes({p: abs(v) for p, v in coeffs.items()}, K, acf.zero_lag)
    gains = recover_phases(coeffs, float(mags[0]), K)
    return CirEstimate(delays, gains)


def _pair_lags(delays):
    K = delays.size
    pairs = [(k, l) for k in range(K) for l in range(k)]
    return pairs, np.array([delays[k] - delays[l] for k, l in pairs])


def _lag_design(freqs, lags) -> np.ndarray:
    arg = 2 * np.pi * np.outer(freqs, lags)
    return np.hstack([np.ones((freqs.size, 1)), 2 * np.cos(arg), 2 * np.sin(arg)])


def fit_residual(u, freqs, delays) -> float:
    """Squared residual of the best magnitude fit with lags fixed to the pair differences."""
    u = np.asarray(u, dtype=float)
    A = _lag_design(np.asarray(freqs, dtype=float), _pair_lags(np.asarray(delays, dtype=float))[1])
    x = np.linalg.lstsq(A, u, rcond=None)[0]
    return float(np.sum((A @ x - u) ** 2))


def enumerate_placements(candidates, num_paths: int, eta: float, max_placements: int = 20000) -> list:
    """Delay sets {0, ..., top} whose every pairwise difference lies within eta of a candidate.

    Unlike ``recover_support`` a candidate may explain several pairs and need
    not be used at all, so merged and spurious lags are tolerated. The largest
    delay is a candidate; interior delays are candidates or differences of
    two candidates. Depth-first with pruning on the partial set.
    """
    c = np.asarray(candidates, dtype=float)
    K = int(num_paths)
    if K < 2 or c.size == 0:
        return []

    def explained(v):
        return np.min(np.abs(c - v)) <= eta

    diffs = (c[:, None] - c[None, :])[np.triu_indices(c.size, 1)]
    points = np.unique(np.abs(np.concatenate([c, diffs])))
    points = points[points > eta]
    found = []
    for top in np.sort(c):
        if top <= eta:
            continue
        inner = points[(points < top - eta) & np.array([explained(top - p) for p in points])]
        inner = inner[[explained(p) for p in inner]]
        chosen = [0.0]

        def dfs(start):
            if len(found) >= max_placements:
                return
            if len(chosen) == K - 1:
                found.append(np.array(chosen + [top]))
                return
            for i in range(start, inner.size):
                p = inner[i]
                if p - chosen[-1] <= eta:
                    continue
                if all(explained(p - q) for q in chosen[1:]):
                    chosen.append(p)
                    dfs(i + 1)
                    chosen.pop()

        dfs(0)
    return found


def rank_placements(u, freqs, placements, num_polish: int = 5):
    """Polish the best-fitting placements and return (delays, residual) of the winner.

    With ``num_polish=0`` the best placement is returned as enumerated.
    """
    if not placements:
        raise NoConsistentPlacementError("no delay set is consistent with the candidate lags")
    scores = np.array([fit_residual(u, freqs, d) for d in placements])
    if num_polish <= 0:
        i = int(np.argmin(scores))
        return np.asarray(placements[i], dtype=float), float(scores[i])
    best, best_score = None, np.inf
    for i in np.argsort(scores, kind="stable")[:num_polish]:
        d = polish_delays(u, freqs, placements[i])
        s = fit_residual(u, freqs, d)
        if s < best_score:
            best, best_score = d, s
    return best, best_score


def polish_delays(u, freqs, delays, resolution: float | None = None) -> np.ndarray:
    """Refine relative delays by nonlinear least squares on the magnitudes.

    The pair coefficients are eliminated (solved linearly for every trial
    delay set), so only the K-1 free delays are searched. The carrier phase
    is absorbed by the coefficients, which keeps the cost smooth on the scale
    of the band's resolution. Returns the input when the fit would reorder
    the delays.
    """
    u = np.asarray(u, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    delays = np.sort(np.asarray(delays, dtype=float))
    if delays.size < 2:
        return delays
    scale = resolution or 1.0 / (freqs.max() - freqs.min())

    def residual(theta):
        d = np.concatenate([[0.0], theta * scale])
        A = _lag_design(freqs, _pair_lags(d)[1])
        x = np.linalg.lstsq(A, u, rcond=None)[0]
        return A @ x - u

    theta0 = (delays[1:] - delays[0]) / scale
    fit = least_squares(residual, theta0, method="lm", x_scale=1.0)
    out = np.concatenate([[0.0], fit.x * scale])
    if np.any(np.diff(out) <= 0) or fit.cost > 0.5 * np.sum(residual(theta0) ** 2):
        return delays - delays[0]
    return out


def cir_from_delays(u, freqs, delays, cond_limit: float = 1e10, energy_limit: float = 4.0) -> tuple[CirEstimate, AutocorrEstimate]:
    """Gains for a known delay set: fit the pair coefficients at its exact lags, then invert."""
    d = np.sort(np.asarray(delays, dtype=float))
    d = d - d[0]
    K = d.size
    if K == 1:
        acf = ls_coefficients(u, [], freqs, cond_limit)
        return CirEstimate(d, recover_magnitudes({}, 1, acf.zero_lag).astype(complex)), acf
    pairs, lags = _pair_lags(d)
    order = np.argsort(lags)
    if np.any(np.diff(lags[order]) <= 0):
        raise AmbiguousMatchError("two pairs share the same difference, so their lags cannot be told apart")
    acf = ls_coefficients(u, lags, freqs, cond_limit)
    pos = np.empty(len(pairs), dtype=int)
    pos[order] = np.arange(len(pairs))
    coeffs = {p: acf.coefficients[pos[i]] for i, p in enumerate(pairs)}
    mags = recover_magnitudes({p: abs(v) for p, v in coeffs.items()}, K, acf.zero_lag)
    # sum |c_k|^2 must reproduce r0; a large excess means the pair lags are too
    # close to separate their coefficients
    if np.sum(mags ** 2) > energy_limit * max(acf.zero_lag, np.finfo(float).tiny):
        raise DegeneratePairError("reconstructed path energy far exceeds the zero-lag coefficient")
    return CirEstimate(d, recover_phases(coeffs, float(mags[0]), K)), acf


def finalize(estimate: CirEstimate, shift: float, reflected: bool) -> CirEstimate:
    """Absolute delays: shift the (optionally reflected) estimate by ``shift``."""
    base = estimate.reflected() if reflected else estimate
    return replace(base, delays=base.delays + shift, tof=float(shift), hypothesis="H2" if reflected else "H1")
