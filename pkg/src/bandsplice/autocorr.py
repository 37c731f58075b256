"""Recovery of the CIR autocorrelation from CSI magnitudes.

|y_i|^2 = r0 + 2 Re( sum_s r_s exp(-j 2 pi f_i xi_s) ), so the squared
magnitudes are linear in the (real) zero-lag coefficient and the real and
imaginary parts of the positive-lag coefficients. The positive lags are found
with a sparse fit on a dense grid followed by clustering; the coefficients are
then re-fitted by least squares on the clustered support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PipelineError
from .signal_model import BandPlan
from .sparse_solver import BpdnProblem, SolverConfig, SparseSolution, solve_bpdn, solve_least_squares


class InsufficientSupportError(PipelineError):
    """Fewer grid points survived the threshold than lags requested."""

    tag = "insufficient_support"


@dataclass(frozen=True, eq=False)
class AutocorrDictionary:
    """Real dictionary [1, 2 cos(2 pi f xi), 2 sin(2 pi f xi)] over a positive-lag grid.

    Column 0 multiplies r0, columns 1..G the real parts of r_s and columns
    G+1..2G their imaginary parts (2*A2 with A2 = Im a = -sin enters negated).
    """

    grid: np.ndarray
    matrix: np.ndarray
    freqs: np.ndarray
    tau_max: float

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def step(self) -> float:
        return self.tau_max / self.grid.size


def num_lags(num_paths: int) -> int:
    return num_paths * (num_paths - 1) // 2


def build_autocorr_dictionary(plan: BandPlan, grid_size: int, tau_max: float) -> AutocorrDictionary:
    """Grid {tau_max/G, 2 tau_max/G, ..., tau_max} and its real-valued dictionary."""
    if grid_size < plan.size:
        raise ValueError(f"grid size {grid_size} must be at least the number of samples {plan.size}")
    if not tau_max > 0:
        raise ValueError("tau_max must be positive")
    grid = tau_max * np.arange(1, grid_size + 1) / grid_size
    f = plan.flat_freqs
    arg = 2 * np.pi * np.outer(f, grid)
    A = np.empty((f.size, 2 * grid_size + 1))
    A[:, 0] = 1.0
    A[:, 1:grid_size + 1] = 2 * np.cos(arg)
    A[:, grid_size + 1:] = 2 * np.sin(arg)
    for a in (grid, A):
        a.setflags(write=False)
    return AutocorrDictionary(grid, A, f, float(tau_max))


def magnitudes(y) -> np.ndarray:
    """u_i = |y_i|^2."""
    y = np.asarray(y)
    return y.real ** 2 + y.imag ** 2


def magnitude_noise_std(noise_var: float, u) -> float:
    """Std of |h + z|^2 - |h|^2 for z ~ CN(0, s2), averaged over the samples."""
    return float(np.sqrt(2 * noise_var * np.mean(u) + noise_var ** 2))


def default_lambda(noise_var: float, u, num_columns: int, c_lambda: float = 1.0,
                   floor: float = 1e-6) -> float:
    """lambda = c_lambda * sigma_u * sqrt(2 ln(2G+1)), floored relative to the data scale."""
    sigma_u = magnitude_noise_std(noise_var, u)
    scale = max(float(np.max(np.abs(u))), np.finfo(float).tiny)
    return max(c_lambda * sigma_u * np.sqrt(2 * np.log(num_columns)), floor * scale)


def recover_autocorr(u, dictionary: AutocorrDictionary, lam: float,
                     config: SolverConfig | None = None) -> SparseSolution:
    """Sparse fit u ~ A x. The zero-lag coefficient carries no l1 penalty.

    Penalizing x0 would let it leak onto the smallest grid lags, since the
    first few cosine columns are nearly constant over the band plan.
    """
    u = np.asarray(u, dtype=float)
    A = dictionary.matrix
    if u.shape != (A.shape[0],):
        raise ValueError(f"expected {A.shape[0]} magnitudes, got {u.shape}")
    if not np.any(u):
        x = np.zeros(A.shape[1])
        return SparseSolution(x, 0.0, 0, True)
    w = np.ones(A.shape[1])
    w[0] = 0.0
    return solve_bpdn(BpdnProblem(A, u, lam, w), config)


def lag_coefficients(x, grid_size: int) -> np.ndarray:
    """Complex r on the grid from the stacked real vector [x0, x_re, x_im]."""
    x = np.asarray(x)
    return x[1:grid_size + 1] + 1j * x[grid_size + 1:2 * grid_size + 1]


def kmeans_1d(points, weights, k: int):
    """Exact weighted k-means of sorted 1-D points by dynamic programming.

    Returns (centers, labels); clusters are contiguous runs of the sorted input.
    """
    x = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = x.size
    if not 1 <= k <= n:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    if np.any(np.diff(x) < 0):
        raise ValueError("points must be sorted")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    S0 = np.concatenate([[0.0], np.cumsum(w)])
    S1 = np.concatenate([[0.0], np.cumsum(w * x)])
    S2 = np.concatenate([[0.0], np.cumsum(w * x * x)])

    def cost(i, j):  # points i..j-1, vectorized over i
        s0 = S0[j] - S0[i]
        s1 = S1[j] - S1[i]
        return np.maximum(S2[j] - S2[i] - s1 * s1 / s0, 0.0)

    D = np.full((k + 1, n + 1), np.inf)
    B = np.zeros((k + 1, n + 1), dtype=int)
    D[0, 0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, n + 1):
            i = np.arange(c - 1, j)
            tot = D[c - 1, i] + cost(i, j)
            b = int(np.argmin(tot))
            D[c, j] = tot[b]
            B[c, j] = i[b]
    labels = np.empty(n, dtype=int)
    centers = np.empty(k)
    j = n
    for c in range(k, 0, -1):
        i = B[c, j]
        labels[i:j] = c - 1
        centers[c - 1] = (S1[j] - S1[i]) / (S0[j] - S0[i])
        j = i
    return centers, labels


def refine_support(x, threshold_frac: float, num_clusters: int, grid) -> np.ndarray:
    """Threshold the lag coefficients, then cluster the survivors into K~ lags.

    Candidates are grid points with |x_re + j x_im| >= threshold_frac * max;
    cluster centers are the magnitude-weighted means.
    """
    grid = np.asarray(grid, dtype=float)
    mag = np.abs(lag_coefficients(x, grid.size))
    top = float(mag.max()) if mag.size else 0.0
    keep = np.flatnonzero((mag >= threshold_frac * top) & (mag > 0)) if top > 0 else np.array([], int)
    if keep.size < num_clusters:
        raise InsufficientSupportError(
            f"{keep.size} grid lags exceed the threshold but {num_clusters} are needed; "
            "noise too strong or regularizer too large"
        )
    centers, _ = kmeans_1d(grid[keep], mag[keep], num_clusters)
    return centers


def candidate_lags(x, grid, threshold_frac: float, merge_width: float, max_candidates: int | None = None):
    """Group the nonzero grid lags into runs no wider than ``merge_width`` apart.

    Returns (centers, weights) sorted by decreasing weight, where a center is
    the magnitude-weighted mean of its run and the weight is the summed
    magnitude. Runs lighter than ``threshold_frac`` of the heaviest are dropped.
    The sparse fit tends to split one true lag over neighbouring grid points,
    which this undoes without fixing the number of lags in advance.
    """
    grid = np.asarray(grid, dtype=float)
    mag = np.abs(lag_coefficients(x, grid.size))
    nz = np.flatnonzero(mag > 0)
    if nz.size == 0:
        return np.empty(0), np.empty(0)
    breaks = np.flatnonzero(np.diff(grid[nz]) > merge_width) + 1
    runs = np.split(nz, breaks)
    weights = np.array([mag[r].sum() for r in runs])
    centers = np.array([np.dot(grid[r], mag[r]) / mag[r].sum() for r in runs])
    keep = weights >= threshold_frac * weights.max()
    centers, weights = centers[keep], weights[keep]
    order = np.argsort(-weights, kind="stable")[:max_candidates]
    return centers[order], weights[order]


def lag_atoms(freqs, lags) -> np.ndarray:
    return np.exp(-2j * np.pi * np.outer(freqs, lags))


@dataclass(frozen=True, eq=False)
class AutocorrEstimate:
    """Positive lags xi_s (ascending), complex r_s, real r0 >= 0."""

    lags: np.ndarray
    coefficients: np.ndarray
    zero_lag: float
    asymmetry: float = 0.0  # max |r_s - conj(r_-s)| / 2 before symmetrization

    @property
    def num_lags(self) -> int:
        return self.lags.size

    def evaluate(self, freqs) -> np.ndarray:
        """Fourier samples r0 + sum_s (r_s a(xi_s) + conj(r_s) a(-xi_s))."""
        if self.lags.size == 0:
            return np.full(np.shape(freqs), self.zero_lag, dtype=complex)
        a = lag_atoms(freqs, self.lags)
        return self.zero_lag + a @ self.coefficients + a.conj() @ self.coefficients.conj()


def ls_coefficients(u, lags, freqs, cond_limit: float = 1e10) -> AutocorrEstimate:
    """Least-squares fit of u on atoms at {-xi_s} U {0} U {+xi_s}, then symmetrized."""
    u = np.asarray(u, dtype=float)
    lags = np.sort(np.asarray(lags, dtype=float))
    if lags.size and (lags[0] <= 0 or np.any(np.diff(lags) <= 0)):
        raise ValueError("lags must be positive and distinct")
    support = np.concatenate([-lags[::-1], [0.0], lags])
    r = solve_least_squares(lag_atoms(freqs, support), u.astype(complex), cond_limit)
    s = lags.size
    neg, r0, pos = r[:s][::-1], r[s], r[s + 1:]
    coeffs = 0.5 * (pos + neg.conj())
    asym = float(np.max(np.abs(pos - neg.conj())) / 2) if s else 0.0
    return AutocorrEstimate(lags, coeffs, float(r0.real), asym)
