"""Per-band denoising and zero-subcarrier estimation.

Each band is fitted with a sparse combination of oversampled DFT atoms on the
observed subcarriers; the fit is then evaluated on every subcarrier, which
both denoises the band and fills in the unobserved zero subcarrier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .signal_model import BandPlan, CsiSnapshot
from .sparse_solver import BpdnProblem, SolverConfig, SparseSolution, solve_bpdn


@dataclass(frozen=True, eq=False)
class DftDictionary:
    """[D]_{n,l} = exp(-j 2 pi n l / L) / sqrt(N), n over the centered subcarrier indices.

    Column l is a delay of l/(L fs), so the grid covers [0, 1/fs).
    """

    num_subcarriers: int
    oversampling: int

    def __post_init__(self):
        if self.num_subcarriers % 2 == 0:
            raise ValueError("number of subcarriers must be odd")
        if self.oversampling < self.num_subcarriers:
            raise ValueError("dictionary size L must be at least N")
        h = (self.num_subcarriers - 1) // 2
        n = np.arange(-h, h + 1)
        D = np.exp(-2j * np.pi * np.outer(n, np.arange(self.oversampling)) / self.oversampling)
        D /= np.sqrt(self.num_subcarriers)
        D.setflags(write=False)
        object.__setattr__(self, "matrix", D)

    @classmethod
    def for_plan(cls, plan: BandPlan, oversampling: int | None = None) -> "DftDictionary":
        N = plan.subcarriers_per_band
        return cls(N, 3 * N if oversampling is None else oversampling)


@dataclass(frozen=True, eq=False)
class DenoisedCsi:
    bands: np.ndarray  # (M, N), zero subcarrier filled in
    coefficients: np.ndarray  # (M, L)
    converged: np.ndarray  # (M,) bool

    @property
    def stacked(self) -> np.ndarray:
        return stack_denoised(self.bands)

    @property
    def zero_subcarrier(self) -> np.ndarray:
        return self.bands[:, (self.bands.shape[1] - 1) // 2]


def default_rho(noise_var: float, oversampling: int, c_rho: float = 1.0, floor: float = 1e-6) -> float:
    """rho = c_rho * sigma * sqrt(2 ln L), floored so noiseless data stays well posed."""
    return max(c_rho * np.sqrt(noise_var) * np.sqrt(2 * np.log(oversampling)), floor)


def denoise_band(values, observed, dictionary: DftDictionary, rho: float,
                 config: SolverConfig | None = None):
    """Sparse fit of one band on its observed subcarriers.

    Returns ``(y_den, w, solution)`` where ``y_den = D w`` covers every
    subcarrier, including the unobserved ones.
    """
    values = np.asarray(values, dtype=complex)
    observed = np.asarray(observed, dtype=bool)
    if not observed.any():
        raise ValueError("band has no observed subcarriers")
    D = dictionary.matrix
    if values.shape != (D.shape[0],):
        raise ValueError("band length does not match the dictionary")
    y_obs = values[observed]
    if not np.any(y_obs):
        w = np.zeros(D.shape[1], dtype=complex)
        return np.zeros_like(values), w, SparseSolution(w, 0.0, 0, True)
    sol = solve_bpdn(BpdnProblem(D[observed], y_obs, rho), config)
    return D @ sol.x, sol.x, sol


def denoise_snapshot(snapshot: CsiSnapshot, dictionary: DftDictionary, rho: float,
                     config: SolverConfig | None = None) -> DenoisedCsi:
    M = snapshot.plan.num_bands
    bands = np.empty_like(snapshot.values)
    coeffs = np.empty((M, dictionary.oversampling), dtype=complex)
    ok = np.empty(M, dtype=bool)
    for m in range(M):
        bands[m], coeffs[m], sol = denoise_band(snapshot.values[m], snapshot.observed[m], dictionary, rho, config)
        ok[m] = sol.converged
    return DenoisedCsi(bands, coeffs, ok)


def spline_zero_subcarrier(values, observed, indices=None) -> complex:
    """Natural cubic spline over subcarrier index (real and imaginary parts apart), at n=0."""
    values = np.asarray(values, dtype=complex)
    observed = np.asarray(observed, dtype=bool)
    if indices is None:
        h = (values.size - 1) // 2
        indices = np.arange(-h, h + 1)
    n = np.asarray(indices)[observed]
    if n.size < 4:
        raise ValueError(f"cubic spline needs at least 4 observed subcarriers, got {n.size}")
    v = values[observed]
    re = CubicSpline(n, v.real, bc_type="natural")(0.0)
    im = CubicSpline(n, v.imag, bc_type="natural")(0.0)
    return complex(re + 1j * im)


def spline_snapshot(snapshot: CsiSnapshot) -> np.ndarray:
    idx = snapshot.plan.subcarrier_indices
    return np.array([spline_zero_subcarrier(v, o, idx) for v, o in zip(snapshot.values, snapshot.observed)])


def exchange_zero_subcarrier(y_tx0, y_rx0) -> np.ndarray:
    """y'_m = y_tx0[m] * y_rx0[m]; the phase offsets cancel, leaving h0^2 plus noise."""
    y_tx0 = np.asarray(y_tx0, dtype=complex)
    y_rx0 = np.asarray(y_rx0, dtype=complex)
    if y_tx0.shape != y_rx0.shape or y_tx0.ndim != 1:
        raise ValueError(f"length mismatch: {y_tx0.shape} vs {y_rx0.shape}")
    return y_tx0 * y_rx0


def stack_denoised(bands) -> np.ndarray:
    """Concatenate per-band vectors in band-major order."""
    return np.concatenate([np.asarray(b) for b in bands])


def unstack(y, plan: BandPlan) -> np.ndarray:
    return np.asarray(y).reshape(plan.num_bands, plan.subcarriers_per_band)
