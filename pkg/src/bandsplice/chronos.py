"""Self-convolution ToF baseline from one zero-subcarrier product per band.

y'_m samples the CFR of h * h at the band carriers, whose first component sits
at twice the ToF. A sparse fit over [0, 2 tau_max] locates it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PipelineError
from .sparse_solver import BpdnProblem, SolverConfig, solve_bpdn


class EmptySupportError(PipelineError):
    tag = "empty_support"


@dataclass(frozen=True, eq=False)
class SelfConvolutionEstimate:
    grid: np.ndarray
    coefficients: np.ndarray
    first_lag: float
    converged: bool = True

    @property
    def tof(self) -> float:
        return self.first_lag / 2


def baseline_grid_size(num_bands: int, tau_max: float, subcarrier_spacing: float,
                       subcarriers_per_band: int) -> int:
    """G_b = round(3 M * 2 tau_max fs N): the autocorrelation grid density over twice the span."""
    return max(int(round(3 * num_bands * 2 * tau_max * subcarrier_spacing * subcarriers_per_band)), 2)


def self_convolution_dictionary(carriers, grid) -> np.ndarray:
    """Atoms exp(-j 2 pi f_m xi); one row per band, so M measurements only."""
    return np.exp(-2j * np.pi * np.outer(carriers, grid))


def default_lambda_baseline(noise_var: float, y_ex, num_columns: int, c_lambda: float = 1.0,
                            floor: float = 1e-6) -> float:
    """c * sigma' * sqrt(2 ln G_b), sigma' the std of the product noise h0 (z1 + z2) + z1 z2."""
    y_ex = np.asarray(y_ex)
    power = float(np.mean(np.abs(y_ex)))
    sigma = np.sqrt(2 * noise_var * power + noise_var ** 2)
    scale = max(float(np.max(np.abs(y_ex))), np.finfo(float).tiny)
    return max(c_lambda * sigma * np.sqrt(2 * np.log(num_columns)), floor * scale)


def chronos_estimate(y_ex, carriers, tau_max: float, lam: float, grid_size: int,
                     threshold: float = 0.1, config: SolverConfig | None = None) -> SelfConvolutionEstimate:
    y_ex = np.asarray(y_ex, dtype=complex)
    carriers = np.asarray(carriers, dtype=float)
    if y_ex.shape != carriers.shape:
        raise ValueError("exchanged vector needs one value per band carrier")
    grid = 2 * tau_max * np.arange(grid_size) / (grid_size - 1)
    if not np.any(y_ex):
        raise EmptySupportError("exchanged vector is zero; nothing to locate")
    A = self_convolution_dictionary(carriers, grid)
    sol = solve_bpdn(BpdnProblem(A, y_ex, lam), config)
    mag = np.abs(sol.x)
    top = float(mag.max())
    if top == 0:
        raise EmptySupportError("sparse fit returned no components; regularizer too large")
    first = int(np.flatnonzero(mag >= threshold * top)[0])
    return SelfConvolutionEstimate(grid, sol.x, float(grid[first]), sol.converged)


def chronos_tof(y_ex, carriers, tau_max: float, lam: float, grid_size: int, threshold: float = 0.1,
                config: SolverConfig | None = None) -> float:
    """ToF = half the first grid lag whose coefficient reaches ``threshold`` times the peak."""
    return chronos_estimate(y_ex, carriers, tau_max, lam, grid_size, threshold, config).tof
