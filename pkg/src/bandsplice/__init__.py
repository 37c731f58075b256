"""Multi-band WiFi time-of-flight estimation by sparse phase retrieval.

Per-band CSI is denoised with an oversampled DFT dictionary, the CIR
autocorrelation is recovered from the CSI magnitudes, the CIR is rebuilt from
the autocorrelation up to shift and reflection, and the remaining ambiguity is
resolved with the reciprocal zero-subcarrier exchange. A self-convolution
baseline and a Monte-Carlo harness are included.
"""

from .errors import PipelineError
from .signal_model import (BandPlan, CsiSnapshot, DistortionParams, MultipathChannel, apply_distortions,
                           draw_channel, draw_distortions, draw_reciprocal_distortions, make_reciprocal_pair,
                           sample_cfr)
from .sparse_solver import BpdnProblem, SolverConfig, SparseSolution, solve_bpdn, solve_least_squares

__all__ = [
    "BandPlan", "BpdnProblem", "CsiSnapshot", "DistortionParams", "MultipathChannel", "PipelineError",
    "SolverConfig", "SparseSolution", "apply_distortions", "draw_channel", "draw_distortions",
    "draw_reciprocal_distortions", "make_reciprocal_pair", "sample_cfr", "solve_bpdn", "solve_least_squares",
]
__version__ = "0.1.0"
