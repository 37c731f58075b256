"""Multi-band CSI model: band geometry, sparse multipath channels, hardware distortions."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

MAX_DRAW_ATTEMPTS = 1000


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BandPlan:
    """M bands of N subcarriers; subcarrier n of band m sits at f_{m,0} + n*fs.

    Flat sample index i = m*N + (n + (N-1)/2), i.e. band-major with
    subcarriers ascending inside each band.
    """

    num_bands: int
    subcarriers_per_band: int
    subcarrier_spacing: float
    carrier_freqs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "carrier_freqs", _frozen(self.carrier_freqs, float))
        M, N = self.num_bands, self.subcarriers_per_band
        if M < 1:
            raise ValueError("num_bands must be positive")
        if N < 1 or N % 2 == 0:
            raise ValueError("subcarriers_per_band must be a positive odd integer")
        if not self.subcarrier_spacing > 0:
            raise ValueError("subcarrier_spacing must be positive")
        if self.carrier_freqs.shape != (M,):
            raise ValueError(f"expected {M} carrier frequencies")
        if M > 1 and np.any(np.diff(self.carrier_freqs) <= 0):
            raise ValueError("carrier frequencies must be strictly increasing")

    @classmethod
    def adjacent(cls, num_bands=32, subcarriers_per_band=33, subcarrier_spacing=312.5e3,
                 first_carrier=5.18e9, band_spacing=None) -> "BandPlan":
        """Evenly spaced bands; the default spacing N*fs makes the bands contiguous."""
        if band_spacing is None:
            band_spacing = subcarriers_per_band * subcarrier_spacing
        carriers = first_carrier + band_spacing * np.arange(num_bands)
        return cls(num_bands, subcarriers_per_band, subcarrier_spacing, carriers)

    @property
    def size(self) -> int:
        return self.num_bands * self.subcarriers_per_band

    @property
    def zero_index(self) -> int:
        """Position of subcarrier n=0 inside a band vector."""
        return (self.subcarriers_per_band - 1) // 2

    @property
    def subcarrier_indices(self) -> np.ndarray:
        h = self.zero_index
        return np.arange(-h, h + 1)

    @property
    def freqs(self) -> np.ndarray:
        """(M, N) array of f_{m,n}."""
        return self.carrier_freqs[:, None] + self.subcarrier_indices[None, :] * self.subcarrier_spacing

    @property
    def flat_freqs(self) -> np.ndarray:
        return self.freqs.ravel()

    @property
    def bandwidth(self) -> float:
        f = self.flat_freqs
        return float(f.max() - f.min() + self.subcarrier_spacing)

    def flat_index(self, band: int, n: int) -> int:
        return band * self.subcarriers_per_band + n + self.zero_index

    def band_subcarrier(self, i: int) -> tuple[int, int]:
        m, pos = divmod(int(i), self.subcarriers_per_band)
        return m, pos - self.zero_index

    def to_dict(self) -> dict:
        return {
            "num_bands": self.num_bands,
            "subcarriers_per_band": self.subcarriers_per_band,
            "subcarrier_spacing": self.subcarrier_spacing,
            "carrier_freqs": self.carrier_freqs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BandPlan":
        return cls(d["num_bands"], d["subcarriers_per_band"], d["subcarrier_spacing"], d["carrier_freqs"])


def lag_gaps(delays) -> np.ndarray:
    """Gaps between consecutive sorted values of {0} U {|tau_k - tau_l| : k != l}."""
    d = np.asarray(delays, dtype=float)
    iu = np.triu_indices(d.size, 1)
    lags = np.sort(np.concatenate([[0.0], np.abs(d[:, None] - d[None, :])[iu]]))
    return np.diff(lags)


@dataclass(frozen=True, eq=False)
class MultipathChannel:
    """h(tau) = sum_k c_k delta(tau - tau_k) with a collision-free difference set."""

    delays: np.ndarray
    gains: np.ndarray
    tau_max: float

    def __post_init__(self):
        object.__setattr__(self, "delays", _frozen(self.delays, float))
        object.__setattr__(self, "gains", _frozen(self.gains, complex))
        d = self.delays
        if d.ndim != 1 or d.size < 1 or self.gains.shape != d.shape:
            raise ValueError("need K >= 1 delays and one gain per delay")
        if np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing")
        if d[0] < 0 or d[-1] > self.tau_max:
            raise ValueError("delays must lie in [0, tau_max]")
        if d.size > 1 and np.any(lag_gaps(d) <= 0):
            raise ValueError("difference set has a collision")

    @property
    def num_paths(self) -> int:
        return self.delays.size

    @property
    def tof(self) -> float:
        return float(self.delays[0])

    def to_dict(self) -> dict:
        return {
            "delays": self.delays.tolist(),
            "gains_re": self.gains.real.tolist(),
            "gains_im": self.gains.imag.tolist(),
            "tau_max": self.tau_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MultipathChannel":
        gains = np.asarray(d["gains_re"]) + 1j * np.asarray(d["gains_im"])
        return cls(d["delays"], gains, d["tau_max"])


@dataclass(frozen=True, eq=False)
class DistortionParams:
    """Per-band PDD offsets, constant phase offsets, noise variance and power gain.

    The n-th subcarrier of band m is rotated by exp(-j(2 pi n fs delta_m + psi_m)).
    """

    time_offsets: np.ndarray
    phase_offsets: np.ndarray
    noise_var: float
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "time_offsets", _frozen(self.time_offsets, float))
        object.__setattr__(self, "phase_offsets", _frozen(self.phase_offsets, float))
        if self.time_offsets.shape != self.phase_offsets.shape or self.time_offsets.ndim != 1:
            raise ValueError("need one time offset and one phase offset per band")
        if self.noise_var < 0:
            raise ValueError("noise variance must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "time_offsets": self.time_offsets.tolist(),
            "phase_offsets": self.phase_offsets.tolist(),
            "noise_var": self.noise_var,
            "alpha": self.alpha,
        }


@dataclass(frozen=True, eq=False)
class CsiSnapshot:
    """Distorted CSI of all bands as seen by one device.

    ``values`` is (M, N). Entries where ``observed`` is False are not available
    to estimators (the zero subcarrier); the array still holds the value the
    hardware would have produced there so tests can reference it.
    ``exchanged`` is the reciprocal product vector y' (None until filled).
    """

    values: np.ndarray
    observed: np.ndarray
    plan: BandPlan
    snr_db: float | None = None
    exchanged: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, complex))
        object.__setattr__(self, "observed", _frozen(self.observed, bool))
        shape = (self.plan.num_bands, self.plan.subcarriers_per_band)
        if self.values.shape != shape or self.observed.shape != shape:
            raise ValueError(f"snapshot arrays must have shape {shape}")
        if self.exchanged is not None:
            object.__setattr__(self, "exchanged", _frozen(self.exchanged, complex))
            if self.exchanged.shape != (self.plan.num_bands,):
                raise ValueError("exchanged vector needs one entry per band")

    def with_exchange(self, exchanged) -> "CsiSnapshot":
        return replace(self, exchanged=exchanged)

    def to_dict(self) -> dict:
        out = {
            "values_re": self.values.real.tolist(),
            "values_im": self.values.imag.tolist(),
            "observed": self.observed.tolist(),
            "snr_db": self.snr_db,
        }
        if self.exchanged is not None:
            out["exchanged_re"] = self.exchanged.real.tolist()
            out["exchanged_im"] = self.exchanged.imag.tolist()
        return out


def sample_cfr(channel: MultipathChannel, plan: BandPlan) -> np.ndarray:
    """Stacked CFR samples sum_k c_k exp(-j 2 pi f_{m,n} tau_k), length M*N."""
    phase = np.exp(-2j * np.pi * np.outer(plan.flat_freqs, channel.delays))
    return phase @ channel.gains


def noise_var_for_snr(cfr, snr_db: float) -> float:
    """Noise variance giving the requested mean per-sample SNR (inf dB -> 0)."""
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    power = float(np.mean(np.abs(cfr) ** 2))
    return power / 10 ** (snr_db / 10)


def _complex_noise(rng, shape, var):
    if var == 0:
        return np.zeros(shape, dtype=complex)
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def distortion_phase(params: DistortionParams, plan: BandPlan) -> np.ndarray:
    """(M, N) array phi_{m,n} = 2 pi n fs delta_m + psi_m."""
    n = plan.subcarrier_indices[None, :]
    return (2 * np.pi * plan.subcarrier_spacing * n * params.time_offsets[:, None]
            + params.phase_offsets[:, None])


def apply_distortions(cfr, params: DistortionParams, plan: BandPlan, rng, snr_db=None) -> CsiSnapshot:
    """y = alpha exp(-j phi) h + z, with the zero subcarrier flagged unobserved."""
    h = np.asarray(cfr, dtype=complex).reshape(plan.num_bands, plan.subcarriers_per_band)
    if params.time_offsets.size != plan.num_bands:
        raise ValueError("distortion parameters do not match the band plan")
    y = params.alpha * np.exp(-1j * distortion_phase(params, plan)) * h
    y = y + _complex_noise(rng, y.shape, params.noise_var)
    observed = np.ones(y.shape, dtype=bool)
    observed[:, plan.zero_index] = False
    return CsiSnapshot(values=y, observed=observed, plan=plan, snr_db=snr_db)


def _check_reciprocal(params_tx, params_rx):
    s = np.angle(np.exp(1j * (params_tx.phase_offsets + params_rx.phase_offsets)))
    if np.any(np.abs(s) > 1e-9):
        raise ValueError("transmitter and receiver phase offsets must be negatives of each other")


def make_reciprocal_pair(channel: MultipathChannel, plan: BandPlan, params_tx: DistortionParams,
                         params_rx: DistortionParams, rng):
    """Zero-subcarrier CSI at both ends: h0 e^{+j psi} + z_tx and h0 e^{-j psi} + z_rx.

    ``params_rx.phase_offsets`` holds psi and ``params_tx.phase_offsets`` holds -psi,
    matching the exp(-j psi) convention of :func:`apply_distortions`.
    """
    _check_reciprocal(params_tx, params_rx)
    h0 = sample_cfr(channel, plan).reshape(plan.num_bands, -1)[:, plan.zero_index]
    y_tx = params_tx.alpha * h0 * np.exp(-1j * params_tx.phase_offsets)
    y_rx = params_rx.alpha * h0 * np.exp(-1j * params_rx.phase_offsets)
    y_tx = y_tx + _complex_noise(rng, h0.shape, params_tx.noise_var)
    y_rx = y_rx + _complex_noise(rng, h0.shape, params_rx.noise_var)
    return y_tx, y_rx


def make_reciprocal_snapshots(cfr, plan: BandPlan, params_tx: DistortionParams,
                              params_rx: DistortionParams, rng, snr_db=None):
    """Full-band snapshots at both ends of the link (independent PDD and noise)."""
    _check_reciprocal(params_tx, params_rx)
    tx = apply_distortions(cfr, params_tx, plan, rng, snr_db)
    rx = apply_distortions(cfr, params_rx, plan, rng, snr_db)
    return tx, rx


def draw_channel(rng, num_paths: int, tau_max: float, decay_constant: float | None = None,
                 min_gap: float = 0.0, grid_step: float | None = None) -> MultipathChannel:
    """Random K-path channel with an exponentially decaying power-delay profile.

    Delays are i.i.d. uniform on (0, tau_max] and redrawn until every gap of the
    difference set (including the gap to lag 0) exceeds ``min_gap``. With
    ``grid_step`` the delays are snapped to multiples of it first. Gains are
    complex Gaussian with variance exp(-tau/decay_constant), then normalized to
    unit total power.
    """
    if num_paths < 1:
        raise ValueError("need at least one path")
    if not tau_max > 0:
        raise ValueError("tau_max must be positive")
    if decay_constant is None:
        decay_constant = tau_max / 2
    for _ in range(MAX_DRAW_ATTEMPTS):
        tau = np.sort(tau_max - rng.uniform(0.0, tau_max, num_paths))
        if grid_step is not None:
            tau = np.clip(np.round(tau / grid_step), 1, np.floor(tau_max / grid_step + 1e-9)) * grid_step
            if np.any(np.diff(tau) <= 0):
                continue
        if num_paths > 1 and np.min(lag_gaps(tau)) <= min_gap:
            continue
        break
    else:
        raise ValueError(
            f"could not draw {num_paths} delays in (0, {tau_max:.3e}] with lag gaps above "
            f"{min_gap:.3e} after {MAX_DRAW_ATTEMPTS} attempts; grid too coarse for K"
        )
    var = np.exp(-tau / decay_constant) if np.isfinite(decay_constant) else np.ones(num_paths)
    gains = np.sqrt(var / 2) * (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths))
    gains = gains / np.linalg.norm(gains)
    return MultipathChannel(tau, gains, tau_max)


def draw_distortions(rng, plan: BandPlan, noise_var: float, delta_max: float,
                     tau_max: float | None = None) -> DistortionParams:
    """PDD offsets uniform on [0, delta_max] and phase offsets uniform on [0, 2 pi)."""
    period = 1.0 / plan.subcarrier_spacing
    if delta_max < 0:
        raise ValueError("delta_max must be nonnegative")
    if (tau_max or 0.0) + delta_max >= period:
        raise ValueError(
            f"tau_max + delta_max = {(tau_max or 0.0) + delta_max:.3e} s must stay below 1/fs = {period:.3e} s"
        )
    M = plan.num_bands
    delta = rng.uniform(0.0, delta_max, M) if delta_max > 0 else np.zeros(M)
    psi = rng.uniform(0.0, 2 * np.pi, M)
    return DistortionParams(delta, psi, noise_var)


def draw_reciprocal_distortions(rng, plan: BandPlan, noise_var: float, delta_max: float,
                                tau_max: float | None = None):
    """(tx, rx) parameters sharing psi with opposite signs and independent PDD."""
    rx = draw_distortions(rng, plan, noise_var, delta_max, tau_max)
    delta_tx = rng.uniform(0.0, delta_max, plan.num_bands) if delta_max > 0 else np.zeros(plan.num_bands)
    tx = DistortionParams(delta_tx, -rx.phase_offsets, noise_var)
    return tx, rx
