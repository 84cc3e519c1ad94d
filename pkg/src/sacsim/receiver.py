"""Coherent synthetic-aperture receive processing.

Stage order for one detected terminal: azimuth compression (reference
quadratic phase removal), Doppler-domain profiling and peak detection,
beamsteering across the M acquisitions, intra-symbol Doppler
correction, demodulation, channel estimation, zero-forcing
equalization and soft demapping.  Every stage up to equalization is
unit-modulus or unit-norm, so noise variance is preserved through the
chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import CarrierConfig, OrbitGeometry, UePosition, \
    path_phase_excess, resolution_and_ambiguity
from .ofdm import FrameGrid, OfdmConfig, PilotLayout, llr_demap, ofdm_demod_column


class UnreliablePilotError(ValueError):
    """Raised when pilot observations are too weak for equalization."""


@lru_cache(maxsize=8)
def _compression_reference(n: int, n_cp: int, m: int, delta_f: float,
                           r0: float, v: float, fc: float) -> np.ndarray:
    """Conjugate reference phasor for a source at x = 0, shape (N, M)."""
    cfg = OfdmConfig(n_subcarriers=n, delta_f=delta_f, m_symbols=m, n_cp=n_cp)
    geo = OrbitGeometry(r0=r0, v=v)
    carrier = CarrierConfig(fc=fc)
    origin = UePosition(x=0.0, r0=r0)
    n_idx = np.arange(n)[:, None]
    m_idx = np.arange(m)[None, :]
    t = m_idx * cfg.symbol_time + cfg.cp_time + n_idx / cfg.bandwidth
    phase = path_phase_excess(t, geo, cfg.acquisition_window(), origin, carrier)
    return np.exp(-1j * phase)


def azimuth_compress(grid: FrameGrid, cfg: OfdmConfig, geo: OrbitGeometry,
                     carrier: CarrierConfig) -> FrameGrid:
    """Remove the x = 0 reference phase history from the time grid.

    After compression a source at cross-range x contributes a constant
    residual Doppler tone across the M columns instead of a chirp.
    """
    if grid.domain != "time":
        raise ValueError("azimuth compression expects the CP-stripped time grid")
    if grid.data.shape != (cfg.n_subcarriers, cfg.m_symbols):
        raise ValueError("grid dimensions do not match the numerology")
    ref = _compression_reference(cfg.n_subcarriers, cfg.n_cp, cfg.m_symbols,
                                 cfg.delta_f, geo.r0, geo.v, carrier.fc)
    return FrameGrid(grid.data * ref, "time")


@dataclass
class AzimuthProfile:
    """Magnitude profile across Doppler bins with its coordinate axes."""

    norms: np.ndarray         # per-bin column Euclidean norms
    bins: np.ndarray          # bin coordinate l (fractional when padded)
    doppler_hz: np.ndarray
    angle_rad: np.ndarray
    cross_range_m: np.ndarray
    pad_factor: int
    m_symbols: int

    def __post_init__(self):
        if np.any(self.norms < 0):
            raise ValueError("profile norms must be non-negative")


def doppler_profile(r_az: FrameGrid, cfg: OfdmConfig, geo: OrbitGeometry,
                    carrier: CarrierConfig, pad_factor: int = 1) -> AzimuthProfile:
    """Transform across the M acquisitions and take column norms.

    ``pad_factor`` > 1 zero-pads the transform for a finer sampling of
    the underlying kernel (used by the interpolated estimator and for
    plotting-quality profiles).
    """
    if r_az.domain != "time":
        raise ValueError("profiling expects the compressed time grid")
    m = cfg.m_symbols
    m_pad = pad_factor * m
    # norms^2(l) = sum_n |FFT_m r[n,:]|^2 equals the transform of the
    # column autocorrelation: one Gram matrix replaces N long FFTs.
    gram = r_az.data.conj().T @ r_az.data
    rho = np.array([np.trace(gram, offset=k) for k in range(1, m)])
    c = np.zeros(m_pad, dtype=complex)
    c[0] = np.trace(gram)
    c[1:m] += rho
    np.add.at(c, np.arange(m_pad - m + 1, m_pad) % m_pad, rho[::-1].conj())
    norms_sq = np.fft.fft(c).real / m
    norms = np.fft.fftshift(np.sqrt(np.maximum(norms_sq, 0.0)))
    bins = (np.arange(m_pad) - m_pad // 2) / pad_factor
    delta_f_d = 1.0 / cfg.frame_time
    doppler = bins * delta_f_d
    angle = -doppler * carrier.wavelength / geo.v
    return AzimuthProfile(norms=norms, bins=bins, doppler_hz=doppler,
                          angle_rad=angle, cross_range_m=angle * geo.r0,
                          pad_factor=pad_factor, m_symbols=m)


@dataclass(frozen=True)
class UeDetection:
    """One detected terminal on the Doppler/angle grid."""

    index: int
    bin: float
    f_hat: float
    theta_hat: float
    x_hat: float
    peak_magnitude: float


def _parabolic_refine(norms: np.ndarray, i: int) -> float:
    """Vertex offset (in samples) of a parabola through three points."""
    if i == 0 or i == norms.size - 1:
        return 0.0
    y0, y1, y2 = norms[i - 1], norms[i], norms[i + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom >= 0:
        return 0.0
    return 0.5 * (y0 - y2) / denom


def detect_ues(profile: AzimuthProfile, count: int, cfg: OfdmConfig,
               geo: OrbitGeometry, carrier: CarrierConfig,
               refine: bool = False) -> list[UeDetection]:
    """Pick the ``count`` strongest well-separated profile peaks.

    Successive cancellation masks one bin width around each pick
    before the next search: inclusively in grid mode (the picked bin
    and both neighbors), exclusively when ``refine`` is set so that a
    second source exactly one bin away survives.  Grid-mode ties are
    broken toward the smaller |bin|.  ``refine`` adds a parabolic
    vertex fit on the (padded) profile around each peak.

    Raises ValueError when fewer than ``count`` peaks remain.
    """
    if count < 1 or count > profile.m_symbols:
        raise ValueError("invalid detection count")
    delta_f_d = 1.0 / cfg.frame_time
    working = profile.norms.astype(float).copy()
    detections = []
    for k in range(count):
        if not np.any(working > 0):
            raise ValueError(f"only {k} of {count} peaks found")
        best = np.max(working)
        ties = np.nonzero(working >= best * (1.0 - 1e-12))[0]
        i = ties[np.argmin(np.abs(profile.bins[ties]))]
        l_hat = float(profile.bins[i])
        peak = float(profile.norms[i])
        if refine:
            l_hat += _parabolic_refine(profile.norms, i) / profile.pad_factor
        f_hat = l_hat * delta_f_d
        theta_hat = -f_hat * carrier.wavelength / geo.v
        detections.append(UeDetection(index=k, bin=l_hat, f_hat=f_hat,
                                      theta_hat=theta_hat,
                                      x_hat=theta_hat * geo.r0,
                                      peak_magnitude=peak))
        dist = np.abs(profile.bins - profile.bins[i])
        if refine:
            working[dist < 1.0 - 1e-9] = 0.0
        else:
            working[dist <= 1.0 + 1e-9] = 0.0
    detections.sort(key=lambda d: -d.peak_magnitude)
    return [UeDetection(index=k, bin=d.bin, f_hat=d.f_hat,
                        theta_hat=d.theta_hat, x_hat=d.x_hat,
                        peak_magnitude=d.peak_magnitude)
            for k, d in enumerate(detections)]


def steering_vector(theta: float, cfg: OfdmConfig, geo: OrbitGeometry,
                    carrier: CarrierConfig) -> np.ndarray:
    """Unit-norm combining weights toward azimuth ``theta``."""
    m = np.arange(cfg.m_symbols)
    spacing = geo.v * cfg.symbol_time
    return np.exp(2j * np.pi * m * spacing * theta / carrier.wavelength) \
        / np.sqrt(cfg.m_symbols)


def beamsteer(r_az: FrameGrid, theta_hat: float, cfg: OfdmConfig,
              geo: OrbitGeometry, carrier: CarrierConfig) -> np.ndarray:
    """Coherently combine the M acquisitions toward ``theta_hat``.

    Matched steering yields an amplitude gain of sqrt(M) on the source
    while the unit-norm weights leave the noise variance unchanged.
    """
    if not np.isfinite(theta_hat):
        raise ValueError("steering angle must be finite")
    res = resolution_and_ambiguity(cfg.acquisition_window(), carrier, geo)
    if abs(theta_hat) > res.theta_max_ua * (1.0 + 1e-9):
        raise ValueError("steering angle outside the unambiguous range")
    return r_az.data @ steering_vector(theta_hat, cfg, geo, carrier)


def doppler_correct(r_theta: np.ndarray, f_hat: float,
                    cfg: OfdmConfig) -> np.ndarray:
    """Remove the intra-symbol phase ramp of the residual Doppler."""
    r_theta = np.asarray(r_theta).reshape(-1)
    if r_theta.size != cfg.n_subcarriers:
        raise ValueError("combined vector length must equal N")
    n = np.arange(cfg.n_subcarriers)
    return r_theta * np.exp(-2j * np.pi * f_hat * n / cfg.bandwidth)


def estimate_channel(freq_symbols: np.ndarray, pilots: PilotLayout) -> np.ndarray:
    """Zero-forcing coefficients from the pilot comb.

    Least-squares per-pilot estimates are derotated by the dominant
    linear phase slope (the bulk-delay ramp), linearly interpolated on
    real/imaginary parts with nearest-pilot edge extension, and
    re-rotated.  Returns G = 1/H over all N subcarriers.
    """
    freq_symbols = np.asarray(freq_symbols).reshape(-1)
    n = pilots.n_subcarriers
    if freq_symbols.size != n:
        raise ValueError("symbol vector length must equal N")
    idx = pilots.pilot_indices
    h_p = freq_symbols[idx] / pilots.pilot_symbols
    mags = np.abs(h_p)
    if np.any(mags < 1e-3 * np.median(mags)):
        raise UnreliablePilotError("pilot estimates below the reliability floor")
    # dominant per-subcarrier phase slope, averaged over pilot pairs
    steps = np.diff(idx)
    slope = np.angle(np.sum(h_p[1:] * np.conj(h_p[:-1]))) / float(steps[0])
    flat = h_p * np.exp(-1j * slope * idx)
    k = np.arange(n)
    h_interp = (np.interp(k, idx, flat.real)
                + 1j * np.interp(k, idx, flat.imag))
    h_full = h_interp * np.exp(1j * slope * k)
    return 1.0 / h_full


@dataclass
class EqualizedSymbols:
    """Zero-forcing output with the coefficients and noise scaling used."""

    symbols: np.ndarray
    zf_coefficients: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        if not (len(self.symbols) == len(self.zf_coefficients) == len(self.noise_var)):
            raise ValueError("equalized fields must share one length")


def zf_equalize(freq_symbols: np.ndarray, zf_coefficients: np.ndarray,
                noise_var_in: float) -> EqualizedSymbols:
    """Element-wise zero-forcing with per-subcarrier noise tracking."""
    freq_symbols = np.asarray(freq_symbols).reshape(-1)
    zf_coefficients = np.asarray(zf_coefficients).reshape(-1)
    if freq_symbols.size != zf_coefficients.size:
        raise ValueError("coefficient length must match the symbol vector")
    return EqualizedSymbols(
        symbols=freq_symbols * zf_coefficients,
        zf_coefficients=zf_coefficients,
        noise_var=noise_var_in * np.abs(zf_coefficients) ** 2,
    )


@dataclass
class ReceiveResult:
    llrs: np.ndarray
    equalized: EqualizedSymbols
    freq_symbols: np.ndarray  # combined, Doppler-corrected, demodulated


def receive_ue(r: FrameGrid, detection: UeDetection, cfg: OfdmConfig,
               geo: OrbitGeometry, carrier: CarrierConfig,
               pilots: PilotLayout, noise_var: float,
               ideal_zf: np.ndarray | None = None,
               precompressed: FrameGrid | None = None) -> ReceiveResult:
    """Full per-terminal chain from the CP-stripped grid to data LLRs.

    ``ideal_zf`` bypasses pilot estimation with externally supplied
    zero-forcing coefficients (genie channel knowledge); otherwise the
    pilot comb is used.  ``precompressed`` reuses an already
    azimuth-compressed copy of ``r`` (caller-shared across terminals).
    """
    r_az = precompressed if precompressed is not None \
        else azimuth_compress(r, cfg, geo, carrier)
    combined = beamsteer(r_az, detection.theta_hat, cfg, geo, carrier)
    corrected = doppler_correct(combined, detection.f_hat, cfg)
    freq = ofdm_demod_column(corrected)
    zf = ideal_zf if ideal_zf is not None else estimate_channel(freq, pilots)
    eq = zf_equalize(freq, zf, noise_var)
    data_idx = pilots.data_indices
    llrs = llr_demap(eq.symbols[data_idx], eq.noise_var[data_idx])
    return ReceiveResult(llrs=llrs, equalized=eq, freq_symbols=freq)
