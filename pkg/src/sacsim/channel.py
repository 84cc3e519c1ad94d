"""Moving-receiver line-of-sight channel and noise injection.

The channel applies, per terminal: the link-budget attenuation, the
bulk-delay phase ramp across subcarriers, and the per-sample carrier
phase history of the moving receiver.  Multi-terminal uplinks add
element-wise; receiver noise is circularly-symmetric white Gaussian.

Ideal frame synchronization is assumed throughout: the bulk delay is
absorbed as a circular rotation of each OFDM symbol (exact thanks to
the cyclic prefix), so only its frequency-selective phase ramp
survives into the receiver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C0
from scipy.constants import k as BOLTZMANN

from .geometry import CarrierConfig, OrbitGeometry, UePosition, path_phase_excess
from .ofdm import OfdmConfig


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watts(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def free_space_path_loss_db(distance_m: float, carrier: CarrierConfig) -> float:
    """Free-space loss 20*log10(4*pi*d/lambda) in dB."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    return 20.0 * np.log10(4.0 * np.pi * distance_m / carrier.wavelength)


@dataclass(frozen=True)
class LinkBudget:
    """Gain/loss/noise terms of the uplink, all in dB/dBi except kelvin."""

    g_tx_dbi: float
    g_rx_dbi: float
    path_loss_db: float
    atmospheric_loss_db: float = 0.0
    scintillation_loss_db: float = 0.0
    noise_figure_db: float = 0.0
    temperature_k: float = 290.0

    @property
    def total_loss_db(self) -> float:
        return self.path_loss_db + self.atmospheric_loss_db + self.scintillation_loss_db

    @property
    def antenna_gain_amplitude(self) -> float:
        """sqrt(G_tx * G_rx) in linear amplitude."""
        return np.sqrt(db_to_linear(self.g_tx_dbi) * db_to_linear(self.g_rx_dbi))


def attenuation_amplitude(budget: LinkBudget) -> float:
    """Linear amplitude factor of the total propagation loss."""
    return 10.0 ** (-budget.total_loss_db / 20.0)


@dataclass(frozen=True)
class NoiseModel:
    """Thermal-noise bookkeeping referenced to the subcarrier grid.

    ``sample_variance`` is E[|n|^2] of one complex baseband sample at
    the full rate B, equal to N times the per-subcarrier noise power;
    unitary demodulation then leaves each subcarrier with that same
    variance.
    """

    per_subcarrier_power_w: float
    sample_variance_w: float
    seed: int | None = None


def make_noise_model(cfg: OfdmConfig, budget: LinkBudget,
                     seed: int | None = None) -> NoiseModel:
    p_eta = (BOLTZMANN * cfg.delta_f * budget.temperature_k
             * db_to_linear(budget.noise_figure_db))
    return NoiseModel(per_subcarrier_power_w=p_eta,
                      sample_variance_w=cfg.n_subcarriers * p_eta,
                      seed=seed)


@dataclass
class UeTransmit:
    """One terminal's serial transmit stream, scaled to its power."""

    ue_id: int
    position: UePosition
    p_tx_dbm: float
    samples: np.ndarray

    def __post_init__(self):
        mean_power = float(np.mean(np.abs(self.samples) ** 2))
        target = dbm_to_watts(self.p_tx_dbm)
        if not np.isclose(mean_power, target, rtol=1e-6):
            raise ValueError("stream power does not match the declared P_Tx")


def scale_to_power(stream, p_tx_dbm: float) -> np.ndarray:
    """Scale a unit-mean-power stream so E[|s|^2] equals P_Tx."""
    stream = np.asarray(stream, dtype=complex)
    mean_power = float(np.mean(np.abs(stream) ** 2))
    if mean_power <= 0:
        raise ValueError("cannot scale an all-zero stream")
    return stream * np.sqrt(dbm_to_watts(p_tx_dbm) / mean_power)


def _apply_bulk_delay(stream: np.ndarray, cfg: OfdmConfig,
                      delay_s: float) -> np.ndarray:
    """Circularly delay each OFDM symbol by the (fractional) bulk delay.

    Implemented as the per-subcarrier ramp exp(-j*2*pi*k*d/N) with d
    the delay in samples; exact for the CP-cyclic structure under
    ideal synchronization.
    """
    d_samples = delay_s * cfg.bandwidth
    sym = stream.reshape(cfg.m_symbols, cfg.samples_per_symbol)
    core = sym[:, cfg.n_cp:]
    spec = np.fft.fft(core, axis=1)
    k = np.arange(cfg.n_subcarriers)
    spec *= np.exp(-2j * np.pi * k * d_samples / cfg.n_subcarriers)
    core = np.fft.ifft(spec, axis=1)
    if cfg.n_cp:
        out = np.concatenate([core[:, -cfg.n_cp:], core], axis=1)
    else:
        out = core
    return out.reshape(-1)


def apply_channel(tx: UeTransmit, cfg: OfdmConfig, geo: OrbitGeometry,
                  carrier: CarrierConfig, budget: LinkBudget,
                  phase_mode: str = "fresnel") -> np.ndarray:
    """Noise-free received stream for one terminal.

    Each output sample is sqrt(G_tx*G_rx) * alpha * s_delayed(t) *
    exp(j*phase(t)) with t on the receiver's sample clock (sample i at
    t = i/B) and the phase history of the moving receiver evaluated in
    ``fresnel`` (default) or ``exact`` mode.  The constant range offset
    2*pi*r0/lambda is referenced out of the phase history: it is common
    to all terminals and unobservable through equalization, and keeping
    the evaluated arguments small preserves float64 combining nulls.
    """
    stream = np.asarray(tx.samples, dtype=complex)
    if stream.size != cfg.samples_per_frame:
        raise ValueError(
            f"expected {cfg.samples_per_frame} samples, got {stream.size}")
    win = cfg.acquisition_window()
    delayed = _apply_bulk_delay(stream, cfg, tx.position.delay)
    t = np.arange(stream.size) / cfg.bandwidth
    phase = path_phase_excess(t, geo, win, tx.position, carrier, mode=phase_mode)
    amp = budget.antenna_gain_amplitude * attenuation_amplitude(budget)
    return amp * delayed * np.exp(1j * phase)


def superpose(streams) -> np.ndarray:
    """Element-wise sum of equally-long received streams."""
    streams = [np.asarray(s) for s in streams]
    if not streams:
        raise ValueError("nothing to superpose")
    length = streams[0].size
    if any(s.size != length for s in streams):
        raise ValueError("stream lengths differ")
    return np.sum(streams, axis=0)


def add_awgn(stream, noise: NoiseModel, rng: np.random.Generator | None = None
             ) -> np.ndarray:
    """Add white circular Gaussian noise with the model's sample variance."""
    stream = np.asarray(stream, dtype=complex)
    if noise.sample_variance_w == 0:
        return stream.copy()
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    sigma = np.sqrt(noise.sample_variance_w / 2.0)
    return stream + sigma * (rng.standard_normal(stream.size)
                             + 1j * rng.standard_normal(stream.size))


def link_snr_db(p_tx_dbm: float, budget: LinkBudget, bandwidth: float,
                combining_gain_db: float = 0.0) -> float:
    """Closed-form post-equalization SNR prediction per subcarrier.

    P_tx * G_tx * G_rx * G_combining * alpha^2 / (k_B * B * T * NF).
    """
    signal = (dbm_to_watts(p_tx_dbm)
              * db_to_linear(budget.g_tx_dbi)
              * db_to_linear(budget.g_rx_dbi)
              * db_to_linear(combining_gain_db)
              * attenuation_amplitude(budget) ** 2)
    noise = (BOLTZMANN * bandwidth * budget.temperature_k
             * db_to_linear(budget.noise_figure_db))
    return 10.0 * np.log10(signal / noise)
