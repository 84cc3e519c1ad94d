"""OFDM frame construction and symbol-level helpers.

The transmit frame repeats one OFDM symbol M times: every column of the
frequency-domain grid carries the same data/pilot loading.  Transforms
are unitary (1/sqrt(N) both ways) so per-sample noise variance is
preserved through modulation and demodulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CP_RATIO, AcquisitionWindow, OrbitGeometry

_SQRT2 = np.sqrt(2.0)
_PILOT_SALT = 0x5AC  # fixed salt so pilot sequences depend only on the UE id


def normal_cp_length(n_subcarriers: int) -> int:
    """Cyclic-prefix length in samples for the normal-CP ratio."""
    return int(round(n_subcarriers * CP_RATIO))


@dataclass(frozen=True)
class OfdmConfig:
    """Numerology of one repeated-symbol frame."""

    n_subcarriers: int       # N
    delta_f: float           # subcarrier spacing [Hz]
    m_symbols: int           # symbols per frame (M)
    n_cp: int | None = None  # CP length in samples; default: normal-CP ratio

    def __post_init__(self):
        if self.n_subcarriers < 2 or self.m_symbols < 1:
            raise ValueError("invalid OFDM dimensions")
        if self.delta_f <= 0:
            raise ValueError("subcarrier spacing must be positive")
        if self.n_cp is None:
            object.__setattr__(self, "n_cp", normal_cp_length(self.n_subcarriers))
        if self.n_cp < 0:
            raise ValueError("CP length must be non-negative")

    @property
    def bandwidth(self) -> float:
        return self.n_subcarriers * self.delta_f

    @property
    def useful_time(self) -> float:
        return 1.0 / self.delta_f

    @property
    def cp_time(self) -> float:
        return self.n_cp / self.bandwidth

    @property
    def symbol_time(self) -> float:
        return self.useful_time + self.cp_time

    @property
    def frame_time(self) -> float:
        return self.m_symbols * self.symbol_time

    @property
    def samples_per_symbol(self) -> int:
        return self.n_subcarriers + self.n_cp

    @property
    def samples_per_frame(self) -> int:
        return self.m_symbols * self.samples_per_symbol

    def acquisition_window(self) -> AcquisitionWindow:
        return AcquisitionWindow(self.m_symbols, self.symbol_time)


@dataclass(frozen=True)
class PilotLayout:
    """Regular pilot comb anchored at subcarrier 0."""

    n_subcarriers: int
    fraction: float = 0.25
    spacing: int = 4
    ue_id: int = 0
    pilot_indices: np.ndarray = field(init=False, repr=False)
    pilot_symbols: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        count = int(round(self.fraction * self.n_subcarriers))
        idx = np.arange(0, self.n_subcarriers, self.spacing)[:count]
        if len(idx) != count:
            raise ValueError("pilot comb does not fit the requested fraction")
        rng = np.random.default_rng(
            np.random.SeedSequence(_PILOT_SALT, spawn_key=(self.ue_id,)))
        quadrant = rng.integers(0, 4, size=count)
        sym = np.exp(1j * (np.pi / 4.0 + quadrant * np.pi / 2.0))
        object.__setattr__(self, "pilot_indices", idx)
        object.__setattr__(self, "pilot_symbols", sym)

    @property
    def data_indices(self) -> np.ndarray:
        mask = np.ones(self.n_subcarriers, dtype=bool)
        mask[self.pilot_indices] = False
        return np.nonzero(mask)[0]

    @property
    def n_data(self) -> int:
        return self.n_subcarriers - len(self.pilot_indices)


@dataclass
class FrameGrid:
    """N x M grid of samples (time domain) or symbols (frequency domain)."""

    data: np.ndarray
    domain: str  # "time" | "frequency"

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("frame grid must be two-dimensional")
        if self.domain not in ("time", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("frame grid contains non-finite entries")

    @property
    def n_subcarriers(self) -> int:
        return self.data.shape[0]

    @property
    def m_symbols(self) -> int:
        return self.data.shape[1]


def map_bits(bits) -> np.ndarray:
    """Gray-map a bit sequence onto unit-power QPSK symbols.

    Bit pair (b0, b1) maps to ((1-2*b0) + 1j*(1-2*b1)) / sqrt(2), so
    00 -> (1+1j)/sqrt(2) and the in-phase component carries the even
    bit.
    """
    bits = np.asarray(bits, dtype=np.int8).reshape(-1)
    if bits.size % 2:
        raise ValueError("QPSK needs an even number of bits")
    b = bits.reshape(-1, 2)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / _SQRT2


def demap_bits_hard(symbols) -> np.ndarray:
    """Hard inverse of :func:`map_bits` (sign decisions per component)."""
    s = np.asarray(symbols).reshape(-1)
    bits = np.empty(2 * s.size, dtype=np.int8)
    bits[0::2] = (s.real < 0).astype(np.int8)
    bits[1::2] = (s.imag < 0).astype(np.int8)
    return bits


def llr_demap(symbols, noise_var) -> np.ndarray:
    """Exact per-bit LLRs for Gray QPSK in complex AWGN.

    ``noise_var`` is E[|n|^2] per symbol (scalar or per-symbol array);
    positive LLR means bit 0.  For the unit-power constellation the
    exact LLR is 2*sqrt(2)*component/noise_var.
    """
    s = np.asarray(symbols).reshape(-1)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), s.shape)
    if np.any(nv <= 0):
        raise ValueError("noise variance must be positive")
    factor = 2.0 * _SQRT2 / nv
    llrs = np.empty(2 * s.size, dtype=float)
    llrs[0::2] = factor * s.real
    llrs[1::2] = factor * s.imag
    return llrs


def build_frame(data_symbols, pilots: PilotLayout, cfg: OfdmConfig) -> FrameGrid:
    """Assemble the frequency-domain frame of M identical columns."""
    data_symbols = np.asarray(data_symbols, dtype=complex).reshape(-1)
    if pilots.n_subcarriers != cfg.n_subcarriers:
        raise ValueError("pilot layout does not match the numerology")
    if data_symbols.size != pilots.n_data:
        raise ValueError(
            f"expected {pilots.n_data} data symbols, got {data_symbols.size}")
    column = np.empty(cfg.n_subcarriers, dtype=complex)
    column[pilots.pilot_indices] = pilots.pilot_symbols
    column[pilots.data_indices] = data_symbols
    return FrameGrid(np.repeat(column[:, None], cfg.m_symbols, axis=1), "frequency")


def ofdm_modulate(grid: FrameGrid, cfg: OfdmConfig) -> np.ndarray:
    """Unitary IDFT per column, CP prepend, serialize to one stream."""
    if grid.domain != "frequency":
        raise ValueError("modulation expects a frequency-domain grid")
    if grid.data.shape != (cfg.n_subcarriers, cfg.m_symbols):
        raise ValueError("grid dimensions do not match the numerology")
    cores = np.fft.ifft(grid.data, axis=0, norm="ortho")
    if cfg.n_cp:
        cores = np.concatenate([cores[-cfg.n_cp:], cores], axis=0)
    return cores.T.reshape(-1)


def serial_to_grid(stream, cfg: OfdmConfig) -> FrameGrid:
    """Split a serial stream into the CP-stripped time-domain grid."""
    stream = np.asarray(stream).reshape(-1)
    if stream.size != cfg.samples_per_frame:
        raise ValueError(
            f"expected {cfg.samples_per_frame} samples, got {stream.size}")
    sym = stream.reshape(cfg.m_symbols, cfg.samples_per_symbol)
    return FrameGrid(sym[:, cfg.n_cp:].T.copy(), "time")


def ofdm_demod_column(samples) -> np.ndarray:
    """Unitary forward DFT of one CP-stripped column."""
    samples = np.asarray(samples).reshape(-1)
    return np.fft.fft(samples, norm="ortho")


def ofdm_demod_grid(grid: FrameGrid) -> FrameGrid:
    """Column-wise unitary DFT of the CP-stripped time grid."""
    if grid.domain != "time":
        raise ValueError("demodulation expects a time-domain grid")
    return FrameGrid(np.fft.fft(grid.data, axis=0, norm="ortho"), "frequency")
