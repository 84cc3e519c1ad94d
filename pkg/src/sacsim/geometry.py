"""Satellite/UE geometry, Doppler relations and aperture planning.

All angles are handled in radians internally; degrees appear only in
formatted output.  Distances are in meters, times in seconds,
frequencies in Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C0

# Cyclic-prefix fraction of the useful symbol time in the reference
# numerology (normal CP, 144 samples at a 2048-point transform).
CP_RATIO = 144.0 / 2048.0


@dataclass(frozen=True)
class OrbitGeometry:
    """Circular-orbit receiver flying a straight line above the scene."""

    r0: float  # orbit height above ground [m]
    v: float   # along-track velocity [m/s]

    def __post_init__(self):
        if self.r0 <= 0 or self.v <= 0:
            raise ValueError("orbit height and velocity must be positive")


@dataclass(frozen=True)
class CarrierConfig:
    fc: float                       # carrier frequency [Hz]
    wavelength: float = field(init=False)

    def __post_init__(self):
        if self.fc <= 0:
            raise ValueError("carrier frequency must be positive")
        object.__setattr__(self, "wavelength", C0 / self.fc)


@dataclass(frozen=True)
class AcquisitionWindow:
    """Timing of the M repeated symbol acquisitions forming the aperture.

    The receiver travels from -L/2 to +L/2 during the frame, so the
    window is centered on the scene origin.
    """

    m_symbols: int      # number of repeated symbol acquisitions (M)
    symbol_time: float  # symbol duration including CP (T) [s]

    def __post_init__(self):
        if self.m_symbols < 1:
            raise ValueError("need at least one acquisition")
        if self.symbol_time <= 0:
            raise ValueError("symbol time must be positive")

    @property
    def frame_time(self) -> float:
        return self.m_symbols * self.symbol_time

    def aperture_length(self, geo: OrbitGeometry) -> float:
        """Synthetic aperture length L = v * M * T."""
        return geo.v * self.frame_time

    def element_spacing(self, geo: OrbitGeometry) -> float:
        """Distance d = v * T traveled between consecutive acquisitions."""
        return geo.v * self.symbol_time


@dataclass(frozen=True)
class UePosition:
    """Static ground terminal at cross-range coordinate x."""

    x: float           # ground cross-range coordinate [m]
    r0: float          # orbit height used for the slant geometry [m]

    @property
    def slant_range(self) -> float:
        return math.hypot(self.x, self.r0)

    @property
    def azimuth(self) -> float:
        """Exact azimuth seen from the trajectory midpoint [rad]."""
        return math.asin(self.x / self.slant_range)

    @property
    def delay(self) -> float:
        """Bulk propagation delay at the trajectory midpoint [s]."""
        return self.slant_range / C0


def sat_x(t, geo: OrbitGeometry, win: AcquisitionWindow):
    """Receiver along-track coordinate x(t) = -L/2 + v*t."""
    return -0.5 * win.aperture_length(geo) + geo.v * np.asarray(t, dtype=float)


def range_at(t, geo: OrbitGeometry, win: AcquisitionWindow, ue: UePosition):
    """Instantaneous receiver-to-terminal range sqrt((x(t)-x_ue)^2 + r0^2)."""
    return np.hypot(sat_x(t, geo, win) - ue.x, geo.r0)


def path_phase_excess(t, geo: OrbitGeometry, win: AcquisitionWindow,
                      ue: UePosition, carrier: CarrierConfig,
                      mode: str = "fresnel"):
    """Carrier phase in excess of the constant 2*pi*r0/lambda [rad].

    The r0 offset is common to every position and time, so referencing
    it out keeps the evaluated arguments small (hundreds of radians
    instead of ~1e7), which preserves the deep cancellation nulls of
    coherent combining in float64.  ``exact`` uses the numerically
    stable form (R - r0) = u^2/(R + r0); ``fresnel`` the quadratic
    expansion u^2/(2 r0).
    """
    u = sat_x(t, geo, win) - ue.x
    if mode == "exact":
        r = np.hypot(u, geo.r0)
        excess = u * u / (r + geo.r0)
    elif mode == "fresnel":
        excess = u * u / (2.0 * geo.r0)
    else:
        raise ValueError(f"unknown phase mode {mode!r}")
    return 2.0 * np.pi * excess / carrier.wavelength


def carrier_phase(t, geo: OrbitGeometry, win: AcquisitionWindow,
                  ue: UePosition, carrier: CarrierConfig,
                  mode: str = "fresnel"):
    """Unwrapped carrier phase accumulated over the slant path [rad].

    ``exact`` evaluates 2*pi*fc*R(t)/c0 on the true root; ``fresnel``
    uses the quadratic near-axis expansion, which is the reference the
    receiver compresses against.  Values are returned raw (no modulo).
    """
    return path_phase_excess(t, geo, win, ue, carrier, mode) \
        + 2.0 * np.pi * geo.r0 / carrier.wavelength


def doppler_true(t, geo: OrbitGeometry, win: AcquisitionWindow,
                 ue: UePosition, carrier: CarrierConfig):
    """Instantaneous Doppler shift of the uncompressed signal [Hz].

    Analytic derivative of the quadratic-phase model: a linear chirp
    with slope v^2/(r0*wavelength) that crosses zero at the point of
    closest approach.
    """
    u = sat_x(t, geo, win) - ue.x
    return geo.v * u / (geo.r0 * carrier.wavelength)


def doppler_after_compression(ue: UePosition, geo: OrbitGeometry,
                              carrier: CarrierConfig) -> float:
    """Constant residual Doppler left after azimuth compression [Hz].

    Valid only in the near-axis regime; positions beyond r0/10 are
    rejected because the quadratic phase model no longer holds there.
    """
    if abs(ue.x) >= geo.r0 / 10.0:
        raise ValueError(
            f"|x|={abs(ue.x):.3g} m outside the near-axis regime (< r0/10)")
    return -geo.v * ue.x / (geo.r0 * carrier.wavelength)


def azimuth_from_doppler(f_hat, geo: OrbitGeometry, carrier: CarrierConfig):
    """Map a residual Doppler estimate to a small-angle azimuth [rad]."""
    return -np.asarray(f_hat, dtype=float) * carrier.wavelength / geo.v


@dataclass(frozen=True)
class ResolutionSummary:
    """Angular/cross-range resolution and ambiguity of the virtual array."""

    delta_theta: float      # azimuth resolution [rad]
    theta_max_ua: float     # one-sided unambiguous azimuth [rad]
    delta_f_d: float        # Doppler bin width [Hz]
    cross_range_res: float  # ground resolution cell [m]
    cross_range_ua: float   # one-sided unambiguous cross range [m]


def resolution_and_ambiguity(win: AcquisitionWindow, carrier: CarrierConfig,
                             geo: OrbitGeometry) -> ResolutionSummary:
    """Resolution set of the aperture synthesized by M acquisitions."""
    if win.m_symbols < 2:
        raise ValueError("resolution needs at least two acquisitions")
    length = win.aperture_length(geo)
    delta_theta = carrier.wavelength / length
    theta_ua = carrier.wavelength / (2.0 * geo.v * win.symbol_time)
    return ResolutionSummary(
        delta_theta=delta_theta,
        theta_max_ua=theta_ua,
        delta_f_d=1.0 / win.frame_time,
        cross_range_res=geo.r0 * delta_theta,
        cross_range_ua=geo.r0 * theta_ua,
    )


@dataclass(frozen=True)
class PlanResult:
    """Acquisition count and rate budget for a cross-range target."""

    m_min: int            # acquisitions needed
    gain_db: float        # coherent combining gain 10*log10(m_min)
    aperture_m: float     # aperture length reached with m_min
    net_rate_bps: float   # net information rate of the repeated frame


def plan_parameters(target_cross_range_m: float, delta_f: float,
                    bandwidth: float, geo: OrbitGeometry,
                    carrier: CarrierConfig,
                    pilot_fraction: float = 0.25,
                    bits_per_symbol: int = 2,
                    code_rate: float = 2.0 / 3.0) -> PlanResult:
    """Acquisition count needed for a requested cross-range resolution.

    Uses the standard-numerology symbol duration (useful time plus the
    normal-CP fraction) so the result is independent of how the sample
    grid quantizes the CP for a particular bandwidth.  The net rate
    divides one frame's information payload by the frame duration.
    """
    if target_cross_range_m <= 0:
        raise ValueError("target resolution must be positive")
    length_req = carrier.wavelength * geo.r0 / target_cross_range_m
    if length_req > geo.r0 / 10.0:
        raise ValueError(
            f"target {target_cross_range_m:.3g} m needs a {length_req:.3g} m "
            "aperture, outside the near-axis regime (< r0/10)")
    symbol_time = (1.0 + CP_RATIO) / delta_f
    m_min = math.ceil(length_req / (geo.v * symbol_time))
    n_sub = bandwidth / delta_f
    if abs(n_sub - round(n_sub)) > 1e-9:
        raise ValueError("bandwidth must be an integer number of subcarriers")
    info_bits = (1.0 - pilot_fraction) * round(n_sub) * bits_per_symbol * code_rate
    return PlanResult(
        m_min=m_min,
        gain_db=10.0 * math.log10(m_min),
        aperture_m=geo.v * m_min * symbol_time,
        net_rate_bps=info_bits / (m_min * symbol_time),
    )
