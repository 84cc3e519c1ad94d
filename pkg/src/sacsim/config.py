"""Scenario configuration: flat key/value files and their validation.

The config format is a flat structured-text document, one ``key =
value`` pair per line, ``#`` comments allowed.  Keys are dotted paths
mirroring the scenario structure with units embedded in the names
(``orbit.r0_m``, ``ue[0].x_m``).  Values are numbers, bare words,
comma lists ``[a, b, c]`` or inclusive ranges ``[-16..-4 step 1]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .channel import LinkBudget, free_space_path_loss_db
from .fec import PolarConfig
from .geometry import CarrierConfig, OrbitGeometry, UePosition
from .ofdm import OfdmConfig, PilotLayout


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


_UE_KEY = re.compile(r"^ue\[(\d+)\]\.(\w+)$")


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if ".." in inner:
            m = re.match(r"^(-?[\d.eE+]+)\s*\.\.\s*(-?[\d.eE+]+)\s+step\s+"
                         r"(-?[\d.eE+]+)$", inner)
            if not m:
                raise ConfigError(f"malformed range {text!r}")
            start, stop, step = (float(g) for g in m.groups())
            if step <= 0:
                raise ConfigError("range step must be positive")
            n = int(round((stop - start) / step))
            if abs(start + n * step - stop) > 1e-9 * max(1.0, abs(step)):
                raise ConfigError(f"range {text!r} does not end on a step")
            return [start + i * step for i in range(n + 1)]
        if not inner:
            return []
        return [_parse_value(v) for v in inner.split(",")]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    lowered = text.lower()
    if lowered in ("true", "on", "yes"):
        return True
    if lowered in ("false", "off", "no"):
        return False
    return text


def parse_config_text(text: str) -> dict:
    """Parse the flat key/value document into an ordered dict."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_value(value)
    return out


@dataclass(frozen=True)
class UeSpec:
    ue_id: int
    x_m: float
    p_tx_dbm: float | None = None


@dataclass
class ScenarioConfig:
    """Fully resolved description of one experiment."""

    orbit: OrbitGeometry
    carrier: CarrierConfig
    ofdm: OfdmConfig
    budget: LinkBudget
    fec: PolarConfig
    ues: list[UeSpec]
    sweep_ptx_dbm: list[float]
    trials: int = 200
    seed: int = 0
    mode: str = "sac"              # sac | nosac
    csi: str = "pilot"             # ideal | pilot
    estimation: str = "interpolated"  # grid | interpolated
    noise_enabled: bool = True
    pilot_fraction: float = 0.25
    pilot_spacing: int = 4
    profile_ref_ptx_dbm: float = -10.0
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.ues:
            raise ConfigError("at least one terminal is required")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.mode not in ("sac", "nosac"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.csi not in ("ideal", "pilot"):
            raise ConfigError(f"unknown csi mode {self.csi!r}")
        if self.estimation not in ("grid", "interpolated"):
            raise ConfigError(f"unknown estimation mode {self.estimation!r}")
        if not self.sweep_ptx_dbm:
            raise ConfigError("empty transmit-power grid")
        if self.mode == "nosac" and self.ofdm.m_symbols != 1:
            raise ConfigError("nosac mode uses a single-symbol frame")

    def pilots_for(self, ue_id: int) -> PilotLayout:
        return PilotLayout(n_subcarriers=self.ofdm.n_subcarriers,
                           fraction=self.pilot_fraction,
                           spacing=self.pilot_spacing, ue_id=ue_id)

    def ue_position(self, spec: UeSpec) -> UePosition:
        return UePosition(x=spec.x_m, r0=self.orbit.r0)


def _take(raw: dict, key: str, default=None, required: bool = False):
    if key in raw:
        return raw[key]
    if required:
        raise ConfigError(f"missing required key {key!r}")
    return default


def scenario_from_mapping(raw: dict) -> ScenarioConfig:
    """Build and validate a scenario from parsed key/value pairs."""
    known_prefixes = ("orbit.", "carrier.", "ofdm.", "pilots.", "fec.",
                      "budget.", "sweep.", "profile.")
    known_flat = {"trials", "seed", "mode", "csi", "estimation", "noise"}
    for key in raw:
        if _UE_KEY.match(key):
            continue
        if key in known_flat or key.startswith(known_prefixes):
            continue
        raise ConfigError(f"unknown key {key!r}")

    orbit = OrbitGeometry(r0=float(_take(raw, "orbit.r0_m", required=True)),
                          v=float(_take(raw, "orbit.v_mps", required=True)))
    carrier = CarrierConfig(fc=float(_take(raw, "carrier.fc_hz", required=True)))

    delta_f = float(_take(raw, "ofdm.delta_f_hz", required=True))
    bandwidth = float(_take(raw, "ofdm.bandwidth_hz", required=True))
    n_sub = bandwidth / delta_f
    if abs(n_sub - round(n_sub)) > 1e-6:
        raise ConfigError("bandwidth is not an integer number of subcarriers")
    mode = str(_take(raw, "mode", "sac"))
    default_m = 1 if mode == "nosac" else None
    m_symbols = int(_take(raw, "ofdm.symbols_per_frame", default_m,
                          required=default_m is None))
    n_cp = _take(raw, "ofdm.n_cp")
    ofdm = OfdmConfig(n_subcarriers=int(round(n_sub)), delta_f=delta_f,
                      m_symbols=m_symbols,
                      n_cp=None if n_cp is None else int(n_cp))

    budget = LinkBudget(
        g_tx_dbi=float(_take(raw, "budget.g_tx_dbi", required=True)),
        g_rx_dbi=float(_take(raw, "budget.g_rx_dbi", required=True)),
        path_loss_db=float(_take(raw, "budget.path_loss_db", required=True)),
        atmospheric_loss_db=float(_take(raw, "budget.atmospheric_loss_db", 0.0)),
        scintillation_loss_db=float(_take(raw, "budget.scintillation_loss_db", 0.0)),
        noise_figure_db=float(_take(raw, "budget.noise_figure_db", 0.0)),
        temperature_k=float(_take(raw, "budget.temperature_k", 290.0)),
    )

    pilot_fraction = float(_take(raw, "pilots.fraction", 0.25))
    pilot_spacing = int(_take(raw, "pilots.spacing", 4))
    n_pilots = int(round(pilot_fraction * ofdm.n_subcarriers))
    n_data = ofdm.n_subcarriers - n_pilots
    bits_per_symbol = 2  # QPSK
    e_bits = n_data * bits_per_symbol
    code_rate = float(_take(raw, "fec.code_rate", 2.0 / 3.0))
    k_info = int(round(e_bits * code_rate))
    fec_cfg = PolarConfig(
        k_info=k_info, e=e_bits,
        k_crc=int(_take(raw, "fec.crc_bits", 11)),
        list_size=int(_take(raw, "fec.list_size", 8)),
        design_snr_db=float(_take(raw, "fec.design_snr_db", 2.0)),
    )

    ue_entries: dict[int, dict] = {}
    for key, value in raw.items():
        m = _UE_KEY.match(key)
        if not m:
            continue
        idx, attr = int(m.group(1)), m.group(2)
        if attr not in ("x_m", "ptx_dbm"):
            raise ConfigError(f"unknown terminal attribute {attr!r}")
        ue_entries.setdefault(idx, {})[attr] = value
    if not ue_entries:
        raise ConfigError("no terminals configured (ue[i].x_m)")
    if sorted(ue_entries) != list(range(len(ue_entries))):
        raise ConfigError("terminal indices must be contiguous from 0")
    ues = []
    for idx in sorted(ue_entries):
        entry = ue_entries[idx]
        if "x_m" not in entry:
            raise ConfigError(f"ue[{idx}] is missing x_m")
        ptx = entry.get("ptx_dbm")
        ues.append(UeSpec(ue_id=idx, x_m=float(entry["x_m"]),
                          p_tx_dbm=None if ptx is None else float(ptx)))

    sweep = _take(raw, "sweep.ptx_dbm")
    if sweep is None:
        fixed = [u.p_tx_dbm for u in ues]
        if any(p is None for p in fixed):
            raise ConfigError(
                "either sweep.ptx_dbm or a ptx_dbm per terminal is required")
        sweep = [0.0]  # single point; per-terminal powers apply
    else:
        sweep = [float(v) for v in np.atleast_1d(sweep)]

    return ScenarioConfig(
        orbit=orbit, carrier=carrier, ofdm=ofdm, budget=budget, fec=fec_cfg,
        ues=ues, sweep_ptx_dbm=sweep,
        trials=int(_take(raw, "trials", 200)),
        seed=int(_take(raw, "seed", 0)),
        mode=mode,
        csi=str(_take(raw, "csi", "pilot")),
        estimation=str(_take(raw, "estimation", "interpolated")),
        noise_enabled=bool(_take(raw, "noise", True)),
        pilot_fraction=pilot_fraction,
        pilot_spacing=pilot_spacing,
        profile_ref_ptx_dbm=float(_take(raw, "profile.ref_ptx_dbm", -10.0)),
        raw=dict(raw),
    )


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_mapping(parse_config_text(fh.read()))


def validate_report(scenario: ScenarioConfig) -> list[str]:
    """Human-readable derived quantities and consistency checks."""
    from .channel import link_snr_db
    from .geometry import resolution_and_ambiguity

    lines = []
    cfg = scenario.ofdm
    geo = scenario.orbit
    lines.append(f"subcarriers N = {cfg.n_subcarriers}, CP = {cfg.n_cp} samples, "
                 f"symbol time = {cfg.symbol_time * 1e6:.3f} us")
    lines.append(f"frame: M = {cfg.m_symbols}, duration = {cfg.frame_time * 1e3:.3f} ms")
    fspl = free_space_path_loss_db(geo.r0, scenario.carrier)
    lines.append(f"free-space loss at r0: {fspl:.2f} dB "
                 f"(configured path loss {scenario.budget.path_loss_db:.2f} dB)")
    lines.append(f"total propagation loss: {scenario.budget.total_loss_db:.2f} dB")
    if cfg.m_symbols >= 2:
        res = resolution_and_ambiguity(cfg.acquisition_window(), scenario.carrier, geo)
        lines.append(f"aperture L = {cfg.acquisition_window().aperture_length(geo):.2f} m")
        lines.append(f"azimuth resolution = {np.degrees(res.delta_theta) * 1e3:.2f}e-3 deg, "
                     f"cross-range cell = {res.cross_range_res:.2f} m")
        lines.append(f"unambiguous azimuth = +-{np.degrees(res.theta_max_ua):.2f} deg "
                     f"(+-{res.cross_range_ua / 1e3:.2f} km)")
        for ue in scenario.ues:
            bins = -geo.v * ue.x_m / (geo.r0 * scenario.carrier.wavelength) \
                * cfg.frame_time
            lines.append(f"  ue[{ue.ue_id}] at x = {ue.x_m:.2f} m -> bin {bins:+.3f}")
    gain_db = 10.0 * np.log10(cfg.m_symbols) if scenario.mode == "sac" else 0.0
    ref_p = scenario.profile_ref_ptx_dbm
    lines.append(f"predicted per-subcarrier SNR at {ref_p:.1f} dBm: "
                 f"{link_snr_db(ref_p, scenario.budget, cfg.bandwidth, gain_db):.2f} dB "
                 f"(combining gain {gain_db:.2f} dB)")
    lines.append(f"code: k = {scenario.fec.k_info}, e = {scenario.fec.e}, "
                 f"rate = {scenario.fec.code_rate:.4f}, list = {scenario.fec.list_size}")
    return lines
