"""Deterministic Monte Carlo experiments and result files.

Each (power point, trial) pair gets its own seed derived from the base
seed, so any worker count reproduces the serial results bit for bit.
One trial runs the full uplink: per-terminal payload generation,
encoding, frame build, channel, superposition, noise, then per-terminal
aperture processing and decoding.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as beta_dist

from . import __version__
from .channel import (UeTransmit, add_awgn, apply_channel, link_snr_db,
                      make_noise_model, scale_to_power)
from .config import ScenarioConfig, UeSpec
from .fec import polar_decode, polar_encode
from .ofdm import (FrameGrid, build_frame, llr_demap, map_bits,
                   ofdm_demod_column, ofdm_modulate, serial_to_grid)
from .receiver import (AzimuthProfile, UeDetection, azimuth_compress,
                       detect_ues, doppler_profile, receive_ue, zf_equalize)

PROFILE_PAD = 8


@dataclass
class UeTrialOutcome:
    ue_id: int
    crc_pass: bool
    bit_errors: int
    x_hat: float
    f_hat: float
    snr_est_db: float
    error: str | None = None


@dataclass
class TrialRecord:
    trial_index: int
    point_index: int
    outcomes: list[UeTrialOutcome]


@dataclass
class BlerCurve:
    """Aggregated sweep results, one row set per transmit-power point."""

    ptx_dbm: np.ndarray
    ue_ids: list[int]
    trials: np.ndarray            # (points,)
    errors: np.ndarray            # (points, ues)
    bler: np.ndarray              # (points, ues)
    ci_lo: np.ndarray             # (points, ues)
    ci_hi: np.ndarray             # (points, ues)
    doa_rmse_m: np.ndarray        # (points, ues)
    mean_bler: np.ndarray = field(init=False)
    mean_ci_lo: np.ndarray = field(init=False)
    mean_ci_hi: np.ndarray = field(init=False)

    def __post_init__(self):
        pooled_err = self.errors.sum(axis=1)
        pooled_n = self.trials * len(self.ue_ids)
        self.mean_bler = pooled_err / pooled_n
        lo, hi = binomial_ci(pooled_err, pooled_n)
        self.mean_ci_lo = lo
        self.mean_ci_hi = hi


def binomial_ci(errors, trials, confidence: float = 0.95):
    """Clopper-Pearson interval, vectorized over points."""
    errors = np.atleast_1d(np.asarray(errors, dtype=float))
    trials = np.broadcast_to(np.asarray(trials, dtype=float), errors.shape)
    alpha = 1.0 - confidence
    lo = np.where(errors == 0, 0.0,
                  beta_dist.ppf(alpha / 2.0, errors, trials - errors + 1.0))
    hi = np.where(errors == trials, 1.0,
                  beta_dist.ppf(1.0 - alpha / 2.0, errors + 1.0, trials - errors))
    return lo, hi


def trial_rngs(seed: int, point_index: int, trial_index: int,
               n_ues: int) -> tuple[list[np.random.Generator], np.random.Generator]:
    """Independent payload streams per terminal plus one noise stream."""
    payload = [np.random.default_rng(np.random.SeedSequence(
        seed, spawn_key=(point_index, trial_index, u)))
        for u in range(n_ues)]
    noise = np.random.default_rng(np.random.SeedSequence(
        seed, spawn_key=(point_index, trial_index, 0xFFFF)))
    return payload, noise


def _build_ue_frame(scenario: ScenarioConfig, spec: UeSpec, p_tx_dbm: float,
                    rng: np.random.Generator):
    pilots = scenario.pilots_for(spec.ue_id)
    info = rng.integers(0, 2, scenario.fec.k_info).astype(np.int8)
    coded = polar_encode(info, scenario.fec)
    frame = build_frame(map_bits(coded), pilots, scenario.ofdm)
    stream = scale_to_power(ofdm_modulate(frame, scenario.ofdm), p_tx_dbm)
    tx = UeTransmit(ue_id=spec.ue_id, position=scenario.ue_position(spec),
                    p_tx_dbm=p_tx_dbm, samples=stream)
    return info, frame, pilots, tx


def _associate(detections: list[UeDetection],
               true_x: list[float]) -> dict[int, UeDetection]:
    """Greedy magnitude-ordered matching of detections to terminals."""
    remaining = dict(enumerate(true_x))
    assigned: dict[int, UeDetection] = {}
    for det in detections:
        if not remaining:
            break
        ue = min(remaining, key=lambda u: abs(det.x_hat - remaining[u]))
        assigned[ue] = det
        del remaining[ue]
    return assigned


def _genie_zf(clean_stream, frame: FrameGrid, detection: UeDetection,
              scenario: ScenarioConfig):
    """Zero-forcing coefficients from the terminal's noise-free chain.

    The genie channel H is the noise-free chain output divided by the
    transmitted column; the frame symbols are unit modulus, so the
    division is always well conditioned.
    """
    from .receiver import beamsteer, doppler_correct

    cfg = scenario.ofdm
    grid = serial_to_grid(clean_stream, cfg)
    if scenario.mode == "sac":
        r_az = azimuth_compress(grid, cfg, scenario.orbit, scenario.carrier)
        combined = beamsteer(r_az, detection.theta_hat, cfg, scenario.orbit,
                             scenario.carrier)
        freq = ofdm_demod_column(doppler_correct(combined, detection.f_hat, cfg))
    else:
        freq = ofdm_demod_column(grid.data[:, 0])
    return frame.data[:, 0] / freq


def run_trial(scenario: ScenarioConfig, point_index: int, trial_index: int,
              p_tx_dbm: list[float]) -> TrialRecord:
    """One end-to-end Monte Carlo trial at the given per-terminal powers."""
    cfg = scenario.ofdm
    payload_rngs, noise_rng = trial_rngs(scenario.seed, point_index,
                                         trial_index, len(scenario.ues))
    infos, frames, pilots, clean = [], [], [], []
    for spec, rng, p in zip(scenario.ues, payload_rngs, p_tx_dbm):
        info, frame, pil, tx = _build_ue_frame(scenario, spec, p, rng)
        infos.append(info)
        frames.append(frame)
        pilots.append(pil)
        clean.append(apply_channel(tx, cfg, scenario.orbit, scenario.carrier,
                                   scenario.budget))
    received = np.sum(clean, axis=0)
    noise = make_noise_model(cfg, scenario.budget)
    if scenario.noise_enabled:
        received = add_awgn(received, noise, noise_rng)
    grid = serial_to_grid(received, cfg)

    outcomes = []
    r_az = None
    if scenario.mode == "sac":
        r_az = azimuth_compress(grid, cfg, scenario.orbit, scenario.carrier)
        refine = scenario.estimation == "interpolated"
        pad = PROFILE_PAD if refine else 1
        profile = doppler_profile(r_az, cfg, scenario.orbit, scenario.carrier,
                                  pad_factor=pad)
        try:
            detections = detect_ues(profile, len(scenario.ues), cfg,
                                    scenario.orbit, scenario.carrier,
                                    refine=refine)
        except ValueError as exc:
            for spec, info in zip(scenario.ues, infos):
                outcomes.append(UeTrialOutcome(
                    ue_id=spec.ue_id, crc_pass=False,
                    bit_errors=scenario.fec.k_info, x_hat=np.nan,
                    f_hat=np.nan, snr_est_db=np.nan, error=str(exc)))
            return TrialRecord(trial_index, point_index, outcomes)
        matched = _associate(detections, [u.x_m for u in scenario.ues])
    else:
        matched = {u.ue_id: UeDetection(index=i, bin=0.0, f_hat=0.0,
                                        theta_hat=0.0, x_hat=0.0,
                                        peak_magnitude=np.nan)
                   for i, u in enumerate(scenario.ues)}

    for k, (spec, info, frame, pil) in enumerate(
            zip(scenario.ues, infos, frames, pilots)):
        det = matched.get(spec.ue_id)
        if det is None:
            outcomes.append(UeTrialOutcome(
                ue_id=spec.ue_id, crc_pass=False,
                bit_errors=scenario.fec.k_info, x_hat=np.nan, f_hat=np.nan,
                snr_est_db=np.nan, error="no detection"))
            continue
        try:
            ideal_zf = None
            if scenario.csi == "ideal":
                ideal_zf = _genie_zf(clean[k], frame, det, scenario)
            if scenario.mode == "sac":
                result = receive_ue(grid, det, cfg, scenario.orbit,
                                    scenario.carrier, pil,
                                    noise_var=noise.sample_variance_w,
                                    ideal_zf=ideal_zf, precompressed=r_az)
                eq, llrs = result.equalized, result.llrs
            else:
                freq = ofdm_demod_column(grid.data[:, 0])
                zf = ideal_zf
                if zf is None:
                    from .receiver import estimate_channel
                    zf = estimate_channel(freq, pil)
                eq = zf_equalize(freq, zf, noise.sample_variance_w)
                data_idx = pil.data_indices
                llrs = llr_demap(eq.symbols[data_idx], eq.noise_var[data_idx])
            decoded, crc_pass = polar_decode(llrs, scenario.fec)
            bit_errors = int(np.count_nonzero(decoded != info))
            tx_col = frame.data[:, 0][pil.data_indices]
            err_vec = eq.symbols[pil.data_indices] - tx_col
            snr_est = 10.0 * np.log10(
                np.mean(np.abs(tx_col) ** 2) / max(np.mean(np.abs(err_vec) ** 2), 1e-300))
            outcomes.append(UeTrialOutcome(
                ue_id=spec.ue_id, crc_pass=bool(crc_pass and bit_errors == 0),
                bit_errors=bit_errors, x_hat=det.x_hat, f_hat=det.f_hat,
                snr_est_db=snr_est))
        except ValueError as exc:
            outcomes.append(UeTrialOutcome(
                ue_id=spec.ue_id, crc_pass=False,
                bit_errors=scenario.fec.k_info, x_hat=det.x_hat,
                f_hat=det.f_hat, snr_est_db=np.nan, error=str(exc)))
    return TrialRecord(trial_index, point_index, outcomes)


def _point_powers(scenario: ScenarioConfig, point_index: int) -> list[float]:
    base = scenario.sweep_ptx_dbm[point_index]
    if "sweep.ptx_dbm" not in scenario.raw and \
            all(u.p_tx_dbm is not None for u in scenario.ues):
        return [float(u.p_tx_dbm) for u in scenario.ues]
    return [float(base)] * len(scenario.ues)


def _run_point_chunk(args):
    scenario, point_index, trial_lo, trial_hi = args
    powers = _point_powers(scenario, point_index)
    records = []
    for t in range(trial_lo, trial_hi):
        rec = run_trial(scenario, point_index, t, powers)
        records.append([(o.crc_pass, o.bit_errors, o.x_hat, o.f_hat,
                         o.snr_est_db) for o in rec.outcomes])
    return point_index, trial_lo, records


def reference_profile(scenario: ScenarioConfig,
                      ptx_dbm: float | None = None,
                      trial_index: int = 0) -> AzimuthProfile:
    """One representative noisy profile at the reference transmit power."""
    if scenario.mode != "sac":
        raise ValueError("profiles require the aperture mode")
    p = scenario.profile_ref_ptx_dbm if ptx_dbm is None else ptx_dbm
    cfg = scenario.ofdm
    payload_rngs, noise_rng = trial_rngs(scenario.seed, 0x7F, trial_index,
                                         len(scenario.ues))
    streams = []
    for spec, rng in zip(scenario.ues, payload_rngs):
        _, _, _, tx = _build_ue_frame(scenario, spec, p, rng)
        streams.append(apply_channel(tx, cfg, scenario.orbit,
                                     scenario.carrier, scenario.budget))
    received = np.sum(streams, axis=0)
    if scenario.noise_enabled:
        received = add_awgn(received, make_noise_model(cfg, scenario.budget),
                            noise_rng)
    r_az = azimuth_compress(serial_to_grid(received, cfg), cfg,
                            scenario.orbit, scenario.carrier)
    return doppler_profile(r_az, cfg, scenario.orbit, scenario.carrier,
                           pad_factor=PROFILE_PAD)


def run_sweep(scenario: ScenarioConfig, workers: int = 1,
              chunk: int = 50) -> tuple[BlerCurve, AzimuthProfile | None]:
    """Aggregate trials over the power grid; workers do not change results."""
    n_points = len(scenario.sweep_ptx_dbm)
    n_ues = len(scenario.ues)
    n_trials = scenario.trials
    crc = np.zeros((n_points, n_trials, n_ues), dtype=bool)
    x_hat = np.full((n_points, n_trials, n_ues), np.nan)

    tasks = []
    for point in range(n_points):
        for lo in range(0, n_trials, chunk):
            tasks.append((scenario, point, lo, min(lo + chunk, n_trials)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point_chunk, tasks))
    else:
        results = [_run_point_chunk(t) for t in tasks]
    for point_index, trial_lo, records in results:
        for offset, outs in enumerate(records):
            for u, (ok, nerr, xh, fh, snr) in enumerate(outs):
                crc[point_index, trial_lo + offset, u] = ok
                x_hat[point_index, trial_lo + offset, u] = xh

    errors = (~crc).sum(axis=1).astype(float)
    trials = np.full(n_points, float(n_trials))
    bler = errors / n_trials
    lo = np.empty_like(errors)
    hi = np.empty_like(errors)
    for u in range(n_ues):
        lo[:, u], hi[:, u] = binomial_ci(errors[:, u], n_trials)
    true_x = np.array([u.x_m for u in scenario.ues])
    with np.errstate(invalid="ignore"):
        doa_rmse = np.sqrt(np.nanmean((x_hat - true_x) ** 2, axis=1))
    curve = BlerCurve(ptx_dbm=np.asarray(scenario.sweep_ptx_dbm, dtype=float),
                      ue_ids=[u.ue_id for u in scenario.ues],
                      trials=trials, errors=errors, bler=bler,
                      ci_lo=lo, ci_hi=hi, doa_rmse_m=doa_rmse)
    profile = reference_profile(scenario) if scenario.mode == "sac" else None
    return curve, profile


def ptx_at_bler(curve: BlerCurve, level: float = 0.1) -> float:
    """Transmit power where the mean BLER crosses ``level``.

    Log-domain linear interpolation between the bracketing grid points;
    NaN when the curve never crosses.
    """
    bler = np.maximum(curve.mean_bler, 1e-12)
    p = curve.ptx_dbm
    above = bler > level
    for i in range(len(p) - 1):
        if above[i] and not above[i + 1]:
            y0, y1 = np.log10(bler[i]), np.log10(bler[i + 1])
            frac = (np.log10(level) - y0) / (y1 - y0)
            return float(p[i] + frac * (p[i + 1] - p[i]))
    return float("nan")


def _fmt(value) -> str:
    if isinstance(value, float) and np.isnan(value):
        return "nan"
    return f"{value:.10g}" if isinstance(value, float) else str(value)


def write_results(curve: BlerCurve, profile: AzimuthProfile | None,
                  out_dir, scenario: ScenarioConfig,
                  timestamp: str = "") -> dict:
    """Write bler.csv, azimuth_profile.csv and manifest.json.

    Output bytes are a pure function of (curve, profile, scenario);
    the wall-clock timestamp is isolated to one manifest field.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    bler_path = os.path.join(out_dir, "bler.csv")
    with open(bler_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("ptx_dbm,ue_id,trials,errors,bler,ci_lo,ci_hi,doa_rmse_m\n")
        for i, p in enumerate(curve.ptx_dbm):
            for u, ue_id in enumerate(curve.ue_ids):
                fh.write(",".join([
                    _fmt(float(p)), str(ue_id), str(int(curve.trials[i])),
                    str(int(curve.errors[i, u])), _fmt(float(curve.bler[i, u])),
                    _fmt(float(curve.ci_lo[i, u])), _fmt(float(curve.ci_hi[i, u])),
                    _fmt(float(curve.doa_rmse_m[i, u]))]) + "\n")
            fh.write(",".join([
                _fmt(float(p)), "mean", str(int(curve.trials[i] * len(curve.ue_ids))),
                str(int(curve.errors[i].sum())), _fmt(float(curve.mean_bler[i])),
                _fmt(float(curve.mean_ci_lo[i])), _fmt(float(curve.mean_ci_hi[i])),
                _fmt(float(np.sqrt(np.mean(curve.doa_rmse_m[i] ** 2))))]) + "\n")
    paths["bler"] = bler_path

    if profile is not None:
        prof_path = os.path.join(out_dir, "azimuth_profile.csv")
        peak = profile.norms.max()
        with open(prof_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("bin,doppler_hz,angle_deg,cross_range_m,norm_db\n")
            for i in range(len(profile.bins)):
                norm_db = 20.0 * np.log10(max(profile.norms[i] / peak, 1e-300))
                fh.write(",".join([
                    _fmt(float(profile.bins[i])),
                    _fmt(float(profile.doppler_hz[i])),
                    _fmt(float(np.degrees(profile.angle_rad[i]))),
                    _fmt(float(profile.cross_range_m[i])),
                    _fmt(float(norm_db))]) + "\n")
        paths["profile"] = prof_path

    gain_db = 10.0 * np.log10(scenario.ofdm.m_symbols) \
        if scenario.mode == "sac" else 0.0
    manifest = {
        "tool": "sacsim",
        "tool_version": __version__,
        "created_utc": timestamp,
        "seed": scenario.seed,
        "trials_per_point": scenario.trials,
        "mode": scenario.mode,
        "csi": scenario.csi,
        "estimation": scenario.estimation,
        "noise_enabled": scenario.noise_enabled,
        "config": scenario.raw,
        "derived": {
            "n_subcarriers": scenario.ofdm.n_subcarriers,
            "n_cp": scenario.ofdm.n_cp,
            "symbol_time_s": scenario.ofdm.symbol_time,
            "frame_time_s": scenario.ofdm.frame_time,
            "combining_gain_db": gain_db,
            "code_k": scenario.fec.k_info,
            "code_e": scenario.fec.e,
        },
        "snr_prediction_db": {
            _fmt(float(p)): link_snr_db(float(p), scenario.budget,
                                        scenario.ofdm.bandwidth, gain_db)
            for p in curve.ptx_dbm
        },
        "bler_0p1_crossing_dbm": ptx_at_bler(curve, 0.1),
    }
    man_path = os.path.join(out_dir, "manifest.json")
    with open(man_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    paths["manifest"] = man_path
    return paths
