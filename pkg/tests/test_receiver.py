"""Aperture receive chain: compression, profiling, detection, combining."""

import numpy as np
import pytest

from sacsim.channel import (LinkBudget, apply_channel, attenuation_amplitude,
                            make_noise_model, scale_to_power, superpose)
from sacsim.geometry import (CarrierConfig, OrbitGeometry, UePosition,
                             doppler_after_compression,
                             resolution_and_ambiguity)
from sacsim.ofdm import (FrameGrid, OfdmConfig, PilotLayout, build_frame,
                         map_bits, ofdm_demod_column, ofdm_modulate,
                         serial_to_grid)
from sacsim.receiver import (AzimuthProfile, UnreliablePilotError,
                             azimuth_compress, beamsteer, detect_ues,
                             doppler_correct, doppler_profile,
                             estimate_channel, receive_ue, steering_vector,
                             zf_equalize)
from sacsim.channel import UeTransmit

GEO = OrbitGeometry(r0=600e3, v=7.82e3)
CARRIER = CarrierConfig(fc=3.5e9)
CFG = OfdmConfig(n_subcarriers=300, delta_f=15e3, m_symbols=93)
BUDGET = LinkBudget(g_tx_dbi=11.72, g_rx_dbi=30.0, path_loss_db=158.89,
                    atmospheric_loss_db=0.12, scintillation_loss_db=4.39,
                    noise_figure_db=4.0)
RES = resolution_and_ambiguity(CFG.acquisition_window(), CARRIER, GEO)
CROSS_RANGE_BIN = RES.cross_range_res


def transmit(x, ptx=-10.0, ue_id=0, seed=0):
    rng = np.random.default_rng(seed)
    pilots = PilotLayout(n_subcarriers=300, ue_id=ue_id)
    bits = rng.integers(0, 2, 2 * pilots.n_data)
    frame = build_frame(map_bits(bits), pilots, CFG)
    stream = scale_to_power(ofdm_modulate(frame, CFG), ptx)
    tx = UeTransmit(ue_id=ue_id, position=UePosition(x=x, r0=GEO.r0),
                    p_tx_dbm=ptx, samples=stream)
    return tx, frame, pilots


def received_grid(x, **kw):
    tx, frame, pilots = transmit(x, **kw)
    rx = apply_channel(tx, CFG, GEO, CARRIER, BUDGET)
    return serial_to_grid(rx, CFG), frame, pilots, tx


def dirichlet(delta, m=93):
    """Magnitude of the m-point uniform-window kernel at bin offset delta."""
    delta = np.asarray(delta, dtype=float)
    at_peak = np.isclose(np.abs((delta + m / 2) % m - m / 2), 0.0, atol=1e-9)
    safe = np.where(at_peak, 1.0, delta)
    out = np.abs(np.sin(np.pi * safe)) / (m * np.abs(np.sin(np.pi * safe / m)))
    return np.where(at_peak, 1.0, out)


class TestAzimuthCompress:
    def test_on_axis_source_aligned(self):
        grid, *_ = received_grid(0.0)
        r_az = azimuth_compress(grid, CFG, GEO, CARRIER)
        col_phase = np.angle(np.sum(r_az.data[:, 1:] *
                                    np.conj(r_az.data[:, :-1]), axis=0))
        assert np.max(np.abs(col_phase)) < 1e-3

    def test_residual_tone_slope(self):
        grid, *_ = received_grid(495.33)
        r_az = azimuth_compress(grid, CFG, GEO, CARRIER)
        inc = np.angle(np.sum(r_az.data[:, 1:] * np.conj(r_az.data[:, :-1])))
        f_meas = inc / (2 * np.pi * CFG.symbol_time)
        f_expected = doppler_after_compression(
            UePosition(495.33, GEO.r0), GEO, CARRIER)
        assert f_meas == pytest.approx(f_expected, rel=1e-6)

    def test_power_preserved(self):
        grid, *_ = received_grid(742.99)
        r_az = azimuth_compress(grid, CFG, GEO, CARRIER)
        assert np.linalg.norm(r_az.data) == pytest.approx(
            np.linalg.norm(grid.data), rel=1e-12)


class TestDopplerProfile:
    def test_on_grid_source_single_bin(self):
        x = -3 * CROSS_RANGE_BIN  # exactly on bin +3
        grid, *_ = received_grid(x)
        prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                               CFG, GEO, CARRIER)
        peak_bin = prof.bins[np.argmax(prof.norms)]
        assert peak_bin == 3
        others = prof.norms[np.abs(prof.bins - 3) > 0.5]
        assert np.max(others) < 1e-6 * prof.norms.max()

    def test_half_bin_scalloping(self):
        x = 0.5 * CROSS_RANGE_BIN
        grid, *_ = received_grid(x)
        prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                               CFG, GEO, CARRIER, pad_factor=8)
        on_peak = prof.norms.max()
        grid_bins = np.isclose(prof.bins % 1, 0)
        grid_peak = prof.norms[grid_bins].max()
        loss_db = 20 * np.log10(grid_peak / on_peak)
        assert loss_db == pytest.approx(-3.92, abs=0.02)

    def test_profile_follows_kernel(self):
        # fine profile of a lone source matches the analytic kernel
        x = 0.5 * CROSS_RANGE_BIN
        grid, *_ = received_grid(x)
        prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                               CFG, GEO, CARRIER, pad_factor=8)
        peak = prof.norms.max()
        offsets = prof.bins + 0.5  # source sits at bin -1/2
        mask = np.abs(offsets) < 5
        expected = dirichlet(offsets[mask])
        assert np.allclose(prof.norms[mask] / peak, expected, atol=2e-3)

    def test_first_sidelobe_level(self):
        delta = np.linspace(1.0, 2.0, 20001)
        level_db = 20 * np.log10(dirichlet(delta).max())
        assert level_db == pytest.approx(-13.26, abs=0.05)

    def test_two_sources_at_sidelobe_spacing(self):
        # each source observed alone: response at the partner position
        for x_self, x_other in ((742.99, -742.99), (-742.99, 742.99)):
            grid, *_ = received_grid(x_self, ue_id=0 if x_self > 0 else 1)
            prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                                   CFG, GEO, CARRIER, pad_factor=8)
            i = np.argmin(np.abs(prof.cross_range_m - x_other))
            rel_db = 20 * np.log10(prof.norms[i] / prof.norms.max())
            assert rel_db == pytest.approx(-13.26, abs=0.3)


class TestDetect:
    def test_noiseless_accuracy_interpolated(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = float(rng.uniform(-20e3, 20e3))
            grid, *_ = received_grid(x, seed=int(rng.integers(1e6)))
            prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                                   CFG, GEO, CARRIER, pad_factor=8)
            det = detect_ues(prof, 1, CFG, GEO, CARRIER, refine=True)[0]
            assert abs(det.x_hat - x) < 5.0

    def test_noiseless_accuracy_grid(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = float(rng.uniform(-20e3, 20e3))
            grid, *_ = received_grid(x, seed=int(rng.integers(1e6)))
            prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                                   CFG, GEO, CARRIER)
            det = detect_ues(prof, 1, CFG, GEO, CARRIER)[0]
            assert abs(det.x_hat - x) <= CROSS_RANGE_BIN / 2 * 1.001

    def test_detection_invariants(self):
        grid, *_ = received_grid(495.33)
        prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                               CFG, GEO, CARRIER, pad_factor=8)
        det = detect_ues(prof, 1, CFG, GEO, CARRIER, refine=True)[0]
        assert det.x_hat == pytest.approx(det.theta_hat * GEO.r0, rel=1e-12)
        assert det.f_hat == pytest.approx(det.bin / CFG.frame_time, rel=1e-12)

    def test_two_symmetric_sources(self):
        a = apply_channel(transmit(495.33, ue_id=0, seed=3)[0],
                          CFG, GEO, CARRIER, BUDGET)
        b = apply_channel(transmit(-495.33, ue_id=1, seed=4)[0],
                          CFG, GEO, CARRIER, BUDGET)
        grid = serial_to_grid(superpose([a, b]), CFG)
        prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                               CFG, GEO, CARRIER, pad_factor=8)
        dets = detect_ues(prof, 2, CFG, GEO, CARRIER, refine=True)
        xs = sorted(d.x_hat for d in dets)
        # the partner kernel one bin away biases the vertex fit slightly;
        # well under the half-cell bound that matters for combining
        assert xs[0] == pytest.approx(-495.33, abs=50.0)
        assert xs[1] == pytest.approx(495.33, abs=50.0)
        assert xs[0] == pytest.approx(-xs[1], abs=5.0)

    def test_pure_noise_returns_detection(self):
        rng = np.random.default_rng(5)
        data = (rng.standard_normal((300, 93))
                + 1j * rng.standard_normal((300, 93)))
        prof = doppler_profile(FrameGrid(data, "time"), CFG, GEO, CARRIER)
        dets = detect_ues(prof, 1, CFG, GEO, CARRIER)
        assert len(dets) == 1

    def test_grid_tie_breaks_toward_small_bin(self):
        norms = np.zeros(93)
        bins = (np.arange(93) - 46).astype(float)
        norms[bins == -1] = 1.0
        norms[bins == 0] = 1.0
        prof = AzimuthProfile(norms=norms, bins=bins,
                              doppler_hz=bins / CFG.frame_time,
                              angle_rad=np.zeros(93),
                              cross_range_m=np.zeros(93),
                              pad_factor=1, m_symbols=93)
        det = detect_ues(prof, 1, CFG, GEO, CARRIER)[0]
        assert det.bin == 0

    def test_too_many_requested(self):
        grid, *_ = received_grid(0.0)
        prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                               CFG, GEO, CARRIER)
        with pytest.raises(ValueError):
            detect_ues(prof, 94, CFG, GEO, CARRIER)


class TestBeamsteer:
    def test_unit_norm(self):
        b = steering_vector(1e-3, CFG, GEO, CARRIER)
        assert np.linalg.norm(b) == pytest.approx(1.0, rel=1e-12)

    def test_matched_gain(self):
        grid, *_ = received_grid(495.33)
        r_az = azimuth_compress(grid, CFG, GEO, CARRIER)
        combined = beamsteer(r_az, 495.33 / GEO.r0, CFG, GEO, CARRIER)
        gain = np.mean(np.abs(combined) ** 2) / np.mean(np.abs(r_az.data) ** 2)
        assert 10 * np.log10(gain) == pytest.approx(10 * np.log10(93),
                                                    abs=1e-6)

    def test_one_bin_offset_nulls_on_grid_source(self):
        x = 2 * CROSS_RANGE_BIN
        grid, *_ = received_grid(x)
        r_az = azimuth_compress(grid, CFG, GEO, CARRIER)
        matched = beamsteer(r_az, x / GEO.r0, CFG, GEO, CARRIER)
        offset = beamsteer(r_az, x / GEO.r0 + RES.delta_theta, CFG, GEO,
                           CARRIER)
        ratio = np.mean(np.abs(offset) ** 2) / np.mean(np.abs(matched) ** 2)
        assert ratio < 1e-20

    def test_rejects_out_of_range_angle(self):
        grid, *_ = received_grid(0.0)
        r_az = azimuth_compress(grid, CFG, GEO, CARRIER)
        with pytest.raises(ValueError):
            beamsteer(r_az, RES.theta_max_ua * 1.01, CFG, GEO, CARRIER)


class TestDopplerCorrect:
    def test_zero_is_identity(self):
        v = np.arange(300, dtype=complex)
        assert np.array_equal(doppler_correct(v, 0.0, CFG), v)

    def test_power_preserved(self):
        rng = np.random.default_rng(6)
        v = rng.standard_normal(300) + 1j * rng.standard_normal(300)
        out = doppler_correct(v, -75.37, CFG)
        assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(v),
                                                    rel=1e-12)

    def test_removes_residual_ramp(self):
        # after steering plus exact-Doppler correction, the composite
        # per-subcarrier channel must be the bulk-delay ramp times one
        # constant; any leftover intra-symbol ramp would break this
        from scipy.constants import c as c0
        grid, frame, _, tx = received_grid(495.33)
        r_az = azimuth_compress(grid, CFG, GEO, CARRIER)
        f_d = doppler_after_compression(tx.position, GEO, CARRIER)
        combined = beamsteer(r_az, 495.33 / GEO.r0, CFG, GEO, CARRIER)
        corrected = doppler_correct(combined, f_d, CFG)
        h = ofdm_demod_column(corrected) / frame.data[:, 0]
        d = tx.position.slant_range / c0 * CFG.bandwidth
        ramp = np.exp(-2j * np.pi * np.arange(300) * d / 300)
        flat = h * np.conj(ramp)
        mean = np.mean(flat)
        assert np.max(np.abs(np.angle(flat / mean))) < 1e-3
        assert np.max(np.abs(np.abs(flat) / np.abs(mean) - 1)) < 1e-3


class TestChannelEstimation:
    def test_flat_unit_channel(self):
        pilots = PilotLayout(n_subcarriers=300)
        column = np.zeros(300, dtype=complex)
        column[pilots.pilot_indices] = pilots.pilot_symbols
        column[pilots.data_indices] = 1.0
        zf = estimate_channel(column, pilots)
        assert np.allclose(zf, 1.0, atol=1e-12)

    def test_bulk_delay_ramp_interpolation(self):
        pilots = PilotLayout(n_subcarriers=300)
        column = np.zeros(300, dtype=complex)
        column[pilots.pilot_indices] = pilots.pilot_symbols
        column[pilots.data_indices] = map_bits(
            np.random.default_rng(7).integers(0, 2, 450))
        # ramp of the reference slant range: ~9006 samples, 6.23 mod N
        d = 600e3 / 299792458.0 * CFG.bandwidth
        h = np.exp(-2j * np.pi * np.arange(300) * d / 300)
        zf = estimate_channel(column * h, pilots)
        h_hat = 1.0 / zf
        amp_err_db = 20 * np.abs(np.log10(np.abs(h_hat) / np.abs(h)))
        phase_err = np.abs(np.angle(h_hat * np.conj(h)))
        assert amp_err_db.max() < 0.1
        assert phase_err.max() < 0.05

    def test_weak_pilots_flagged(self):
        pilots = PilotLayout(n_subcarriers=300)
        column = np.zeros(300, dtype=complex)
        column[pilots.pilot_indices] = pilots.pilot_symbols
        column[pilots.pilot_indices[3]] = 1e-9
        with pytest.raises(UnreliablePilotError):
            estimate_channel(column, pilots)


class TestEqualizeAndFullChain:
    def test_unit_channel_identity(self):
        rng = np.random.default_rng(8)
        v = rng.standard_normal(300) + 1j * rng.standard_normal(300)
        eq = zf_equalize(v, np.ones(300), 1.0)
        assert np.array_equal(eq.symbols, v)
        assert np.allclose(eq.noise_var, 1.0)

    def test_noise_free_end_to_end_recovery(self):
        grid, frame, pilots, tx = received_grid(495.33)
        prof = doppler_profile(azimuth_compress(grid, CFG, GEO, CARRIER),
                               CFG, GEO, CARRIER, pad_factor=8)
        det = detect_ues(prof, 1, CFG, GEO, CARRIER, refine=True)[0]
        result = receive_ue(grid, det, CFG, GEO, CARRIER, pilots,
                            noise_var=1e-30)
        err = np.abs(result.equalized.symbols - frame.data[:, 0])
        assert err.max() < 1e-6

    def test_post_combining_snr_matches_prediction(self):
        from sacsim.channel import link_snr_db
        grid, frame, pilots, tx = received_grid(990.6532957784705)
        r_az = azimuth_compress(grid, CFG, GEO, CARRIER)
        combined = beamsteer(r_az, frame_theta(tx), CFG, GEO, CARRIER)
        freq = ofdm_demod_column(doppler_correct(
            combined, doppler_after_compression(tx.position, GEO, CARRIER),
            CFG))
        noise = make_noise_model(CFG, BUDGET)
        snr_meas = 10 * np.log10(np.mean(np.abs(freq) ** 2)
                                 / noise.sample_variance_w)
        snr_pred = link_snr_db(-10.0, BUDGET, CFG.bandwidth,
                               combining_gain_db=10 * np.log10(93))
        assert snr_meas == pytest.approx(snr_pred, abs=0.3)

    def test_one_bin_separated_sources_fully_separable(self):
        # exactly one resolution cell apart: matched steering on either
        # terminal nulls the other completely
        x1 = CROSS_RANGE_BIN / 2
        x2 = -CROSS_RANGE_BIN / 2
        tx1, frame1, _ = transmit(x1, ue_id=0, seed=10)
        tx2, frame2, _ = transmit(x2, ue_id=1, seed=11)
        rx1 = apply_channel(tx1, CFG, GEO, CARRIER, BUDGET)
        rx2 = apply_channel(tx2, CFG, GEO, CARRIER, BUDGET)
        both = azimuth_compress(serial_to_grid(superpose([rx1, rx2]), CFG),
                                CFG, GEO, CARRIER)
        alone = azimuth_compress(serial_to_grid(rx1, CFG), CFG, GEO, CARRIER)
        c_both = beamsteer(both, x1 / GEO.r0, CFG, GEO, CARRIER)
        c_alone = beamsteer(alone, x1 / GEO.r0, CFG, GEO, CARRIER)
        leak = (np.mean(np.abs(c_both - c_alone) ** 2)
                / np.mean(np.abs(c_alone) ** 2))
        assert leak < 1e-18

    def test_noise_variance_preserved_through_chain(self):
        # white noise in, per-subcarrier variance out, 1e4 trials through
        # the real compression reference, steering, correction and DFT
        from sacsim.receiver import _compression_reference
        rng = np.random.default_rng(9)
        theta = 495.33 / GEO.r0
        f_d = doppler_after_compression(UePosition(495.33, GEO.r0), GEO,
                                        CARRIER)
        ref = _compression_reference(300, CFG.n_cp, 93, CFG.delta_f,
                                     GEO.r0, GEO.v, CARRIER.fc)
        b = steering_vector(theta, CFG, GEO, CARRIER)
        phase = np.exp(-2j * np.pi * f_d * np.arange(300) / CFG.bandwidth)
        acc = 0.0
        trials, batch = 10000, 200
        for _ in range(trials // batch):
            noise = (rng.standard_normal((batch, 300, 93))
                     + 1j * rng.standard_normal((batch, 300, 93))) / np.sqrt(2)
            combined = (noise * ref) @ b
            freq = np.fft.fft(combined * phase, axis=1, norm="ortho")
            acc += np.mean(np.abs(freq) ** 2)
        measured = acc / (trials // batch)
        assert measured == pytest.approx(1.0, rel=0.02)


def frame_theta(tx):
    return tx.position.x / GEO.r0
