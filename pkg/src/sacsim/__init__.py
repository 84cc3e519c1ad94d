"""Link-level simulator for coherent synthetic-aperture uplink combining.

A moving low-orbit receiver acquires M copies of one OFDM symbol,
compresses the quadratic phase history, estimates each ground
terminal's direction from the residual Doppler, combines the copies
coherently toward it, and decodes the polar-coded payload.  The
harness measures block error rate against transmit power under
deterministic seeding.
"""

__version__ = "0.1.0"

from .geometry import (AcquisitionWindow, CarrierConfig, OrbitGeometry,
                       PlanResult, ResolutionSummary, UePosition,
                       azimuth_from_doppler, carrier_phase,
                       doppler_after_compression, doppler_true,
                       plan_parameters, range_at, resolution_and_ambiguity)
from .ofdm import (FrameGrid, OfdmConfig, PilotLayout, build_frame,
                   demap_bits_hard, llr_demap, map_bits, ofdm_demod_column,
                   ofdm_demod_grid, ofdm_modulate, serial_to_grid)
from .fec import PolarConfig, polar_decode, polar_encode
from .channel import (LinkBudget, NoiseModel, UeTransmit, add_awgn,
                      apply_channel, attenuation_amplitude,
                      free_space_path_loss_db, link_snr_db, make_noise_model,
                      scale_to_power, superpose)
from .receiver import (AzimuthProfile, EqualizedSymbols, UeDetection,
                       UnreliablePilotError, azimuth_compress, beamsteer,
                       detect_ues, doppler_correct, doppler_profile,
                       estimate_channel, receive_ue, steering_vector,
                       zf_equalize)
from .config import (ConfigError, ScenarioConfig, UeSpec, load_scenario,
                     parse_config_text, scenario_from_mapping,
                     validate_report)
from .harness import (BlerCurve, TrialRecord, binomial_ci, ptx_at_bler,
                      reference_profile, run_sweep, run_trial, write_results)
