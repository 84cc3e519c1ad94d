"""Command line front end: simulate, plan and validate subcommands."""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone

import numpy as np

from .config import ConfigError, load_scenario
from .geometry import CarrierConfig, OrbitGeometry, plan_parameters
from .harness import ptx_at_bler, reference_profile, run_sweep, write_results


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="run a Monte Carlo sweep from a config file")
    p.add_argument("config", help="scenario config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trials", type=int, help="override trials per point")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--workers", type=int, default=1, help="parallel workers")
    p.add_argument("--mode", choices=["sac", "nosac"], help="override mode")
    p.add_argument("--profile-only", action="store_true",
                   help="write only the azimuth profile snapshot")


def _add_plan(sub):
    p = sub.add_parser("plan", help="acquisition planning for a resolution target")
    p.add_argument("--resolution", type=float, required=True,
                   help="target cross-range resolution [m]")
    p.add_argument("--mu", type=int, choices=[0, 1, 2], required=True,
                   help="numerology index (15/30/60 kHz spacing)")
    p.add_argument("--bandwidth-hz", type=float,
                   help="occupied bandwidth (defaults per numerology)")
    p.add_argument("--r0-m", type=float, default=600e3)
    p.add_argument("--v-mps", type=float, default=7.82e3)
    p.add_argument("--fc-hz", type=float, default=3.5e9)


def _add_validate(sub):
    p = sub.add_parser("validate", help="check a config and print derived values")
    p.add_argument("config", help="scenario config file")


_DEFAULT_BW = {0: 4.5e6, 1: 3.96e6, 2: 7.92e6}


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.config)
    if args.trials is not None:
        scenario.trials = args.trials
    if args.seed is not None:
        scenario.seed = args.seed
    if args.mode is not None and args.mode != scenario.mode:
        raise ConfigError(
            "mode overrides need a config written for that mode "
            "(frame length differs); edit the config instead")
    timestamp = datetime.now(timezone.utc).isoformat()
    if args.profile_only:
        profile = reference_profile(scenario)
        from .harness import BlerCurve, binomial_ci  # local, tiny stub curve
        import numpy as _np
        curve = BlerCurve(ptx_dbm=_np.array([scenario.profile_ref_ptx_dbm]),
                          ue_ids=[u.ue_id for u in scenario.ues],
                          trials=_np.array([0.0]),
                          errors=_np.zeros((1, len(scenario.ues))),
                          bler=_np.zeros((1, len(scenario.ues))),
                          ci_lo=_np.zeros((1, len(scenario.ues))),
                          ci_hi=_np.ones((1, len(scenario.ues))),
                          doa_rmse_m=_np.full((1, len(scenario.ues)), _np.nan))
        paths = write_results(curve, profile, args.out, scenario, timestamp)
        print(f"profile written to {paths['profile']}")
        return 0
    curve, profile = run_sweep(scenario, workers=args.workers)
    paths = write_results(curve, profile, args.out, scenario, timestamp)
    print(f"wrote {', '.join(sorted(paths.values()))}")
    crossing = ptx_at_bler(curve, 0.1)
    for i, p in enumerate(curve.ptx_dbm):
        print(f"  P_tx {p:+7.2f} dBm: mean BLER {curve.mean_bler[i]:.4f} "
              f"[{curve.mean_ci_lo[i]:.4f}, {curve.mean_ci_hi[i]:.4f}]")
    if np.isfinite(crossing):
        print(f"mean BLER crosses 0.1 at {crossing:+.2f} dBm")
    else:
        print("mean BLER does not cross 0.1 inside the sweep")
    return 0


def _cmd_plan(args) -> int:
    delta_f = 15e3 * 2 ** args.mu
    bandwidth = args.bandwidth_hz or _DEFAULT_BW[args.mu]
    geo = OrbitGeometry(r0=args.r0_m, v=args.v_mps)
    carrier = CarrierConfig(fc=args.fc_hz)
    plan = plan_parameters(args.resolution, delta_f, bandwidth, geo, carrier)
    print(f"numerology mu={args.mu} (spacing {delta_f / 1e3:.0f} kHz, "
          f"bandwidth {bandwidth / 1e6:.2f} MHz)")
    print(f"  acquisitions needed  M >= {plan.m_min}")
    print(f"  combining gain          {plan.gain_db:.2f} dB")
    print(f"  aperture length         {plan.aperture_m:.2f} m")
    print(f"  net information rate <= {plan.net_rate_bps / 1e3:.2f} kbit/s")
    return 0


def _cmd_validate(args) -> int:
    from .config import validate_report
    scenario = load_scenario(args.config)
    print(f"{args.config}: OK ({scenario.mode}, {len(scenario.ues)} terminal(s), "
          f"{len(scenario.sweep_ptx_dbm)} power point(s), "
          f"{scenario.trials} trials/point)")
    for line in validate_report(scenario):
        print("  " + line)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sacsim",
        description="synthetic-aperture uplink link-level simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate(sub)
    _add_plan(sub)
    _add_validate(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "plan":
            return _cmd_plan(args)
        return _cmd_validate(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
