"""Command line front end: ``crossfield calibrate | sweep | report``.

Exit codes: 0 on success, 2 for invalid configuration or arguments, 3 when
the sweep finished but some trials failed.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys

from .config import ConfigError, desk_scenario, table2_scenario
from .estimators import METHODS
from .experiment import (CalibrationSettings, load_plan, make_plan, report, run_calibrate,
                         run_sweep)
from .selection import THRESHOLD_RULES, Thresholds

EXIT_OK, EXIT_INVALID, EXIT_TRIAL_FAILURES = 0, 2, 3

log = logging.getLogger("crossfield")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _methods(text: str) -> list[str]:
    out = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    return out


def _common(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="scenario YAML/JSON (optional 'experiment' section)")
    src.add_argument("--desk-scale", action="store_true", help="use the small desk preset")
    src.add_argument("--table2", type=int, choices=(1, 2, 3), default=None,
                     help="full-size preset by scenario number (default 1)")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--distances", type=_floats, default=None, help="comma separated, meters")
    p.add_argument("--grid-points", type=int, default=None,
                   help="log-spaced points between the Rayleigh bounds when --distances is absent")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossfield", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="offline threshold calibration")
    _common(c)
    c.add_argument("--rotations", type=int, default=None, help="random rotations per distance")
    c.add_argument("--snr", type=float, default=None, help="calibration SNR in dB")
    c.add_argument("--rule", choices=THRESHOLD_RULES, default=None)
    c.add_argument("--thresholds", type=Path, default=None, help="output JSON path")

    s = sub.add_parser("sweep", help="online trials over distance, rotation and SNR")
    _common(s)
    s.add_argument("--thresholds", type=Path, default=None, help="calibrated thresholds JSON")
    s.add_argument("--methods", type=_methods, default=None,
                   help=f"comma separated subset of {', '.join(METHODS)}")
    s.add_argument("--rotations", type=_floats, default=None, help="pitch angles in degrees")
    s.add_argument("--snr", type=_floats, default=None, help="SNR grid in dB")
    s.add_argument("--pin-codebooks", action="store_true", default=None)
    s.add_argument("--pwm-mode", choices=("refit", "replicate"), default=None)

    r = sub.add_parser("report", help="merge summary CSVs into per-quantity tables")
    r.add_argument("inputs", nargs="+", type=Path, help="summary.csv files or sweep directories")
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--thresholds", type=Path, default=None, help="adds the metric CDF table")
    r.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _plan(args, **extra):
    over = {"seed": args.seed, "trials": args.trials, "distances": args.distances,
            "grid_points": args.grid_points, "workers": args.workers,
            "out_dir": None if args.out is None else str(args.out), **extra}
    over = {k: v for k, v in over.items() if v is not None}
    if args.config is not None:
        return load_plan(args.config, **over)
    if args.desk_scale:
        over.setdefault("trials", 5)
        return make_plan(desk_scenario(), **over)
    return make_plan(table2_scenario(args.table2 or 1), **over)


def _calibrate(args) -> int:
    plan = _plan(args)
    cs = plan.calibration
    if args.rotations is not None:
        cs.n_rot = args.rotations
    if args.trials is not None:
        cs.n_trials = args.trials
    if args.snr is not None:
        cs.snr_db = args.snr
    if args.rule is not None:
        cs.rule = args.rule
    plan.validate()
    thr = run_calibrate(plan, args.thresholds)
    print(f"gamma_sh={thr.gamma_sh:.6g} gamma_hp={thr.gamma_hp:.6g}")
    return EXIT_OK


def _sweep(args) -> int:
    extra = {"methods": args.methods, "rotations_deg": args.rotations, "snr_db": args.snr,
             "pin_codebooks": args.pin_codebooks, "pwm_mode": args.pwm_mode}
    plan = _plan(args, **{k: v for k, v in extra.items() if v is not None})
    thr = Thresholds.load(args.thresholds) if args.thresholds is not None else None
    if "cross-field" in plan.methods and thr is None:
        raise ConfigError("cross-field needs --thresholds (run 'crossfield calibrate' first)")
    out = run_sweep(plan, thr)
    print(f"{len(out.records)} records, {out.failures} failures, summary in {out.summary_path}")
    return EXIT_TRIAL_FAILURES if out.failures else EXIT_OK


def _report(args) -> int:
    paths = [p / "summary.csv" if p.is_dir() else p for p in args.inputs]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise ConfigError(f"missing inputs: {missing}")
    for name, path in report(paths, args.out, args.thresholds).items():
        print(f"{name}: {path}")
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:          # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"calibrate": _calibrate, "sweep": _sweep, "report": _report}[args.command]
    try:
        return handler(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
