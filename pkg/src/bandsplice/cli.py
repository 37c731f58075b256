"""Command line entry point: simulate, calibrate, trial, report."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import autocorr, harness, preproc
from .errors import PipelineError
from .pipeline import run_baseline, run_pr


def _load_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.from_json(args.config) if args.config else harness.ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "snr_db", None):
        changes["snr_db"] = [float(s) for s in args.snr_db]
    if getattr(args, "out_dir", None):
        changes["out_dir"] = args.out_dir
    if getattr(args, "calibration", None):
        changes["calibration_file"] = args.calibration
    return cfg.replace(**changes) if changes else cfg


def _methods(args):
    if args.baseline_only and args.pr_only:
        raise SystemExit("--baseline-only and --pr-only exclude each other")
    if args.baseline_only:
        return ("baseline",)
    if args.pr_only:
        return ("pr",)
    return harness.METHODS


def _fmt(x, unit="m"):
    return "failed" if x is None else f"{x:.4f} {unit}"


def print_summary(summary: dict, out=None):
    out = out or sys.stdout
    for snr, entry in summary["snr"].items():
        print(f"SNR {snr} dB", file=out)
        for m in summary.get("methods", harness.METHODS):
            if m not in entry:
                continue
            s = entry[m]
            print(f"  {m:9s} median {_fmt(s['median_m'])}  p90 {_fmt(s['p90_m'])}  "
                  f"<=10cm {100 * s['frac_below_10cm']:.1f}%  failures {100 * s['failure_rate']:.1f}% "
                  f"{s['failures'] or ''}", file=out)
        if "win_rate" in entry:
            w = entry["win_rate"]
            print(f"  win rate pr {w['pr']:.3f}  baseline {w['baseline']:.3f}  tie {w['tie']:.3f}", file=out)
    for name, w in summary.get("cross_snr", {}).items():
        print(f"{name}: pr {w['pr']:.3f} baseline {w['baseline']:.3f} tie {w['tie']:.3f} ({w['pairs']} pairs)",
              file=out)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    report = harness.run_monte_carlo(cfg, cfg.out_dir, args.threads, _methods(args),
                                     write_trials=not args.no_trials)
    print_summary(report.summary)
    print(f"wrote results to {cfg.out_dir} in {report.summary['runtime_s']:.1f} s")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    path = args.store or str(Path(cfg.out_dir) / "calibration.json")
    with warnings.catch_warnings():
        warnings.simplefilter("always", harness.CalibrationBoundaryWarning)
        records = harness.calibrate_regularizers(cfg, args.training_trials, threads=args.threads)
    harness.save_calibration(path, records)
    for r in records:
        edge = f"  (boundary: {', '.join(r.boundary)})" if r.boundary else ""
        print(f"SNR {r.snr_db:g} dB: c_rho={r.c_rho:g} c_lambda={r.c_lambda:g} c_lambda_b={r.c_lambda_b:g} "
              f"-> rho={r.rho:.3e} lambda={r.lam:.3e} lambda_b={r.lam_b:.3e}{edge}")
    print(f"stored under config hash {cfg.config_hash()} in {path}")
    return 0


def cmd_trial(args) -> int:
    """One seeded trial with the intermediate results of every stage."""
    cfg = _load_config(args)
    snr = float(args.snr_db[0]) if args.snr_db else cfg.snr_db[0]
    mult = harness.load_calibration(cfg.calibration_file, cfg).get(snr, harness.default_multipliers(cfg))
    channel, nv, tx, rx = harness.synthesize_trial(cfg, args.trial_id, snr)
    np.set_printoptions(precision=4, suppress=False, linewidth=110)
    print(f"trial {args.trial_id} seed {cfg.seed} SNR {snr:g} dB  noise variance {nv:.3e}")
    print(f"channel delays [ns] {channel.delays * 1e9}")
    print(f"channel |gains|     {np.abs(channel.gains)}")
    print(f"true ToF {channel.tof * 1e9:.4f} ns")
    methods = _methods(args)
    if "pr" in methods:
        settings = harness.pr_settings(cfg, nv, rx, mult)
        print(f"PR: rho={settings.rho:.3e} lambda={settings.lam:.3e} eta={settings.eta:.2e} "
              f"search={settings.support_search}")
        try:
            out = run_pr(tx, rx, settings)
            print(f"  autocorrelation lags [ns] {out.acf.lags * 1e9}")
            print(f"  |r| {np.abs(out.acf.coefficients)}  r0 {out.acf.zero_lag:.4f}")
            print(f"  hypothesis {out.decision.hypothesis}  costs {out.decision.costs}  "
                  f"margin {out.decision.margin:.3f}")
            print(f"  estimated delays [ns] {out.estimate.delays * 1e9}")
            print(f"  estimated |gains|     {np.abs(out.estimate.gains)}")
            print(f"  ToF {out.tof * 1e9:.4f} ns  error {abs(out.tof - channel.tof) * harness.SPEED_OF_LIGHT:.4f} m")
            print(f"  diagnostics {json.dumps(harness._jsonable(out.diagnostics))}")
        except PipelineError as exc:
            print(f"  failed [{exc.tag}]: {exc}")
    if "baseline" in methods:
        settings = harness.baseline_settings(cfg, nv, tx, rx, mult)
        print(f"baseline: lambda_b={settings.lam:.3e} grid={settings.grid_size}")
        try:
            est = run_baseline(tx, rx, settings)
            print(f"  first lag {est.first_lag * 1e9:.4f} ns  ToF {est.tof * 1e9:.4f} ns  "
                  f"error {abs(est.tof - channel.tof) * harness.SPEED_OF_LIGHT:.4f} m")
        except PipelineError as exc:
            print(f"  failed [{exc.tag}]: {exc}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out_dir or "results")
    trials = out / "trials.jsonl"
    if trials.exists():
        results = harness.read_trials(trials)
        methods = [m for m in harness.METHODS if any(m in r.diagnostics or m in r.failures for r in results)]
        summary = {"methods": methods, **harness.summarize(results, methods)}
    else:
        with open(out / "summary.json") as fh:
            summary = json.load(fh)
    print_summary(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bandsplice", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=True):
        p.add_argument("--config", help="JSON file with ExperimentConfig fields")
        p.add_argument("--seed", type=int)
        if trials:
            p.add_argument("--trials", type=int)
        p.add_argument("--snr-db", type=float, action="append", help="repeatable")
        p.add_argument("--out-dir")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--baseline-only", action="store_true")
        p.add_argument("--pr-only", action="store_true")

    p = sub.add_parser("simulate", help="run the Monte-Carlo benchmark")
    common(p)
    p.add_argument("--calibration", help="calibration store to take multipliers from")
    p.add_argument("--no-trials", action="store_true", help="skip trials.jsonl")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="grid-search the regularizer multipliers")
    common(p, trials=False)
    p.add_argument("--training-trials", "--trials", dest="training_trials", type=int, default=20)
    p.add_argument("--store", help="calibration JSON (default: <out-dir>/calibration.json)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("trial", help="one seeded trial with stage dumps")
    common(p, trials=False)
    p.add_argument("--trial-id", type=int, default=0)
    p.add_argument("--calibration")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("report", help="summarize an existing results directory")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
