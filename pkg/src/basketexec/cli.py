"""Command-line entry points.

Subcommands: calibrate bars into a preset, train an agent into a run
directory, evaluate a policy on held-out rollouts, profile fixed-action
tracking error, report a finished run, and run a full experiment end to end.
Environment overrides: BASKETEXEC_SEED, BASKETEXEC_OUTDIR.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import load_bars, calibrate, result_to_preset
from .errors import BasketExecError
from .harness import (
    POLICY_NAMES,
    config_hash,
    evaluate,
    fixed_action_error_profile,
    load_config,
    run_experiment,
    write_comparison_csv,
    write_diagnostics_csv,
    write_error_series_csv,
    write_profile_csv,
)
from .market import load_preset, save_preset
from .rl.training import load_checkpoint, save_checkpoint, train


def _floats(text):
    return [float(v) for v in text.split(",")] if text else None


def _cmd_calibrate(args) -> int:
    series = load_bars(args.bars, args.symbols.split(","), tau=args.tau)
    result = calibrate(series)
    preset = result_to_preset(
        result,
        series,
        impact_slope=_floats(args.impact_slope),
        max_clip=_floats(args.max_clip),
        inventory=_floats(args.inventory),
        daily_volume=_floats(args.daily_volume),
    )
    save_preset(preset, args.output)
    print(f"calibrated {series.n_bars} bars ({series.fills} filled, {series.dropped} dropped)")
    for i, sym in enumerate(series.symbols):
        print(f"  {sym}: mu={result.mu[i]:.4e} (se {result.se_mu[i]:.1e}), "
              f"var={result.sigma[i, i]:.4e}")
    if result.repair > 0:
        print(f"  covariance PSD repair magnitude: {result.repair:.3e}")
    print(f"wrote {args.output}")
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config, preset=args.preset, output_dir=args.output, seed=args.seed)
    out = run_experiment(config)
    print(f"run complete: {out}")
    return 0


def _cmd_evaluate(args) -> int:
    rundir = Path(args.rundir)
    preset = load_preset(rundir / "preset.json")
    checkpoint = load_checkpoint(rundir / "checkpoint.json") if args.policy == "trained" else None
    horizon = args.horizon or (load_checkpoint(rundir / "checkpoint.json").horizon)
    seed = int(os.environ.get("BASKETEXEC_SEED", args.seed))
    res = evaluate(args.policy, preset, horizon, args.rollouts, seed=seed, checkpoint=checkpoint)
    write_comparison_csv([res], rundir / f"evaluation_{args.policy}.csv")
    write_error_series_csv([res], preset.symbols, rundir / f"tracking_error_{args.policy}.csv")
    res.first_report.write_csv(rundir / f"episode_report_{args.policy}.csv")
    print(f"{args.policy}: mean total shortfall {res.shortfall_mean:.6g} "
          f"(se {res.shortfall_se:.3g}, R={res.rollouts})")
    return 0


def _cmd_profile(args) -> int:
    preset = load_preset(args.preset)
    mean, se = fixed_action_error_profile(
        preset, args.asset, args.action, args.rollouts, args.horizon,
        seed=int(os.environ.get("BASKETEXEC_SEED", args.seed)),
        grid_levels=args.grid_levels,
    )
    out = Path(args.output or "fixed_action_error.csv")
    write_profile_csv(mean, se, preset.symbols, args.action, args.asset, out)
    print(f"profiled asset {preset.symbols[args.asset]} at action {args.action}; wrote {out}")
    return 0


def _cmd_report(args) -> int:
    rundir = Path(args.rundir)
    manifest = json.loads((rundir / "manifest.json").read_text())
    print(f"run {rundir} seed={manifest['seed']} config={manifest['config_hash']} "
          f"complete={manifest['complete']}")
    comparison = rundir / "comparison.csv"
    if comparison.exists():
        print(comparison.read_text().strip())
    made = _render_figures(rundir)
    for f in made:
        print(f"wrote {f}")
    return 0


def _render_figures(rundir: Path) -> list[Path]:
    """Optional SVG rendering of the emitted figure CSVs; skipped without matplotlib."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return []
    import csv as _csv

    made = []
    series = {
        "tracking_error_mean.csv": ("mean_error", "tracking_error.svg", "tracking error"),
        "shortfall_mean.csv": ("mean_cum_shortfall", "shortfall.svg", "cumulative shortfall"),
    }
    for fname, (col, svg, label) in series.items():
        path = rundir / fname
        if not path.exists():
            continue
        rows = list(_csv.DictReader(path.open()))
        assets = sorted({r["asset"] for r in rows})
        fig, axes = plt.subplots(1, len(assets), figsize=(4 * len(assets), 3), squeeze=False)
        for ax, asset in zip(axes[0], assets):
            for policy in sorted({r["policy"] for r in rows}):
                pts = [(int(r["step"]), float(r[col])) for r in rows
                       if r["asset"] == asset and r["policy"] == policy]
                if pts:
                    ax.plot(*zip(*pts), label=policy)
            ax.set_title(f"{asset} {label}")
            ax.set_xlabel("step")
            ax.legend(fontsize=6)
        fig.tight_layout()
        out = rundir / svg
        fig.savefig(out)
        plt.close(fig)
        made.append(out)
    return made


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="basketexec", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="estimate drift/covariance from a bar CSV")
    c.add_argument("bars", help="CSV with header timestamp,symbol,price,volume")
    c.add_argument("-o", "--output", required=True, help="preset JSON to write")
    c.add_argument("--symbols", required=True, help="comma-separated symbols to include")
    c.add_argument("--tau", type=float, default=1.0, help="model time units per bar")
    c.add_argument("--impact-slope", default=None, help="comma-separated or single value")
    c.add_argument("--max-clip", default=None)
    c.add_argument("--inventory", default=None)
    c.add_argument("--daily-volume", default=None)
    c.set_defaults(func=_cmd_calibrate)

    t = sub.add_parser("train", help="train an agent and write a run directory")
    t.add_argument("preset", help="preset path or builtin name")
    t.add_argument("-c", "--config", required=True, help="experiment config JSON")
    t.add_argument("-o", "--output", required=True, help="run directory")
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="roll out one policy from a run directory")
    e.add_argument("rundir")
    e.add_argument("--policy", choices=POLICY_NAMES, default="trained")
    e.add_argument("-R", "--rollouts", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--horizon", type=int, default=None)
    e.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("profile", help="fixed-action tracking-error profile")
    p.add_argument("preset")
    p.add_argument("--asset", type=int, required=True)
    p.add_argument("--action", type=float, required=True)
    p.add_argument("-R", "--rollouts", type=int, default=200)
    p.add_argument("--horizon", type=int, default=390)
    p.add_argument("--grid-levels", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_profile)

    r = sub.add_parser("report", help="summarize a run directory; render SVGs if possible")
    r.add_argument("rundir")
    r.set_defaults(func=_cmd_report)

    x = sub.add_parser("run", help="full experiment: train + evaluate + profile")
    x.add_argument("-c", "--config", required=True)
    x.add_argument("-o", "--output", default=None)
    x.add_argument("--seed", type=int, default=None)
    x.set_defaults(func=lambda a: _cmd_run(a))

    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config, output_dir=args.output, seed=args.seed)
    out = run_experiment(config)
    print(f"run complete: {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BasketExecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
