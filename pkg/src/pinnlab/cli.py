"""Command-line front end: train, lab, compare, export-grid."""

from __future__ import annotations

import argparse
import sys

from .config import PRESETS, ConfigError, resolve_config
from .runner import compare_runs, export_grid, run_experiment, run_lab


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help="named experiment preset")
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--out", default="runs/latest", help="output directory")


def _resolve(args):
    overrides = {}
    if args.seed is not None:
        overrides["train.seed"] = args.seed
    return resolve_config(preset=args.preset, config_path=args.config, overrides=overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pinnlab",
        description="Train PDE-constrained networks with adaptive collocation sampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training experiment")
    _add_config_flags(p_train)
    p_train.add_argument("--dry-run", action="store_true", help="write the manifest only")
    p_train.add_argument("--list-presets", action="store_true", help="list preset names and exit")

    p_lab = sub.add_parser("lab", help="frozen-fitness accumulation experiment")
    p_lab.add_argument("--objective", default="ackley")
    p_lab.add_argument("--points", type=int, default=1000)
    p_lab.add_argument("--iterations", type=int, default=10_000)
    p_lab.add_argument("--dense-size", type=int, default=100_000)
    p_lab.add_argument("--record-every", type=int, default=10)
    p_lab.add_argument("--seed", type=int, default=0)
    p_lab.add_argument("--out", default="runs/lab")

    p_cmp = sub.add_parser("compare", help="summarize finished run directories")
    p_cmp.add_argument("dirs", nargs="+")

    p_exp = sub.add_parser("export-grid", help="evaluate a checkpoint on a lattice")
    _add_config_flags(p_exp)
    p_exp.add_argument("--checkpoint", required=True)
    p_exp.add_argument("--what", choices=("solution", "residual"), default="solution")
    p_exp.add_argument("--resolution", help="e.g. 256x100")

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            if args.list_presets:
                for name in sorted(PRESETS):
                    print(name)
                return 0
            config = _resolve(args)
            status = run_experiment(config, args.out, dry_run=args.dry_run)
            if status:
                print(f"training aborted; see {args.out}/manifest.txt", file=sys.stderr)
            return status
        if args.command == "lab":
            result = run_lab(
                args.objective,
                args.points,
                args.iterations,
                args.seed,
                args.out,
                dense_size=args.dense_size,
                record_every=args.record_every,
            )
            print(
                f"{args.objective}: retained mean {result.retained_mean[-1]:.6g} "
                f"(size {result.retained_size[-1]}) after {args.iterations} iterations"
            )
            return 0
        if args.command == "compare":
            rows = compare_runs(args.dirs)
            width = max(len(r["label"]) for r in rows)
            print(f"{'run':<{width}}  {'rel_l2_%':>10}  {'evals':>14}  flags")
            for r in rows:
                print(
                    f"{r['label']:<{width}}  {r['final_rel_l2_pct']:>10.3f}  "
                    f"{r['eval_count']:>14d}  {r['failure_windows']}"
                )
            return 0
        if args.command == "export-grid":
            config = _resolve(args)
            resolution = None
            if args.resolution:
                resolution = tuple(int(v) for v in args.resolution.lower().split("x"))
            export_grid(config, args.checkpoint, args.out, args.what, resolution)
            return 0
    except (ConfigError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
