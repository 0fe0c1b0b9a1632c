"""Command line entry point: ``mabrl run | compare | summarize``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 failure while running.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import statistics
import sys
from collections import defaultdict
from pathlib import Path

from .config import ConfigError, load_config
from .controllers import ControllerKind
from .harness import format_summary, run, summarize

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
ALL_ARMS = [k.value for k in ControllerKind]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="experiment YAML file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set agent.gamma=0.9 (repeatable)")
    p.add_argument("--seed", type=int, action="append", help="master seed (repeatable; replaces config seeds)")
    p.add_argument("--episodes", type=int, help="episodes per seed")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mabrl", description="Broad-network traffic signal control experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log per-episode progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train/evaluate one controller")
    _common(p)
    p.add_argument("--controller", choices=ALL_ARMS, help="controller to run (overrides config)")

    p = sub.add_parser("compare", help="run several controllers on identical demand")
    _common(p)
    p.add_argument("--arms", default=",".join(ALL_ARMS), help="comma-separated controllers (default: all)")
    p.add_argument("--last", type=int, default=10, help="episodes averaged for the final ranking")

    p = sub.add_parser("summarize", help="mean/std table of an existing metrics.csv")
    p.add_argument("metrics", help="path to metrics.csv or its directory")
    p.add_argument("--burn-in", type=float, default=0.5, help="fraction of early episodes to drop")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    return parser


def _load(args):
    overrides = list(args.overrides)
    cfg = load_config(args.config, overrides) if args.config else load_config(None, overrides, text="")
    changes = {}
    if args.seed:
        changes["seeds"] = list(args.seed)
    if args.episodes is not None:
        changes["episodes"] = args.episodes
    if args.out:
        changes["output_dir"] = args.out
    if getattr(args, "controller", None):
        changes["controller"] = args.controller
    try:
        return dataclasses.replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def final_ranking(episodes_csv, last: int = 10) -> dict[str, dict[int, float]]:
    """Mean reward of the last ``last`` episodes, per arm and seed."""
    rows = defaultdict(list)
    with open(episodes_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            rows[(row["arm"], int(row["seed"]))].append((int(row["episode"]), float(row["mean_reward"])))
    out: dict[str, dict[int, float]] = defaultdict(dict)
    for (arm, seed), eps in rows.items():
        eps.sort()
        out[arm][seed] = statistics.fmean(r for _, r in eps[-last:])
    return dict(out)


def _cmd_run(args, arms) -> int:
    cfg = _load(args)
    summary = run(cfg, arms or [cfg.controller])
    print(format_summary(summary))
    print(f"\nwrote {Path(cfg.output_dir) / 'metrics.csv'}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    arms = [a.strip() for a in args.arms.split(",") if a.strip()]
    bad = [a for a in arms if a not in ALL_ARMS]
    if bad:
        raise ConfigError(f"unknown arm(s) {bad}; choose from {ALL_ARMS}")
    cfg = _load(args)
    summary = run(cfg, arms)
    print(format_summary(summary))
    ranking = final_ranking(Path(cfg.output_dir) / "episodes.csv", args.last)
    print(f"\nmean reward over the last {args.last} episodes (higher is better):")
    means = {arm: statistics.fmean(v.values()) for arm, v in ranking.items()}
    for arm in sorted(means, key=means.get, reverse=True):
        per_seed = " ".join(f"{s}:{r:.3f}" for s, r in sorted(ranking[arm].items()))
        print(f"  {arm:<16}{means[arm]:>10.3f}   [{per_seed}]")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    path = Path(args.metrics)
    if path.is_dir():
        path = path / "metrics.csv"
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    if not 0 <= args.burn_in < 1:
        raise ConfigError("--burn-in must be in [0, 1)")
    summary = summarize(path, args.burn_in)
    print(json.dumps(summary, indent=2, sort_keys=True) if args.json else format_summary(summary))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args, None)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_summarize(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
