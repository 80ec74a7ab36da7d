"""Command-line entry point: ``jtwpa <verb> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .artifacts import write_artifacts
from .config import ConfigError, default_config, load_config
from .scenarios import run_scenario

VERBS = {
    "dispersion": "dispersion-report",
    "tones": "tone-evolution",
    "gain": "gain-sweep",
    "phase": "phase-sweep",
    "reflect": "reflection-scan",
    "uniform": "uniform-comparison",
}

log = logging.getLogger("jtwpa")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default from config)")
    common.add_argument("--workers", type=int, help="parallel transient runs")
    common.add_argument("--dt", type=float, help="sampling step in ps (internal step is dt / substeps)")
    common.add_argument("--fine-grid", action="store_true", default=None,
                        help="run gain sweeps on the full 20 MHz grid")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="jtwpa", description="rf-SQUID travelling-wave amplifier simulations")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, kind in VERBS.items():
        s = sub.add_parser(verb, parents=[common], help=f"run the {kind} scenario with shipped defaults")
        s.add_argument("--config", help="YAML config overriding the shipped default")
    r = sub.add_parser("run", parents=[common], help="run the scenario described by a config file")
    r.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.verb == "run":
            cfg = load_config(args.config)
        elif args.config:
            cfg = load_config(args.config)
            if cfg.kind != VERBS[args.verb]:
                raise ConfigError(f"config is a {cfg.kind!r} scenario, verb needs {VERBS[args.verb]!r}")
        else:
            cfg = default_config(VERBS[args.verb])
        cfg = cfg.with_overrides(out=args.out, workers=args.workers,
                                 dt=None if args.dt is None else args.dt * 1e-12, fine_grid=args.fine_grid)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"jtwpa: {exc}", file=sys.stderr)
        return 2

    log.info("running %s (config %s) with %d worker(s)", cfg.kind, cfg.hash(), cfg.workers)
    result = run_scenario(cfg)
    manifest = write_artifacts(result, cfg)
    print(json.dumps({"manifest": str(manifest), "wall_time_s": round(result.wall_time, 2),
                      "failed_points": len(result.failures)}))
    if result.failures:
        for f in result.failures:
            print(f"point {f['index']} ({f['tag']}, {f['probe_Hz']:.6g} Hz): {f['error'].splitlines()[0]}",
                  file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
