#!/usr/bin/env python3
"""Run every shipped scenario with its default config, writing CSV and manifests under one directory."""
import argparse
import sys
from pathlib import Path

from jtwpa import cli


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--only", nargs="*", choices=sorted(cli.VERBS), help="subset of verbs")
    args = p.parse_args()
    status = 0
    for verb in args.only or list(cli.VERBS):
        argv = [verb, "--out", str(Path(args.out) / verb)]
        if args.workers:
            argv += ["--workers", str(args.workers)]
        print(f"== {verb}", flush=True)
        status = max(status, cli.main(argv))
    return status


if __name__ == "__main__":
    sys.exit(main())
