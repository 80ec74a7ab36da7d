#!/usr/bin/env python3
"""Print one PASS/FAIL line per acceptance criterion.

    python scripts/run_acceptance.py          # all criteria
    python scripts/run_acceptance.py 1 2 3    # a subset

Set JTWPA_WORKERS to cap the number of parallel transients.
"""
import sys

from jtwpa.acceptance import main

if __name__ == "__main__":
    sys.exit(main())
