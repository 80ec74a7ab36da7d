"""CSV and JSON manifest output."""
from __future__ import annotations

import csv
import json
import math
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, _jsonable
from .scenarios import ScenarioResult


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.complexfloating, complex)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else ("inf" if x == math.inf else "-inf" if x == -math.inf else x)
    if isinstance(x, (np.integer, np.bool_)):
        return x.item()
    return x


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: Path, table, header_comment: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])


def write_artifacts(result: ScenarioResult, cfg: ScenarioConfig, out_dir=None) -> Path:
    """Write one CSV per table plus ``<kind>_manifest.json``; returns the manifest path."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.hash()
    manifest_name = f"{result.kind}_manifest.json"
    files = []
    for name, table in result.tables.items():
        fname = f"{result.kind}_{name}.csv"
        write_csv(out / fname, table, f"manifest={manifest_name} config_hash={h}")
        files.append(fname)
    manifest = {
        "config_hash": h,
        "scenario": result.kind,
        "tool": "jtwpa",
        "tool_version": __version__,
        "python": platform.python_version(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_time_s": result.wall_time,
        "resolved": cfg.resolved(),
        "derived": _jsonable(cfg.line.derived_scales()),
        "files": files,
        "summary": result.summary,
        "diagnostics": result.diagnostics,
        "failures": result.failures,
    }
    path = out / manifest_name
    with open(path, "w") as fh:
        json.dump(_clean(manifest), fh, indent=2)
    return path
