"""Scenario configuration files.

Configs are YAML.  Every dimensional value is a string carrying its unit, for
example ``84 pH``, ``1.57 uA``, ``12.92 GHz`` or ``16.5 mV``; bare numbers are
accepted only for dimensionless fields (segment counts, phases in radians).
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from decimal import Decimal
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .physics import LineSpec, LoadingProfile, SquidParams
from .transient import DT_DEFAULT, DriveSpec, Protocol

KINDS = (
    "dispersion-report",
    "tone-evolution",
    "gain-sweep",
    "phase-sweep",
    "reflection-scan",
    "uniform-comparison",
    "custom",
)

_EXP = {"f": -15, "p": -12, "n": -9, "u": -6, "µ": -6, "m": -3, "": 0, "k": 3, "M": 6, "G": 9}
_PREFIX = {k: 10.0**v for k, v in _EXP.items()}
_UNITS = {"H": "H", "F": "F", "A": "A", "V": "V", "Hz": "Hz", "s": "s", "ohm": "ohm", "Ohm": "ohm",
          "Ω": "ohm", "rad": "rad"}
_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|inf)\s*([fpnuµmkMG]?)(H|F|A|V|Hz|s|ohm|Ohm|Ω|rad)\s*$")


class ConfigError(ValueError):
    pass


def parse_quantity(text, unit: str):
    """Convert ``'12.92 GHz'`` to 12.92e9, checking the unit."""
    if isinstance(text, (int, float)) and unit in ("", "rad"):
        return float(text)
    if not isinstance(text, str):
        raise ConfigError(f"expected a quantity in {unit}, got {text!r} (units are mandatory)")
    m = _QTY.match(text)
    if m is None:
        raise ConfigError(f"cannot parse quantity {text!r}")
    value, prefix, u = m.groups()
    if _UNITS[u] != unit:
        raise ConfigError(f"{text!r} has unit {_UNITS[u]}, expected {unit}")
    if value == "inf":
        return math.inf
    # scale in decimal so that '50 ns' is exactly float('5e-8')
    return float(Decimal(value).scaleb(_EXP[prefix]))


def format_quantity(value: float, unit: str) -> str:
    if math.isinf(value):
        return f"inf {unit}"
    if value == 0:
        return f"0 {unit}"
    for p in ("G", "M", "k", "", "m", "u", "n", "p", "f"):
        if abs(value) >= _PREFIX[p] * 0.999999:
            return f"{value / _PREFIX[p]:.12g} {p}{unit}"
    return f"{value:.12g} {unit}"


def frequency_axis(spec) -> np.ndarray:
    """A list of frequencies, or ``{start, stop, step}`` (inclusive)."""
    if isinstance(spec, dict):
        start = parse_quantity(spec["start"], "Hz")
        stop = parse_quantity(spec["stop"], "Hz")
        step = parse_quantity(spec["step"], "Hz")
        if step <= 0 or stop < start:
            raise ConfigError(f"empty frequency range {spec}")
        # integer arithmetic keeps every point on the step grid
        n = int(round((stop - start) / step))
        return start + step * np.arange(n + 1)
    values = np.array([parse_quantity(v, "Hz") for v in spec])
    if values.size == 0:
        raise ConfigError("empty frequency list")
    return values


@dataclass
class Sweep:
    fp: list = field(default_factory=lambda: [12.92e9])
    fs: np.ndarray | None = None
    fine_fs: np.ndarray | None = None
    phases: int = 24
    pump_amps: list = field(default_factory=lambda: [0.01e-6, 1.8e-6])
    f_reflect: np.ndarray | None = None


@dataclass
class ScenarioConfig:
    kind: str = "custom"
    line: LineSpec = field(default_factory=LineSpec)
    drive: DriveSpec = field(default_factory=DriveSpec)
    sweep: Sweep = field(default_factory=Sweep)
    protocol: Protocol = field(default_factory=Protocol)
    out: str = "out"
    workers: int = 1
    fine_grid: bool = False
    source: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; choose from {KINDS}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def with_overrides(self, out=None, workers=None, dt=None, fine_grid=None) -> "ScenarioConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, out=str(out))
        if workers is not None:
            cfg = replace(cfg, workers=int(workers))
        if dt is not None:
            cfg = replace(cfg, protocol=replace(cfg.protocol, dt=dt))
        if fine_grid is not None:
            cfg = replace(cfg, fine_grid=bool(fine_grid))
        return cfg

    def resolved(self) -> dict:
        """Plain-data view of everything that determines the numerical result."""
        line = self.line
        d = {
            "kind": self.kind,
            "squid": asdict(line.squid),
            "Idc": line.Idc,
            "profile": asdict(line.profile),
            "Z0": line.Z0,
            "Rs": line.Rs,
            "Rt": line.Rt,
            "L_S0_override": line.L_S0_override,
            "drive": asdict(self.drive),
            "protocol": asdict(self.protocol),
            "fine_grid": self.fine_grid,
            "sweep": {
                "fp": list(map(float, self.sweep.fp)),
                "fs": None if self.sweep.fs is None else list(map(float, self.sweep.fs)),
                "fine_fs": None if self.sweep.fine_fs is None else list(map(float, self.sweep.fine_fs)),
                "phases": self.sweep.phases,
                "pump_amps": list(map(float, self.sweep.pump_amps)),
                "f_reflect": None if self.sweep.f_reflect is None else list(map(float, self.sweep.f_reflect)),
            },
        }
        return _jsonable(d)

    def hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _get(d: dict, key, unit, default):
    if key not in d:
        return default
    return parse_quantity(d[key], unit)


def line_from_dict(d: dict, base: LineSpec | None = None) -> LineSpec:
    base = base or LineSpec()
    sq = d.get("squid", {})
    squid = SquidParams(
        L=_get(sq, "L", "H", base.squid.L),
        Ic=_get(sq, "Ic", "A", base.squid.Ic),
        CJ=_get(sq, "CJ", "F", base.squid.CJ),
        IcRJ=_get(sq, "IcRJ", "V", base.squid.IcRJ),
    )
    ld = d.get("loading", {})
    N = int(d.get("N", base.profile.N))
    if "uniform" in ld:
        profile = LoadingProfile.uniform(parse_quantity(ld["uniform"], "F"), N)
    else:
        bp = base.profile
        profile = LoadingProfile(
            C01=_get(ld, "C01", "F", bp.C01),
            C02=_get(ld, "C02", "F", bp.C02),
            C03=_get(ld, "C03", "F", bp.C03),
            kappa=int(ld.get("kappa", bp.kappa)),
            mu=int(ld.get("mu", bp.mu)),
            nu=int(ld.get("nu", bp.nu)),
            N=N,
        )
    override = d.get("linear_L_S0", base.L_S0_override)
    if isinstance(override, str):
        override = parse_quantity(override, "H")
    return LineSpec(
        squid=squid,
        Idc=_get(d, "Idc", "A", base.Idc),
        profile=profile,
        Z0=_get(d, "Z0", "ohm", base.Z0),
        Rs=_get(d, "Rs", "ohm", base.Rs),
        Rt=_get(d, "Rt", "ohm", base.Rt),
        L_S0_override=override,
    )


def drive_from_dict(d: dict, base: DriveSpec | None = None) -> DriveSpec:
    base = base or DriveSpec()
    p = d.get("pump", {})
    s = d.get("signal", {})
    return DriveSpec(
        pump_amp=_get(p, "amp", "A", base.pump_amp),
        fp=_get(p, "f", "Hz", base.fp),
        pump_phase=_get(p, "phase", "rad", base.pump_phase),
        signal_amp=_get(s, "amp", "A", base.signal_amp),
        fs=_get(s, "f", "Hz", base.fs),
        signal_phase=_get(s, "phase", "rad", base.signal_phase),
        Idc=_get(d, "Idc", "A", base.Idc),
        ramp_time=_get(d, "ramp", "s", base.ramp_time),
    )


def config_from_dict(d: dict) -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a mapping")
    kind = d.get("scenario", "custom")
    sw = d.get("sweep", {}) or {}
    sweep = Sweep(
        fp=[parse_quantity(v, "Hz") for v in sw.get("fp", ["12.92 GHz"])],
        fs=frequency_axis(sw["fs"]) if "fs" in sw else None,
        fine_fs=frequency_axis(sw["fine_fs"]) if "fine_fs" in sw else None,
        phases=int(sw.get("phases", 24)),
        pump_amps=[parse_quantity(v, "A") for v in sw.get("pump_amps", ["0.01 uA", "1.8 uA"])],
        f_reflect=frequency_axis(sw["f_reflect"]) if "f_reflect" in sw else None,
    )
    if sweep.phases < 1:
        raise ConfigError("sweep.phases must be positive")
    so = d.get("solver", {}) or {}
    protocol = Protocol(
        dt=_get(so, "dt", "s", DT_DEFAULT),
        t_discard=_get(so, "discard", "s", Protocol.t_discard),
        t_record=_get(so, "record", "s", Protocol.t_record),
        substeps=int(so.get("substeps", Protocol.substeps)),
    )
    out = d.get("output", {}) or {}
    return ScenarioConfig(
        kind=kind,
        line=line_from_dict(d.get("line", {}) or {}),
        drive=drive_from_dict(d.get("drive", {}) or {}),
        sweep=sweep,
        protocol=protocol,
        out=str(out.get("dir", "out")),
        workers=int(out.get("workers", 1)),
        fine_grid=bool(so.get("fine_grid", False)),
        source=d,
    )


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def read_config_dict(path) -> dict:
    """Load YAML, resolving an optional ``extends: <file>`` relative to ``path``."""
    path = Path(path)
    with open(path) as fh:
        d = yaml.safe_load(fh) or {}
    parent = d.pop("extends", None)
    if parent is not None:
        d = _merge(read_config_dict(path.parent / parent), d)
    return d


def load_config(path) -> ScenarioConfig:
    return config_from_dict(read_config_dict(path))


CONFIG_DIR = Path(__file__).parent / "configs"


def default_config(kind: str) -> ScenarioConfig:
    """The shipped default configuration for one scenario kind."""
    path = CONFIG_DIR / f"{kind}.yaml"
    if not path.exists():
        raise ConfigError(f"no shipped config for {kind!r}")
    return load_config(path)
