"""Canned experiments: each turns a ScenarioConfig into tables and a summary.

Transient sweeps fan out over a process pool one point at a time; results are
merged back in sweep order so the output does not depend on the worker count.
"""
from __future__ import annotations

import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import spectral as sp
from . import tmm
from .config import ScenarioConfig
from .physics import LineSpec, LoadingProfile
from .transient import DriveSpec, Protocol, standard_protocol


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} fields, table has {len(self.columns)} columns")
        self.rows.append(row)

    def column(self, name):
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])


@dataclass
class ScenarioResult:
    kind: str
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def ok(self):
        return not self.failures


@dataclass(frozen=True)
class Point:
    """One transient run of a sweep."""

    index: int
    line: LineSpec
    drive: DriveSpec
    protocol: Protocol
    probe: float  # frequency whose S-parameters are reported
    tag: str = ""


def _run_point(point: Point):
    tr = standard_protocol(point.line, point.drive, point.protocol, record_nodes="ends")
    frame = sp.dft(tr)
    tone = sp.single_tone(frame, point.probe)
    S11, S21 = sp.s_parameters(tone, point.line.Z0)
    return {"S11": complex(S11), "S21": complex(S21), "diagnostics": tr.diagnostics}


def _safe(point: Point):
    try:
        return point.index, _run_point(point), None
    except Exception as exc:  # recorded per point; the sweep carries on
        return point.index, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def run_points(points, workers=1):
    """Run every point, returning ``(result | None, error | None)`` in input order."""
    points = list(points)
    if workers <= 1 or len(points) <= 1:
        out = [_safe(p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_safe, points, chunksize=1))
    out.sort(key=lambda r: r[0])
    return [(r, e) for _, r, e in out]


def _db(x):
    return 20 * math.log10(abs(x)) if abs(x) > 0 else -math.inf


def _dbm(p):
    return 10 * math.log10(abs(p) / 1e-3) if p != 0 else -math.inf


def _scalars(diag: dict) -> dict:
    return {k: v for k, v in diag.items() if np.ndim(v) == 0}


def _record(result: ScenarioResult, point: Point, res, err):
    if err is not None:
        result.failures.append({"index": point.index, "tag": point.tag, "probe_Hz": point.probe, "error": err})
        return False
    result.diagnostics.append({"index": point.index, "tag": point.tag, **_scalars(res["diagnostics"])})
    return True


# ---------------------------------------------------------------------------
# dispersion report


def run_dispersion_report(cfg: ScenarioConfig) -> ScenarioResult:
    t0 = time.perf_counter()
    line = cfg.line
    res = ScenarioResult(cfg.kind)
    disp = tmm.bloch_dispersion(line)

    t = Table(["f_Hz", "k_re_rad_per_cell", "k_im_rad_per_cell", "half_trace"])
    for f, k, x in zip(disp.f, disp.k, disp.half_trace):
        t.add(float(f), float(k.real), float(k.imag), float(x.real))
    res.tables["dispersion"] = t

    gaps = Table(["index", "f_lo_Hz", "f_hi_Hz", "width_Hz", "analytic_center_Hz"])
    centers = disp.gap_centers(max(len(disp.stop_bands), 1))
    for j, (lo, hi) in enumerate(disp.stop_bands):
        gaps.add(j + 1, lo, hi, hi - lo, float(centers[j]) if j < len(centers) else math.nan)
    res.tables["gaps"] = gaps

    mm = Table(["fp_Hz", "fs_Hz", "dk", "dk_ps", "dk_pi", "xi", "xi_ps", "xi_pi"])
    summary_fp = {}
    for fp in cfg.sweep.fp:
        fs = np.arange(1, int(round(fp / 10e6))) * 10e6
        c = tmm.phase_mismatch(disp, fp, fs)
        for row in zip(fs, c.dk, c.dk_ps, c.dk_pi, c.xi, c.xi_ps, c.xi_pi):
            mm.add(fp, *map(float, row))
        at = tmm.phase_mismatch(disp, fp, cfg.drive.fs)
        summary_fp[f"{fp:.6g}"] = {
            "zero_crossings": c.zero_crossings(),
            "fs_Hz": cfg.drive.fs,
            "xi": float(at.xi[0]),
            "xi_ps": float(at.xi_ps[0]),
            "xi_pi": float(at.xi_pi[0]),
            # 2p sits in the second gap, pinned at Re k = k_m; the driven part travels at 2 k_p
            "coherence_2p_cells": float(math.pi / abs(2 * disp.k_at(fp).real[0] - disp.k_m)),
            "beat_2p_cells": float(2 * math.pi / abs(2 * disp.k_at(fp).real[0] - disp.k_m)),
            "pump_in_gap": bool(at.gap_flags["p"]),
            "2p_in_gap": bool(at.gap_flags["2p"]),
        }
    res.tables["mismatch"] = mm

    s = Table(["f_Hz", "S11_dB", "S21_dB", "S11_lossy_dB", "S21_lossy_dB"])
    f = disp.f[::10]
    a = tmm.linear_s_parameters(line, f)
    b = tmm.linear_s_parameters(line, f, lossy=True)
    for row in zip(f, a.S11_db, a.S21_db, b.S11_db, b.S21_db):
        s.add(*map(float, row))
    res.tables["sparams"] = s

    below = [g for g in disp.stop_bands if g[1] < 30e9]
    res.summary = {
        "L_S0_H": line.L_S0,
        "stop_bands_Hz": [list(g) for g in disp.stop_bands],
        "n_gaps_below_30GHz": len(below),
        "analytic_gap_centers_Hz": list(map(float, disp.gap_centers(2))),
        "per_pump": summary_fp,
    }
    res.wall_time = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# tone evolution


def analyse_tones(line: LineSpec, drive: DriveSpec, trace) -> tuple[dict, Table]:
    frame = sp.dft(trace)
    tones = sp.extract_tones(frame, drive.fp, drive.fs)
    S11, S21 = sp.s_parameters(tones["s"], line.Z0)
    out = {k: _dbm(v) for k, v in sp.output_powers(tones).items()}
    p_in = sp.incident_power(drive.pump_amp, line.Z0)
    s = {
        "gain_dB": float(sp.transducer_gain(S21)),
        "S11_signal_dB": _db(S11),
        "output_dBm": out,
        "incident_pump_dBm": _dbm(p_in),
        "pump_minus_2p_dB": out["p"] - out["2p"],
        "signal_minus_ps_dB": out["s"] - out["p+s"],
        "signal_minus_pi_dB": out["s"] - out["p+i"],
        "harmonic_fraction_peak": sp.harmonic_fraction(tones, drive.pump_amp, line.Z0),
        "harmonic_fraction_output": sp.harmonic_fraction(tones, drive.pump_amp, line.Z0, where="output"),
        "pump_min_depletion_dB": float(10 * np.log10(p_in / np.min(np.abs(tones["p"].P)))),
    }
    try:
        # averaging over one loading period strips the Bloch modulation inside each period
        s["beat_2p_cells"] = sp.beating_period(tones["2p"], average=line.profile.m)
    except sp.InsufficientDataError as exc:
        s["beat_2p_cells"] = math.nan
        s["beat_2p_error"] = str(exc)
    if not tones["s"].degenerate:
        fit = sp.fit_growth(tones["s"], tones["i"], line=line)
        s["growth_fit"] = {
            "g_per_cell": fit.g,
            "c_re": fit.c.real,
            "c_im": fit.c.imag,
            "gain_dB": fit.gain_db,
            "residual_dB": fit.residual_db,
            "max_drop_dB": fit.max_drop_db,
            "rejected": fit.rejected,
        }
    labels = list(tones)
    fwd = {}
    for lab in ("s", "i", "p"):
        try:
            fwd[lab] = sp.wave_powers(tones[lab], line)[0]
        except sp.InsufficientDataError:
            pass
    cols = ["n"] + [f"P_{lab}_dBm" for lab in labels] + [f"Pfwd_{lab}_dBm" for lab in fwd]
    t = Table(cols)
    P = {lab: tones[lab].P_dbm for lab in labels}
    with np.errstate(divide="ignore"):
        F = {lab: 10 * np.log10(np.abs(v) / 1e-3) for lab, v in fwd.items()}
    for c, n in enumerate(tones["s"].nodes):
        row = [int(n)] + [float(P[lab][c]) for lab in labels]
        row += [float(F[lab][c]) if c < len(F[lab]) else math.nan for lab in fwd]
        t.add(*row)
    return s, t


def run_tone_evolution(cfg: ScenarioConfig) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(cfg.kind)
    trace = standard_protocol(cfg.line, cfg.drive, cfg.protocol, record_nodes="all")
    res.summary, res.tables["tones"] = analyse_tones(cfg.line, cfg.drive, trace)
    res.diagnostics.append({"index": 0, "tag": "tones", **_scalars(trace.diagnostics)})
    res.wall_time = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# gain sweep


def _fine(axis: np.ndarray, step=20e6):
    n = int(round((axis[-1] - axis[0]) / step))
    return axis[0] + step * np.arange(n + 1)


def gain_points(cfg: ScenarioConfig, fp, fs_axis, pump_amp=None, tag="gain", start=0):
    drive = replace(cfg.drive, fp=fp, pump_amp=cfg.drive.pump_amp if pump_amp is None else pump_amp)
    return [Point(start + j, cfg.line, replace(drive, fs=float(f)), cfg.protocol, float(f), tag)
            for j, f in enumerate(fs_axis)]


def _gain_table(res: ScenarioResult, points, outcomes, name):
    t = res.tables.setdefault(name, Table(["tag", "fp_Hz", "pump_A", "fs_Hz", "G_dB", "S11_dB", "degenerate"]))
    for p, (r, e) in zip(points, outcomes):
        if not _record(res, p, r, e):
            continue
        deg = abs(p.drive.fs - p.drive.fp / 2) < 1.0
        t.add(p.tag, p.drive.fp, p.drive.pump_amp, p.drive.fs, _db(r["S21"]), _db(r["S11"]), deg)


def _profiles(table: Table, tag):
    rows = [r for r in table.rows if r[0] == tag]
    out = {}
    for fp in sorted({r[1] for r in rows}):
        sel = [r for r in rows if r[1] == fp]
        out[fp] = sp.GainProfile(np.array([r[3] for r in sel]), np.array([r[4] for r in sel]), fp,
                                 sel[0][2], 0.0, np.array([r[6] for r in sel], dtype=bool))
    return out


def _profile_summary(prof: sp.GainProfile):
    w, lo, hi = prof.bandwidth()
    env = prof.envelope()[1]
    return {
        "peak_dB": prof.peak_db,
        "envelope_peak_dB": float(np.max(env)) if env.size else math.nan,
        "bandwidth_3dB_Hz": w,
        "band_lo_Hz": lo,
        "band_hi_Hz": hi,
        "ripple_pp_dB": prof.ripple(band=(lo, hi)) if w > 0 else math.nan,
    }


def run_gain_sweep(cfg: ScenarioConfig) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(cfg.kind)
    axis = cfg.sweep.fs if cfg.sweep.fs is not None else np.arange(150, 501) * 20e6
    if cfg.fine_grid:
        axis = _fine(axis)
    points = []
    for fp in cfg.sweep.fp:
        points += gain_points(cfg, fp, axis, start=len(points))
    zoom = []
    if cfg.sweep.fine_fs is not None:
        zoom = gain_points(cfg, cfg.drive.fp, cfg.sweep.fine_fs, tag="zoom", start=len(points))
    outcomes = run_points(points + zoom, cfg.workers)
    _gain_table(res, points, outcomes[: len(points)], "gain")
    if zoom:
        _gain_table(res, zoom, outcomes[len(points):], "gain")
    per_fp = {}
    for fp, prof in _profiles(res.tables["gain"], "gain").items():
        per_fp[f"{fp:.6g}"] = _profile_summary(prof)
    for fp, prof in _profiles(res.tables["gain"], "zoom").items():
        per_fp.setdefault(f"{fp:.6g}", {})["ripple_spacing_Hz"] = prof.ripple_spacing()
    res.summary = {"per_pump": per_fp, "n_points": len(points) + len(zoom), "n_failed": len(res.failures)}
    res.wall_time = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# degenerate phase sweep


def phase_response_fit(theta, S21):
    """Fit ``S21(theta) = A + B exp(-2i theta) + F exp(-i theta)`` by linear least squares.

    A response linear in the signal amplitude a and its conjugate gives an
    output A a + B a* at fs = fp/2; any pump-locked output present without a
    signal adds a constant, which becomes the F term after dividing by
    a = |a| exp(i theta).  Returns ``(A, B, F, relative residual)``.
    """
    theta = np.asarray(theta, dtype=float)
    S21 = np.asarray(S21, dtype=complex)
    M = np.column_stack([np.ones_like(S21), np.exp(-2j * theta), np.exp(-1j * theta)])
    coef, *_ = np.linalg.lstsq(M, S21, rcond=None)
    rel = float(np.linalg.norm(M @ coef - S21) / np.linalg.norm(S21))
    A, B, F = (complex(c) for c in coef)
    return A, B, F, rel


def run_phase_sweep(cfg: ScenarioConfig, neighbour_offset=100e6) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(cfg.kind)
    n = cfg.sweep.phases
    thetas = 2 * math.pi * np.arange(n) / n
    points = []
    for fp in cfg.sweep.fp:
        base = replace(cfg.drive, fp=fp, fs=fp / 2)
        for th in thetas:
            points.append(Point(len(points), cfg.line, replace(base, signal_phase=float(th)), cfg.protocol,
                                fp / 2, "phase"))
        for off in (-neighbour_offset, neighbour_offset):
            points.append(Point(len(points), cfg.line, replace(base, fs=fp / 2 + off), cfg.protocol,
                                fp / 2 + off, "neighbour"))
    outcomes = run_points(points, cfg.workers)
    t = Table(["tag", "fp_Hz", "fs_Hz", "theta_s_rad", "G_dB", "S21_re", "S21_im"])
    for p, (r, e) in zip(points, outcomes):
        if _record(res, p, r, e):
            S = r["S21"]
            t.add(p.tag, p.drive.fp, p.drive.fs, p.drive.signal_phase, _db(S), S.real, S.imag)
    res.tables["phase"] = t

    per_fp = {}
    for fp in cfg.sweep.fp:
        rows = [r for r in t.rows if r[0] == "phase" and r[1] == fp]
        g = np.array([r[4] for r in rows])
        nb = [r[4] for r in t.rows if r[0] == "neighbour" and r[1] == fp]
        entry = {"n_phases": int(len(g))}
        if len(g) == n:
            A, B, F, rel = phase_response_fit([r[3] for r in rows], [complex(r[5], r[6]) for r in rows])
            entry.update(
                max_gain_dB=float(g.max()),
                min_gain_dB=float(g.min()),
                sampled_extinction_dB=float(g.max() - g.min()),
                extinction_dB=float(20 * np.log10((abs(A) + abs(B)) / max(abs(abs(A) - abs(B)), 1e-300))),
                fit_A=abs(A),
                fit_B=abs(B),
                fit_floor=abs(F),
                fit_rel_residual=rel,
                pi_shift_correlation=float(np.corrcoef(g, np.roll(g, -n // 2))[0, 1]) if n % 2 == 0 else math.nan,
            )
            if nb:
                entry["neighbour_gain_dB"] = float(np.mean(nb))
                entry["degenerate_excess_dB"] = float(g.max() - np.mean(nb))
        per_fp[f"{fp:.6g}"] = entry
    res.summary = {"per_pump": per_fp, "n_failed": len(res.failures)}
    res.wall_time = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# reflection scan


def run_reflection_scan(cfg: ScenarioConfig) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(cfg.kind)
    f_axis = cfg.sweep.f_reflect if cfg.sweep.f_reflect is not None else np.arange(250, 351) * 40e6
    points = []
    for amp in cfg.sweep.pump_amps:
        for f in f_axis:
            drive = DriveSpec(pump_amp=amp, fp=float(f), signal_amp=0.0, fs=float(f))
            points.append(Point(len(points), cfg.line, drive, cfg.protocol, float(f), "reflect"))
    outcomes = run_points(points, cfg.workers)
    # linear overlay uses the physical bias-point inductance, like the transient
    lin = tmm.linear_s_parameters(replace(cfg.line, L_S0_override=None), f_axis, lossy=True)
    lin_db = dict(zip(map(float, f_axis), lin.S11_db))
    t = Table(["pump_A", "f_Hz", "S11_dB", "S11_tmm_dB"])
    for p, (r, e) in zip(points, outcomes):
        if _record(res, p, r, e):
            t.add(p.drive.pump_amp, p.probe, _db(r["S11"]), float(lin_db[p.probe]))
    res.tables["reflection"] = t

    per_amp = {}
    for amp in cfg.sweep.pump_amps:
        rows = [r for r in t.rows if r[0] == amp]
        f = np.array([r[1] for r in rows])
        s = np.array([r[2] for r in rows])
        # lower gap edge: first frequency where the reflection reaches -3 dB
        hit = np.flatnonzero(s > -3.0)
        minima = f[tmm.local_minima(s)] if len(s) > 2 else np.array([])
        per_amp[f"{amp:.6g}"] = {
            "gap_lower_edge_Hz": float(f[hit[0]]) if hit.size else math.nan,
            "minima_Hz": list(map(float, minima)),
            "max_dev_from_tmm_dB": float(np.max(np.abs(s - np.array([r[3] for r in rows])))) if rows else math.nan,
        }
    res.summary = {"per_amp": per_amp, "n_failed": len(res.failures)}
    res.wall_time = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# uniform line


def run_uniform_comparison(cfg: ScenarioConfig) -> ScenarioResult:
    t0 = time.perf_counter()
    res = ScenarioResult(cfg.kind)
    line = cfg.line
    if not line.profile.is_uniform:
        line = line.with_profile(LoadingProfile.uniform(40e-15, line.N))
    ucfg = replace(cfg, line=line)

    trace = standard_protocol(line, cfg.drive, cfg.protocol, record_nodes="all")
    tones_summary, res.tables["tones"] = analyse_tones(line, cfg.drive, trace)
    res.diagnostics.append({"index": -1, "tag": "tones", **_scalars(trace.diagnostics)})

    axis = cfg.sweep.fs if cfg.sweep.fs is not None else np.arange(30, 101) * 100e6
    amp = cfg.sweep.pump_amps[0] if cfg.sweep.pump_amps else cfg.drive.pump_amp
    points = gain_points(ucfg, cfg.drive.fp, axis, pump_amp=amp)
    _gain_table(res, points, run_points(points, cfg.workers), "gain")
    profs = _profiles(res.tables["gain"], "gain")

    comp = Table(["quantity", "engineered", "uniform"])
    engineered = replace(line, profile=LoadingProfile(N=line.N))
    xi = {}
    for name, ln in (("engineered", engineered), ("uniform", line)):
        c = tmm.phase_mismatch(tmm.bloch_dispersion(ln), cfg.drive.fp, cfg.drive.fs)
        xi[name] = (float(c.xi[0]), float(c.xi_ps[0]), float(c.xi_pi[0]))
    for j, q in enumerate(("xi", "xi_ps", "xi_pi")):
        comp.add(q, xi["engineered"][j], xi["uniform"][j])
    res.tables["comparison"] = comp

    res.summary = {
        "tones": tones_summary,
        "gain": {f"{fp:.6g}": _profile_summary(p) for fp, p in profs.items()},
        "xi_uniform": dict(zip(("xi", "xi_ps", "xi_pi"), xi["uniform"])),
        "xi_engineered": dict(zip(("xi", "xi_ps", "xi_pi"), xi["engineered"])),
        "n_failed": len(res.failures),
    }
    res.wall_time = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# small-signal cross-check


@dataclass
class SmallSignalComparison:
    f: np.ndarray
    S21_db: np.ndarray
    S11_db: np.ndarray
    S21_tmm_db: np.ndarray
    S11_tmm_db: np.ndarray
    failures: list

    @property
    def attenuation_db(self):
        """Dissipated fraction only: ``-10 log10(|S21|^2 / (1 - |S11|^2))``."""
        s21 = 10 ** (self.S21_db / 10)
        s11 = 10 ** (self.S11_db / 10)
        return -10 * np.log10(s21 / (1 - s11))


def small_signal_check(line: LineSpec, freqs, protocol: Protocol = Protocol(), amp=10e-9,
                       workers=1) -> SmallSignalComparison:
    """Pump-off transient S-parameters next to the lossy transfer-matrix result."""
    freqs = np.asarray(freqs, dtype=float)
    points = [Point(j, line, DriveSpec(signal_amp=amp, fs=float(f)), protocol, float(f), "small-signal")
              for j, f in enumerate(freqs)]
    outcomes = run_points(points, workers)
    lin = tmm.linear_s_parameters(replace(line, L_S0_override=None), freqs, lossy=True)
    s21 = np.array([_db(r["S21"]) if r else math.nan for r, _ in outcomes])
    s11 = np.array([_db(r["S11"]) if r else math.nan for r, _ in outcomes])
    fails = [e for _, e in outcomes if e]
    return SmallSignalComparison(freqs, s21, s11, lin.S21_db, lin.S11_db, fails)


RUNNERS = {
    "dispersion-report": run_dispersion_report,
    "tone-evolution": run_tone_evolution,
    "gain-sweep": run_gain_sweep,
    "phase-sweep": run_phase_sweep,
    "reflection-scan": run_reflection_scan,
    "uniform-comparison": run_uniform_comparison,
    "custom": run_tone_evolution,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    return RUNNERS[cfg.kind](cfg)
