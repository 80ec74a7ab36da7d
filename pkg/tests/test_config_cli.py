import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jtwpa import cli
from jtwpa.config import (
    CONFIG_DIR,
    ConfigError,
    config_from_dict,
    default_config,
    format_quantity,
    frequency_axis,
    load_config,
    parse_quantity,
)
from jtwpa.scenarios import Point, run_points
from jtwpa.transient import DriveSpec, Protocol


@pytest.mark.parametrize(
    "text, unit, value",
    [
        ("84 pH", "H", 84e-12),
        ("1.57 uA", "A", 1.57e-6),
        ("1.57 µA", "A", 1.57e-6),
        ("12.92 GHz", "Hz", 12.92e9),
        ("16.5 mV", "V", 16.5e-3),
        ("50 ns", "s", 5e-8),
        ("50 ohm", "ohm", 50.0),
        ("inf ohm", "ohm", math.inf),
        ("40fF", "F", 40e-15),
    ],
)
def test_parse_quantity(text, unit, value):
    assert parse_quantity(text, unit) == value


@pytest.mark.parametrize("text, unit", [("84 pH", "A"), ("84", "H"), (84e-12, "H"), ("84 parsecs", "H")])
def test_parse_quantity_rejects(text, unit):
    with pytest.raises(ConfigError):
        parse_quantity(text, unit)


@given(st.floats(1e-15, 1e11, allow_nan=False, allow_infinity=False))
def test_format_parse_roundtrip(x):
    assert parse_quantity(format_quantity(x, "Hz"), "Hz") == pytest.approx(x, rel=1e-11)


def test_frequency_axis_is_on_grid():
    f = frequency_axis({"start": "3 GHz", "stop": "10 GHz", "step": "100 MHz"})
    assert len(f) == 71 and f[0] == 3e9 and f[-1] == pytest.approx(10e9)
    assert np.allclose(np.round(f / 20e6) * 20e6, f, rtol=0, atol=1e-3)
    with pytest.raises(ConfigError):
        frequency_axis({"start": "3 GHz", "stop": "1 GHz", "step": "100 MHz"})


@pytest.mark.parametrize("kind", ["dispersion-report", "tone-evolution", "gain-sweep", "phase-sweep",
                                  "reflection-scan", "uniform-comparison"])
def test_shipped_configs_load(kind):
    cfg = default_config(kind)
    assert cfg.kind == kind
    assert cfg.protocol.dt == 4e-12


def test_extends_merges_nested_keys(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(f"extends: {CONFIG_DIR / 'device.yaml'}\nscenario: custom\nline:\n  squid:\n    L: 90 pH\n")
    cfg = load_config(p)
    base = default_config("tone-evolution").line
    assert cfg.line.squid.L == 90e-12
    assert cfg.line.squid.Ic == base.squid.Ic
    assert cfg.line.profile == base.profile


def test_hash_tracks_numerics_only():
    a = default_config("gain-sweep")
    assert a.hash() == default_config("gain-sweep").hash()
    assert a.with_overrides(out="elsewhere", workers=3).hash() == a.hash()
    assert a.with_overrides(dt=2e-12).hash() != a.hash()


def test_bad_config_errors():
    with pytest.raises(ConfigError):
        config_from_dict({"scenario": "bogus"})
    with pytest.raises(ConfigError):
        config_from_dict({"line": {"Idc": 9.8}})


def test_cli_dispersion_writes_artifacts(tmp_path, capsys):
    assert cli.main(["dispersion", "--out", str(tmp_path)]) == 0
    info = json.loads(capsys.readouterr().out)
    manifest = json.loads(open(info["manifest"]).read())
    assert manifest["scenario"] == "dispersion-report"
    assert manifest["files"]
    for name in manifest["files"]:
        with open(tmp_path / name) as fh:
            first = fh.readline()
            assert first.startswith("# manifest=dispersion-report_manifest.json")
            assert f"config_hash={manifest['config_hash']}" in first
            header = next(csv.reader(fh))
            assert header


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("scenario: gain-sweep\nline:\n  Z0: fifty\n")
    assert cli.main(["run", str(p)]) == 2
    assert cli.main(["gain", "--config", str(CONFIG_DIR / "phase-sweep.yaml")]) == 2


def _points(line, amps, f=10e9):
    proto = Protocol(t_discard=2e-9, t_record=10e-9)
    return [Point(i, line, DriveSpec(pump_amp=a, fp=f, signal_amp=0.0, fs=f), proto, f, "t")
            for i, a in enumerate(amps)]


def test_run_points_order_independent_of_workers(short_line):
    pts = _points(short_line, [0.1e-6, 0.2e-6, 0.4e-6])
    one = run_points(pts, 1)
    two = run_points(pts, 2)
    assert [e for _, e in one] == [None] * 3
    for (a, _), (b, _) in zip(one, two):
        assert a["S11"] == b["S11"] and a["S21"] == b["S21"]


def test_failed_points_are_recorded(short_line):
    # 10.01 GHz is off the 100 MHz grid of a 10 ns record, so that point raises
    pts = _points(short_line, [0.1e-6]) + [replace(_points(short_line, [0.1e-6], f=10.01e9)[0], index=1)]
    out = run_points(pts, 1)
    assert out[0][1] is None and out[1][0] is None
    assert out[1][1].startswith("ValueError")


def test_cli_nonzero_exit_on_failed_point(tmp_path, capsys):
    p = tmp_path / "r.yaml"
    p.write_text(
        f"extends: {CONFIG_DIR / 'device.yaml'}\n"
        "scenario: reflection-scan\n"
        "line: {N: 40}\n"
        "solver: {discard: 2 ns, record: 10 ns}\n"
        "sweep:\n  pump_amps: [0.1 uA]\n  f_reflect: [10 GHz, 10.01 GHz]\n"
    )
    assert cli.main(["run", str(p), "--out", str(tmp_path / "o")]) == 1
    manifest = json.loads((tmp_path / "o" / "reflection-scan_manifest.json").read_text())
    assert len(manifest["failures"]) == 1


def test_phase_response_fit_recovers_coefficients():
    from jtwpa.scenarios import phase_response_fit

    th = 2 * np.pi * np.arange(24) / 24
    A, B, F = 57 * np.exp(0.3j), 56 * np.exp(-1j), 0.5j
    a, b, f, rel = phase_response_fit(th, A + B * np.exp(-2j * th) + F * np.exp(-1j * th))
    assert a == pytest.approx(A) and b == pytest.approx(B) and f == pytest.approx(F)
    assert rel < 1e-12
