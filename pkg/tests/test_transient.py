import math
from dataclasses import replace

import numpy as np
import pytest

from jtwpa import spectral as sp
from jtwpa.acceptance import sealed_energy_drift
from jtwpa.physics import PHI0, LineSpec, LoadingProfile, SquidParams
from jtwpa.transient import (
    DriveSpec,
    NewtonConvergenceError,
    Protocol,
    assemble_network,
    integrate,
    network_energy,
    standard_protocol,
)

LOSSLESS = replace(SquidParams(), IcRJ=math.inf)


def test_network_assembly(short_line):
    net = assemble_network(short_line, DriveSpec())
    C = short_line.profile.sequence()
    # interior node: half of each adjacent loading capacitor plus two junction capacitors
    assert net.m_diag[5] == pytest.approx(0.5 * (C[4] + C[5]) + 2 * short_line.squid.CJ)
    assert net.m_diag[0] == pytest.approx(0.5 * C[0] + short_line.squid.CJ)
    assert np.all(net.m_off == -short_line.squid.CJ)
    assert net.g_diag[0] == pytest.approx(1 / short_line.squid.RJ + 1 / 50)
    assert net.phi_dc == pytest.approx(short_line.bias.phi_dc)


def test_zero_drive_stays_at_rest(short_line):
    net = assemble_network(short_line, DriveSpec(Idc=0.0))
    tr = integrate(net, 2e-9, 4e-12, (1e-9, 2e-9))
    assert np.all(tr.v == 0) and np.all(tr.i == 0)


def test_dc_bias_settles_to_static_phase(short_line):
    tr = standard_protocol(short_line, DriveSpec(), Protocol(t_discard=10e-9))
    phase = tr.diagnostics["mean_branch_phase"]
    np.testing.assert_allclose(phase, short_line.bias.phi_dc, atol=1e-6)
    # bias tees: no dc reaches the load
    assert abs(np.mean(tr.v[:, tr.column(short_line.N)])) < 1e-12


def test_single_cell_resonance_matches_trapezoidal_map():
    C = 400e-15
    line = LineSpec(squid=LOSSLESS, Idc=0.0, profile=LoadingProfile.uniform(C, 1), Rs=math.inf, Rt=math.inf)
    net = assemble_network(line, DriveSpec(Idc=0.0))
    amp = 1e-4 * PHI0
    h = 1e-12
    tr = integrate(net, 20e-9, h, (10e-9, 20e-9), substeps=1,
                   initial_state=(np.array([amp, 0.0]), np.zeros(2)))
    x = tr.v[:, 0] - tr.v[:, 1]
    t = tr.t
    up = np.flatnonzero((x[:-1] < 0) & (x[1:] >= 0))
    tc = t[up] - x[up] * (t[up + 1] - t[up]) / (x[up + 1] - x[up])
    f_meas = (len(tc) - 1) / (tc[-1] - tc[0])
    L0 = line.squid.L / (1 + line.squid.beta_L)
    w = 1 / math.sqrt(L0 * (C / 4 + line.squid.CJ))
    # trapezoidal rule maps the continuous resonance to (2/h) tan(w_d h / 2) = w
    f_expect = math.atan(w * h / 2) / (math.pi * h)
    assert f_meas == pytest.approx(f_expect, rel=2e-4)


def test_sealed_line_conserves_energy():
    assert sealed_energy_drift(N=100, t_end=20e-9, record=15e-9) < 1e-6


def test_energy_bookkeeping_matches_kernel():
    line = LineSpec(squid=LOSSLESS, Idc=0.0, profile=LoadingProfile(N=20), Rs=math.inf, Rt=math.inf)
    net = assemble_network(line, DriveSpec(Idc=0.0))
    phi0 = 0.1 * PHI0 * np.sin(np.linspace(0, np.pi, 21))
    tr = integrate(net, 1e-9, 4e-12, (0.5e-9, 1e-9), energy=True, initial_state=(phi0, np.zeros(21)))
    phi, v = tr.final_state
    assert network_energy(net, phi, v) == pytest.approx(tr.energy[-1], rel=1e-9)


def test_newton_failure_is_reported(short_line):
    net = assemble_network(short_line, DriveSpec(pump_amp=1e-2))
    with pytest.raises(NewtonConvergenceError):
        integrate(net, 1e-9, 4e-12, (0.5e-9, 1e-9), substeps=1)


def test_off_grid_drive_rejected(short_line):
    with pytest.raises(ValueError):
        standard_protocol(short_line, DriveSpec(signal_amp=1e-8, fs=6.71e9))


def test_recording_window_and_nodes(short_line):
    net = assemble_network(short_line, DriveSpec(signal_amp=1e-8))
    tr = integrate(net, 2e-9, 4e-12, (1e-9, 2e-9), record_nodes=[0, 7, 40])
    assert tr.M == 250
    assert list(tr.nodes) == [0, 7, 40]
    assert tr.t[0] == pytest.approx(1e-9)
    with pytest.raises(ValueError):
        integrate(net, 2e-9, 4e-12, (1.001e-9, 2e-9))


def test_small_signal_response_is_linear(short_line):
    def s21(amp):
        tr = standard_protocol(short_line, DriveSpec(signal_amp=amp, fs=5e9), Protocol(t_record=25e-9),
                               record_nodes="ends")
        return sp.s_parameters(sp.single_tone(sp.dft(tr), 5e9))[1]

    a, b = s21(1e-9), s21(10e-9)
    assert abs(a - b) < 1e-4 * abs(a)
