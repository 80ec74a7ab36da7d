import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jtwpa import spectral as sp


def _tone(V, I, f=6.7e9, label="s", nodes=None, degenerate=False):
    V = np.asarray(V, dtype=complex)
    nodes = np.arange(len(V)) if nodes is None else nodes
    return sp.ToneField(label, f, 0, nodes, V, np.asarray(I, dtype=complex), 0j, degenerate)


@given(st.integers(8, 256), st.integers(0, 2**32 - 1))
def test_parseval(M, seed):
    x = np.random.default_rng(seed).standard_normal(M)
    X = sp.full_dft(x)
    assert np.sum(np.abs(X) ** 2) * M == pytest.approx(np.sum(x**2), rel=1e-10)


@given(q=st.integers(1, 99), amp=st.floats(1e-9, 1.0), theta=st.floats(0, 2 * math.pi))
def test_on_grid_sinusoid_lands_in_one_bin(q, amp, theta):
    M = 200
    tau = np.arange(M)
    x = amp * np.sin(2 * math.pi * q * tau / M + theta)
    X = sp.dft_bins(x)
    peak = 2 * X[q]
    assert abs(peak) == pytest.approx(amp, rel=1e-9)
    leak = np.delete(np.abs(X), q)
    assert np.max(leak) < 1e-12 * max(amp, 1e-300) + 1e-15


def test_bin_lookup_rejects_off_grid():
    frame = sp.SpectralFrame(20e6, 12500, np.array([0]), np.zeros((6251, 1)), np.zeros((6251, 1)),
                             np.zeros(6251), 0)
    assert frame.bin_of(6.7e9) == 335
    with pytest.raises(sp.GridAlignmentError):
        frame.bin_of(6.71e9)
    with pytest.raises(sp.GridAlignmentError):
        frame.bin_of(200e9)


def test_tone_frequencies_and_degeneracy():
    f = sp.tone_frequencies(12.92e9, 6.7e9)
    assert f["i"] == pytest.approx(6.22e9)
    assert f["p+i"] == pytest.approx(19.14e9)
    assert f["2p"] == pytest.approx(25.84e9)


def test_power_and_s_parameters_of_matched_port():
    Z0 = 50.0
    # a forward wave of amplitude a into a matched load: V = Z0 I everywhere
    a = 1e-6
    t = _tone([a, a * np.exp(-0.3j)], [a / Z0, a / Z0 * np.exp(-0.3j)], nodes=np.array([0, 1]))
    t.I_in = a / Z0
    S11, S21 = sp.s_parameters(t, Z0)
    assert abs(S11) < 1e-15
    assert abs(S21) == pytest.approx(1.0)
    assert t.P[0] == pytest.approx(0.5 * a**2 / Z0)
    assert sp.incident_power(2 * a / Z0, Z0) == pytest.approx(t.P[0])


def test_no_incident_wave_raises():
    t = _tone([0, 0], [0, 0], nodes=np.array([0, 1]))
    with pytest.raises(sp.DegenerateDriveError):
        sp.s_parameters(t)


def test_beating_period_of_synthetic_envelope():
    n = np.arange(1500)
    V = np.sqrt(1e-3 * np.cos(np.pi * n / 100) ** 2 + 1e-9)
    t = _tone(V, V / 50, label="2p")
    assert sp.beating_period(t) == pytest.approx(100, abs=1)


def test_beating_period_averages_out_lattice_modulation():
    # strong modulation with the 20-cell lattice period on top of a weak 200-cell beat
    n = np.arange(1500)
    P = (1 + 0.9 * np.cos(2 * np.pi * n / 20)) * (1 + 0.1 * np.cos(2 * np.pi * n / 200))
    t = _tone(np.sqrt(P), np.sqrt(P), label="2p")
    assert sp.beating_period(t) == pytest.approx(20, abs=0.5)
    assert sp.beating_period(t, average=20) == pytest.approx(200, abs=5)


def test_beating_period_needs_extrema():
    n = np.arange(300)
    V = np.exp(n / 300)
    with pytest.raises(sp.InsufficientDataError):
        sp.beating_period(_tone(V, V / 50, label="2p"))


def _growth_tones(g, r, N=1500, noise=0.0, seed=0):
    n = np.arange(N)
    rng = np.random.default_rng(seed)
    As = np.cosh(g * n) + 1j * r * np.sinh(g * n)
    Ai = 0.9j * np.sinh(g * n)
    Ps = np.abs(As) ** 2 * (1 + noise * rng.standard_normal(N))
    Pi = np.abs(Ai) ** 2 + 1e-12
    s = _tone(np.sqrt(Ps), np.sqrt(Ps), label="s")
    i = _tone(np.sqrt(Pi), np.sqrt(Pi), label="i", f=6.22e9)
    return s, i


@pytest.mark.parametrize("g,r", [(2e-3, 0.0), (1.5e-3, 0.4), (3e-3, 0.1)])
def test_growth_fit_recovers_gain(g, r):
    s, i = _growth_tones(g, r)
    fit = sp.fit_growth(s, i, smooth=1)
    assert fit.g == pytest.approx(g, rel=1e-3)
    assert fit.mismatch_ratio == pytest.approx(r, abs=2e-3)
    assert not fit.rejected
    expect = 10 * math.log10(math.cosh(g * 1499) ** 2 + r**2 * math.sinh(g * 1499) ** 2)
    assert fit.gain_db == pytest.approx(expect, abs=0.01)


def test_growth_fit_rejects_oscillating_envelope():
    n = np.arange(1500)
    P = 1 + 0.9 * np.cos(2 * np.pi * n / 500)
    s = _tone(np.sqrt(P), np.sqrt(P), label="s")
    i = _tone(np.sqrt(P), np.sqrt(P), label="i", f=6.22e9)
    fit = sp.fit_growth(s, i)
    assert fit.rejected
    assert fit.max_drop_db > 3


def test_growth_fit_refuses_degenerate_tone():
    s, i = _growth_tones(1e-3, 0)
    s.degenerate = True
    with pytest.raises(ValueError):
        sp.fit_growth(s, i)


def test_harmonic_fraction_modes():
    n = np.arange(3)
    p_in = sp.incident_power(2e-6)

    def tone(P):
        P = np.asarray(P, dtype=float)
        return _tone(np.sqrt(P), 2 * np.sqrt(P), nodes=n)

    tones = {"2p": tone([0, 0.2 * p_in, 0.1 * p_in]), "p+s": tone([0, 0, 0]), "p+i": tone([0, 0, 0.05 * p_in])}
    assert sp.harmonic_fraction(tones, 2e-6) == pytest.approx(0.2)
    assert sp.harmonic_fraction(tones, 2e-6, where="output") == pytest.approx(0.15)
    with pytest.raises(ValueError):
        sp.harmonic_fraction(tones, 2e-6, where="middle")


def test_gain_profile_statistics():
    fs = np.arange(150, 501) * 0.02e9
    g = 20 - ((fs - 6.5e9) / 1.75e9) ** 2 * 3  # 3 dB down at 4.75 and 8.25 GHz
    g = g + 0.5 * np.sin(2 * np.pi * fs / 0.4e9)
    prof = sp.GainProfile(fs, g, 12.92e9, 1.8e-6, 1e-8)
    w, lo, hi = prof.bandwidth()
    assert 4.5e9 <= lo <= 5.0e9 and 8.0e9 <= hi <= 8.5e9
    assert w == pytest.approx(hi - lo)
    # a median window of one ripple period removes the smooth trend
    assert prof.ripple(width=0.4e9, band=(lo, hi)) == pytest.approx(1.0, abs=0.25)
    assert prof.ripple_spacing() == pytest.approx(0.4e9, abs=0.05e9)


def test_gain_profile_ignores_degenerate_bin():
    fs = np.array([6.40e9, 6.46e9, 6.50e9])
    prof = sp.GainProfile(fs, np.array([18.0, 30.0, 18.5]), 12.92e9, 1.8e-6, 1e-8)
    assert prof.degenerate_mask.tolist() == [False, True, False]
    assert prof.peak_db == 18.5


def test_moving_mean_keeps_full_windows():
    f = np.arange(11) * 1.0
    y = np.array([0, 0, 0, 0, 0, 10, 0, 0, 0, 0, 0], dtype=float)
    full, m = sp.moving_mean(y, f, 4.0)
    assert full.tolist() == [False] * 2 + [True] * 7 + [False] * 2
    assert m.tolist() == [0, 2, 2, 2, 2, 2, 0]


def test_moving_mean_removes_cavity_ripple():
    # log-gain of G0 / |1 - r e^{i phi}|^2 averages to G0 over whole periods
    f = np.arange(400) * 1.0
    phi = 2 * np.pi * f / 27
    g = 20 - 20 * np.log10(np.abs(1 - 0.6 * np.exp(1j * phi)))
    _, m = sp.moving_mean(g, f, 80.0)  # 81 samples, three whole periods
    assert np.allclose(m, 20, atol=1e-6)
