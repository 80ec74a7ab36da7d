import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jtwpa import tmm
from jtwpa.physics import LineSpec, LoadingProfile, approx_dispersion

freq = st.floats(0.05e9, 60e9)
cap = st.floats(1e-15, 200e-15)


@given(f=freq, c=cap)
def test_cell_determinant_is_one(f, c):
    l = LineSpec()
    w = 2 * math.pi * f
    if abs(1 - w**2 * l.squid.CJ * l.L_S0) < 1e-6:
        return
    T = tmm.cell_transfer_matrix(w, l.L_S0, l.squid.CJ, c)
    assert abs(tmm.det(T) - 1) < 1e-10
    T = tmm.cell_transfer_matrix(w, l.L_S0, l.squid.CJ, c, RJ=l.squid.RJ)
    assert abs(tmm.det(T) - 1) < 1e-10


@given(f=freq, c=cap)
def test_closed_form_matches_cascade(f, c):
    l = LineSpec()
    w = 2 * math.pi * f
    if abs(1 - w**2 * l.squid.CJ * l.L_S0) < 1e-6:
        return
    T = tmm.cell_transfer_matrix(w, l.L_S0, l.squid.CJ, c)
    Zb = 1 / (1 / (1j * w * l.L_S0) + 1j * w * l.squid.CJ)
    ref = tmm.shunt(0.5j * w * c) @ tmm.series(Zb) @ tmm.shunt(0.5j * w * c)
    np.testing.assert_allclose(T, ref, rtol=1e-9, atol=1e-12 * np.abs(ref).max())


def test_singular_frequency_raises():
    l = LineSpec()
    wJ = 1 / math.sqrt(l.L_S0 * l.squid.CJ)
    with pytest.raises(tmm.SingularFrequencyError):
        tmm.cell_transfer_matrix(wJ, l.L_S0, l.squid.CJ, 40e-15)


def test_cascade_order_and_empty():
    a = tmm.series(1.0)
    b = tmm.shunt(1.0)
    np.testing.assert_allclose(tmm.cascade([a, b]), a @ b)
    with pytest.raises(ValueError):
        tmm.cascade([])


def test_lossless_line_is_unitary(paper_line):
    s = tmm.linear_s_parameters(paper_line, tmm.default_grid(0.1e9, 30e9, 7e6))
    assert np.max(np.abs(np.abs(s.S11) ** 2 + np.abs(s.S21) ** 2 - 1)) < 1e-9


def test_lossy_line_dissipates(paper_line):
    s = tmm.linear_s_parameters(paper_line, np.array([5e9, 10e9]), lossy=True)
    assert np.all(np.abs(s.S11) ** 2 + np.abs(s.S21) ** 2 < 1)


def test_matched_line_input_impedance():
    # a single-cell line terminated in its own impedance at low frequency
    l = LineSpec(profile=LoadingProfile.uniform(40e-15, 10), Z0=math.sqrt(108.55e-12 / 40e-15))
    s = tmm.linear_s_parameters(l, np.array([0.1e9]))
    assert abs(s.S11[0]) < 1e-2
    assert s.Z_in[0].real == pytest.approx(l.Z0, rel=2e-2)


def test_paper_band_structure():
    disp = tmm.bloch_dispersion(LineSpec(L_S0_override=109e-12))
    gaps = disp.stop_bands
    assert len(gaps) == 2
    c1, c2 = disp.gap_centers(2)
    assert gaps[0][0] < c1 < gaps[0][1]
    assert gaps[1][0] < c2 < gaps[1][1]
    assert disp.contains(25.84e9) and not disp.contains(12.92e9)


def test_bloch_k_is_monotone_and_matches_low_frequency_limit():
    l = LineSpec()
    disp = tmm.bloch_dispersion(l)
    assert np.all(np.diff(disp.k.real) >= -1e-12)
    f = disp.f[disp.f < 2e9]
    ref = approx_dispersion(2 * np.pi * f, l.omega0, l.omegaJ)
    np.testing.assert_allclose(disp.k.real[: len(f)], ref, rtol=2e-3)


def test_k_is_complex_only_in_gaps():
    disp = tmm.bloch_dispersion(LineSpec())
    assert np.all(disp.k.imag[~disp.in_gap] == 0)
    assert np.all(disp.k.imag[disp.in_gap] > 0)


def test_k_at_agrees_with_grid():
    disp = tmm.bloch_dispersion(LineSpec())
    idx = np.arange(100, len(disp.f), 997)
    np.testing.assert_allclose(disp.k_at(disp.f[idx]).real, disp.k.real[idx], atol=1e-9)


def test_uniform_line_has_no_gaps_below_30GHz():
    disp = tmm.bloch_dispersion(LineSpec(profile=LoadingProfile.uniform(40e-15)))
    assert disp.stop_bands == []


def test_doubling_the_period_halves_the_first_gap():
    base = tmm.bloch_dispersion(LineSpec())
    wide = tmm.bloch_dispersion(LineSpec(profile=LoadingProfile(kappa=10, mu=10, nu=10, N=1200)))
    c_base = np.mean(base.stop_bands[0])
    c_wide = np.mean(wide.stop_bands[0])
    assert c_wide == pytest.approx(c_base / 2, rel=0.05)


def test_mismatch_at_nominal_point():
    disp = tmm.bloch_dispersion(LineSpec(L_S0_override=109e-12))
    c = tmm.phase_mismatch(disp, 12.92e9, np.arange(1, 1292) * 10e6)
    assert c.zero_crossings() == 2
    at = tmm.phase_mismatch(disp, 12.92e9, 6.7e9)
    # p+s falls in the second gap, so its coherence length is undefined
    assert at.gap_flags["p+s"][0] and math.isnan(at.xi_ps[0])
    assert at.xi[0] > 1500


def test_side_lobe_spacing_tracks_line_length(paper_line):
    s = tmm.linear_s_parameters(paper_line, np.arange(2e9, 6e9, 2e6))
    spacing = tmm.side_lobe_spacing(s, (2e9, 6e9))
    # phase velocity omega0 cells/s over twice the line length
    assert spacing == pytest.approx(paper_line.omega0 / (2 * paper_line.N), rel=0.25)
    with pytest.raises(tmm.InsufficientBandError):
        tmm.side_lobe_spacing(s, (2e9, 2.01e9))


def test_bloch_impedances_are_conjugate_pairs_in_band(paper_line):
    Zf, Zb = tmm.bloch_impedances(paper_line, 6.7e9)
    assert Zf.shape == (paper_line.N,)
    assert np.all(Zf.real > 0)
    np.testing.assert_allclose(Zb, -np.conj(Zf), rtol=1e-6)
