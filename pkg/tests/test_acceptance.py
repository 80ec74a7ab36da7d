"""Acceptance gate.

Each test prints the PASS/FAIL line of one numbered criterion and then
asserts it.  The heavy simulations are memoised in ``jtwpa.acceptance`` so the
whole module runs each scenario once.  Expect roughly half an hour on one core.
"""
import pytest

from jtwpa import acceptance as acc

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("number", sorted(acc.CRITERIA))
def test_criterion(number, capsys):
    crit = acc.CRITERIA[number]()
    with capsys.disabled():
        print("\n" + crit.line())
    assert crit.passed, crit.line()


def test_growth_fit_matches_end_to_end_gain(capsys):
    """Fitted growth on the nominal tone-evolution run agrees with the transducer gain within 1 dB."""
    s = acc.tone_run().summary
    fit = s["growth_fit"]
    diff = abs(fit["gain_dB"] - s["gain_dB"])
    with capsys.disabled():
        print(f"\n{'PASS' if diff <= 1 else 'FAIL'}  growth fit: fit_gain_dB={fit['gain_dB']:.4g} "
              f"S21_gain_dB={s['gain_dB']:.4g} residual_dB={fit['residual_dB']:.3g} [|diff| <= 1]")
    assert not fit["rejected"]
    assert diff <= 1.0
