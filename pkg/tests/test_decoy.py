import math

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from oracles import arm_oracle, poisson_channel, single_photon_truth
from qframes.decoy import analytic_qber_oracle, binary_entropy, dark_pair_click, decoy_bounds, effective_optical_error

T_ETA = (0.01, 0.05, 0.2)


def bounds_for(mu, nu, t_eta, e_det=0.0, y0=0.0):
    q_mu, e_mu = poisson_channel(mu, t_eta, e_det, y0)
    q_nu, e_nu = poisson_channel(nu, t_eta, e_det, y0)
    return decoy_bounds(q_mu, e_mu, q_nu, e_nu, y0, mu, nu)


def test_entropy_identities():
    assert binary_entropy(0) == 0 and binary_entropy(1) == 0
    assert binary_entropy(0.5) == 1.0
    for p in (0.01, 0.1, 0.3):
        assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-15)


@pytest.mark.parametrize("t_eta", T_ETA)
def test_ideal_channel_bracketing(t_eta):
    d = bounds_for(0.5, 0.1, t_eta)
    assert d.Y1_lower <= t_eta + 1e-12
    assert d.e1_upper >= 0 and not d.degenerate


def test_ideal_channel_tightness():
    d = bounds_for(0.5, 0.1, 0.05)
    assert d.Y1_lower == pytest.approx(0.05, rel=0.15)


def test_zero_errors_give_zero_e1():
    assert bounds_for(0.5, 0.1, 0.05).e1_upper == 0.0


@given(
    st.sampled_from(T_ETA),
    st.floats(0.2, 1.0),
    st.floats(0.05, 0.9),
    st.floats(0.0, 0.1),
    st.floats(0.0, 1e-3),
)
def test_bracketing_with_noise(t_eta, mu, ratio, e_det, y0):
    nu = mu * ratio
    d = bounds_for(mu, nu, t_eta, e_det, y0)
    y1, e1 = single_photon_truth(t_eta, e_det, y0)
    assert d.Y1_lower <= y1 + 1e-12
    if d.e1_upper is not None and d.e1_upper < 0.5:
        assert d.e1_upper >= e1 - 1e-12


def test_clamping_and_degenerate():
    # decoy gain far too small: the Y1 bound goes negative
    d = decoy_bounds(0.02, 0.03, 1e-6, 0.03, 0.0, 0.5, 0.1)
    assert d.degenerate and d.Y1_lower == 0.0 and d.e1_upper is None and d.Q1_lower == 0.0
    assert d.rate_lower < 0


def test_parameter_errors():
    with pytest.raises(ValueError):
        decoy_bounds(0.02, 0.03, 0.004, 0.03, 0.0, 0.1, 0.5)
    with pytest.raises(ValueError):
        decoy_bounds(0.02, 0.03, 0.004, 0.03, 0.0, 0.5, 0.0)
    with pytest.raises(ValueError):
        decoy_bounds(0.02, 0.03, 0.004, 0.03, -1.0, 0.5, 0.1)


def test_oracle_matches_reference():
    for mu, p, e in ((0.5, 7.5e-4, 0.03), (0.1, 1e-3, 0.0), (1.0, 0.0, 0.1)):
        got = analytic_qber_oracle(mu, 0.9995, 0.2, p, e)
        assert (got.gain, got.qber) == pytest.approx(arm_oracle(mu, 0.9995, 0.2, p, e), rel=1e-12)


def test_oracle_limits():
    assert analytic_qber_oracle(0.5, 1.0, 0.1, 0.0, 0.037).qber == pytest.approx(0.037, abs=1e-15)
    y0c = dark_pair_click(1e-3)
    assert analytic_qber_oracle(1e4, 1.0, 1.0, 1e-3, 0.0).qber == pytest.approx(y0c / 2 / (1 + y0c), rel=1e-12)


def test_oracle_mu_monotonic():
    # e_opt 3%, dark rate tuned so QBER(0.5) is about 3.4%
    p = brentq(lambda x: analytic_qber_oracle(0.5, 1.0, 0.1, x, 0.03).qber - 0.034, 0.0, 1e-2)
    hi = analytic_qber_oracle(0.5, 1.0, 0.1, p, 0.03).qber
    lo = analytic_qber_oracle(0.1, 1.0, 0.1, p, 0.03).qber
    assert hi == pytest.approx(0.034, abs=1e-9) and lo > hi


def test_effective_error():
    assert effective_optical_error(0.0, 0.002) == 0.002
    assert effective_optical_error(0.03, 0.0) == 0.03
    assert effective_optical_error(0.5, 0.3) == pytest.approx(0.5)
    assert dark_pair_click(7.502814611362041e-4) == pytest.approx(0.0015, rel=1e-12)
    assert math.isclose(dark_pair_click(0.0), 0.0)
