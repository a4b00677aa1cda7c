import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from lisa.distributions import (
    DisplacementLaw,
    DivergentMomentError,
    NonTerminatingLawError,
    constants,
    eta_hat_moment,
    eta_moment,
    h_law_analytic,
    phi_value,
    sample_eta,
    sample_H,
    sample_psi,
    sample_psi_many,
)

# frozen reference values
C_NORMAL_05 = 0.3989422804014327   # 0.5 * sqrt(2/pi)
C_HAT_NORMAL_05 = 0.3904523         # half-normal quadrature, see test below
H_AT_1 = 0.6694764353000486          # (3/7 + 1)^(-1.125); quoted elsewhere as 0.6693


def test_parameter_domains():
    with pytest.raises(ValueError):
        DisplacementLaw.normal(0.0)
    with pytest.raises(ValueError):
        DisplacementLaw.power_mixture(1.0, 0.25, 0.3)
    with pytest.raises(ValueError):
        DisplacementLaw.power_mixture(2.0, 0.25, 1.0)
    with pytest.raises(ValueError):
        DisplacementLaw.deterministic(0.0)


@pytest.mark.parametrize("text", ["uniform", "normal:a=0.5", "power:alpha=2.0,beta=0.25,p=0.3,dim=1",
                                  "isonormal:a=0.5,dim=2", "deterministic:q=0.5,dim=1"])
def test_parse_round_trip(text):
    law = DisplacementLaw.parse(text)
    assert DisplacementLaw.parse(str(law)) == law


def test_deterministic_norm():
    law = DisplacementLaw.deterministic(0.5)
    rng = np.random.default_rng(3)
    assert all(abs(sample_psi(law, rng)) == 0.5 for _ in range(100))


def test_uniform_sign_balance():
    psi = sample_psi_many(DisplacementLaw.uniform(), 100_000, np.random.default_rng(1)).ravel()
    frac = np.mean(psi > 0)
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / len(psi))


def test_normal_mean_norm():
    eta = sample_eta(DisplacementLaw.normal(0.5), 1_000_000, np.random.default_rng(2))
    assert abs(eta.mean() - C_NORMAL_05) < 0.002


def test_isotropic_direction_uniform():
    psi = sample_psi_many(DisplacementLaw.isotropic_normal(1.0, 2), 20_000, np.random.default_rng(4))
    ang = np.arctan2(psi[:, 1], psi[:, 0])
    assert stats.kstest(ang, stats.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 0.01


def test_power_mixture_tails():
    law = DisplacementLaw.power_mixture(2.0, 0.25, 0.3)
    eta = sample_eta(law, 200_000, np.random.default_rng(5))
    assert abs(np.mean(eta >= 1) - 0.3) < 0.005
    assert abs(np.mean(eta < 0.5) - 0.7 * 0.5 ** 0.25) < 0.005


@pytest.mark.parametrize("law,t,expect", [
    (DisplacementLaw.uniform(), 1.0, 0.5),
    (DisplacementLaw.uniform(), 2.0, 1 / 3),
    (DisplacementLaw.power_mixture(2.0, 0.25, 0.3), 1.0, 0.74),
    (DisplacementLaw.normal(0.5), 1.0, C_NORMAL_05),
])
def test_eta_moment(law, t, expect):
    assert eta_moment(law, t) == pytest.approx(expect, abs=1e-9)


def test_eta_moment_divergent():
    with pytest.raises(DivergentMomentError):
        eta_moment(DisplacementLaw.power_mixture(2.0, 0.25, 0.3), 2.0)


def test_power_moment_monte_carlo():
    eta = sample_eta(DisplacementLaw.power_mixture(2.0, 0.25, 0.3), 1_000_000, np.random.default_rng(6))
    assert abs(eta.mean() - 0.74) < 0.005


@pytest.mark.parametrize("law,t,expect", [
    (DisplacementLaw.uniform(), 1.0, 0.5),
    (DisplacementLaw.deterministic(2.0), 1.0, 1.0),
    (DisplacementLaw.deterministic(2.0), 3.7, 1.0),
    (DisplacementLaw.normal(0.5), 1.0, C_HAT_NORMAL_05),
])
def test_eta_hat_moment(law, t, expect):
    assert eta_hat_moment(law, t) == pytest.approx(expect, abs=1e-6)


def test_eta_hat_normal_matches_quadrature():
    a = 0.5
    dens = lambda y: 2 / (a * math.sqrt(2 * math.pi)) * math.exp(-y * y / (2 * a * a))
    q = integrate.quad(lambda y: min(y, 1.0) * dens(y), 0, 1)[0] + integrate.quad(dens, 1, np.inf)[0]
    assert eta_hat_moment(DisplacementLaw.normal(a), 1.0) == pytest.approx(q, abs=1e-10)


def test_constants_examples():
    c = constants(DisplacementLaw.uniform())
    assert (c.C, c.C_hat) == (0.5, 0.5)
    c = constants(DisplacementLaw.deterministic(1.0))
    assert (c.C, c.C_hat) == (1.0, 1.0)
    c = constants(DisplacementLaw.normal(0.5))
    assert c.C == pytest.approx(C_NORMAL_05, abs=1e-6)
    assert c.C_hat == pytest.approx(C_HAT_NORMAL_05, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.05, 5.0), t=st.floats(0.1, 6.0))
def test_hat_moment_bounds(a, t):
    law = DisplacementLaw.normal(a)
    m, mh = eta_moment(law, t), eta_hat_moment(law, t)
    assert 0 <= mh <= min(m, 1.0) + 1e-12
    assert phi_value(law, t) < 1


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(1.1, 6.0), beta=st.floats(0.05, 3.0), p=st.floats(0.01, 0.99),
       seed=st.integers(0, 2 ** 32 - 1))
def test_eta_hat_never_exceeds_one(alpha, beta, p, seed):
    law = DisplacementLaw.power_mixture(alpha, beta, p)
    eta = sample_eta(law, 200, np.random.default_rng(seed))
    assert np.all(eta >= 0)
    assert np.all(np.minimum(eta, 1) <= 1)
    c = constants(law)
    assert 0 <= c.C_hat <= min(c.C, 1)


def test_h_cdf_values():
    hl = h_law_analytic(2.0, 0.25, 0.3)
    assert float(hl.H(1.0)) == pytest.approx(H_AT_1, abs=1e-12)
    assert float(hl.H(1.0)) == pytest.approx(0.6693, abs=1e-3)
    assert float(hl.H(1e12)) == pytest.approx(1.0, abs=1e-12)
    below = float(hl.H(np.nextafter(1.0, 0)))
    assert below == pytest.approx(float(hl.H(1.0)), abs=1e-12)


def test_sample_H_matches_closed_form():
    hl = h_law_analytic(2.0, 0.25, 0.3)
    h = np.sort(sample_H(DisplacementLaw.power_mixture(2.0, 0.25, 0.3), 7, n=100_000))
    ecdf = np.arange(1, len(h) + 1) / len(h)
    assert np.max(np.abs(ecdf - hl.H(h))) <= 0.02
    assert abs(np.mean(h <= 1.0) - H_AT_1) < 0.01


def test_sample_H_deterministic():
    assert sample_H(DisplacementLaw.deterministic(0.5), 0) == 0.5


def test_sample_H_uniform_mean_below_one():
    h = sample_H(DisplacementLaw.uniform(), 1, n=50_000)
    assert h.mean() < 1


def test_sample_H_nonterminating():
    with pytest.raises(NonTerminatingLawError):
        sample_H(DisplacementLaw.deterministic(1.0), 0)
