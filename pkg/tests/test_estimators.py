import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lisa.distributions import DisplacementLaw
from lisa.engine import ModelSpec, ParticleConfig, Simulation, run
from lisa.estimators import (
    CoincidentPointError,
    EmpiricalMeasure,
    IntervalPartition,
    MixtureCdf,
    SupportTooLargeError,
    beta_ks,
    beta_parameters,
    empirical_cdf,
    interval_mass_estimate,
    ks_distance,
    local_dimension,
    lp_consecutive_formula,
    lp_oracle,
    mixture_cdf,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def test_empirical_two_points():
    m = EmpiricalMeasure.from_points([0.0, 1.0])
    assert m.cdf([-1.0, 0.0, 0.5, 0.999, 1.0, 3.0]).tolist() == [0.0, 0.5, 0.5, 0.5, 1.0, 1.0]


def test_equal_atoms_give_unit_jump():
    m = EmpiricalMeasure.from_points([0.3] * 7)
    assert m.cdf_left(0.3) == 0.0 and m.cdf(0.3) == 1.0


@settings(max_examples=60, deadline=None)
@given(xs=st.lists(finite, min_size=1, max_size=50))
def test_empirical_is_a_cdf(xs):
    m = EmpiricalMeasure.from_points(xs)
    t = np.sort(np.concatenate([xs, np.linspace(-200, 200, 50)]))
    v = m.cdf(t)
    assert np.all(np.diff(v) >= 0)
    assert m.cdf(np.inf) == 1.0 and m.cdf(-np.inf) == 0.0
    assert abs(m.total - 1.0) <= 1e-12


def test_ks_trivial_cases():
    a = EmpiricalMeasure.from_points([0.1, 0.5])
    assert ks_distance(a, a) == 0.0
    assert ks_distance(EmpiricalMeasure.from_points([0.0]), EmpiricalMeasure.from_points([1.0])) == 1.0


def test_ks_harness_self_test():
    # 1.63/sqrt(n) is the 0.01 quantile of the limiting KS law
    rng = np.random.default_rng(0)
    n = 10_000
    unif = lambda t: np.clip(t, 0, 1)
    hits = sum(ks_distance(EmpiricalMeasure.from_points(rng.random(n)), unif) <= 1.63 / np.sqrt(n)
               for _ in range(200))
    assert hits >= 190


@pytest.mark.filterwarnings("ignore:ks_2samp:RuntimeWarning")
@settings(max_examples=40, deadline=None)
@given(xs=st.lists(finite, min_size=1, max_size=30), ys=st.lists(finite, min_size=1, max_size=30))
def test_ks_matches_scipy_two_sample(xs, ys):
    d = ks_distance(EmpiricalMeasure.from_points(xs), EmpiricalMeasure.from_points(ys))
    assert d == pytest.approx(stats.ks_2samp(xs, ys).statistic, abs=1e-12)


def test_lp_examples():
    d0 = EmpiricalMeasure.from_points([0.0])
    assert lp_oracle(d0, d0) == 0.0
    assert lp_oracle(d0, EmpiricalMeasure.from_points([0.3])) == pytest.approx(0.3, abs=1e-15)
    assert lp_oracle(d0, EmpiricalMeasure.from_points([0.0, 5.0])) == 0.5


def test_lp_support_limit():
    m = EmpiricalMeasure.from_points(np.arange(10.0))
    with pytest.raises(SupportTooLargeError):
        lp_oracle(m, EmpiricalMeasure.from_points(np.arange(10.0) + 0.5))


def _lp_bisect(mu, nu, tol=1e-10):
    # independent reference: brute check of every union for a given eps
    xs = np.union1d(mu.atoms, nu.atoms)
    a = np.array([mu.weights[mu.atoms == x].sum() for x in xs])
    b = np.array([nu.weights[nu.atoms == x].sum() for x in xs])
    k = len(xs)

    def ok(eps):
        for mask in range(1, 1 << k):
            sel = np.array([(mask >> i) & 1 for i in range(k)], bool)
            enl = np.any(np.abs(xs[:, None] - xs[sel][None, :]) <= eps, axis=1)
            if a[sel].sum() > b[enl].sum() + eps + 1e-12 or b[sel].sum() > a[enl].sum() + eps + 1e-12:
                return False
        return True

    lo, hi = 0.0, max(1.0, np.ptp(xs))
    while hi - lo > tol:
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


@settings(max_examples=25, deadline=None)
@given(xs=st.lists(st.floats(0, 2), min_size=1, max_size=4),
       ys=st.lists(st.floats(0, 2), min_size=1, max_size=4))
def test_lp_oracle_matches_bisection(xs, ys):
    mu, nu = EmpiricalMeasure.from_points(xs), EmpiricalMeasure.from_points(ys)
    assert lp_oracle(mu, nu) == pytest.approx(_lp_bisect(mu, nu), abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(xs=st.lists(st.floats(0, 2), min_size=1, max_size=5),
       ys=st.lists(st.floats(0, 2), min_size=1, max_size=5))
def test_lp_is_symmetric_and_bounded(xs, ys):
    mu, nu = EmpiricalMeasure.from_points(xs), EmpiricalMeasure.from_points(ys)
    d = lp_oracle(mu, nu)
    assert d == lp_oracle(nu, mu)
    assert 0 <= d <= 1


@pytest.mark.parametrize("n,dstar,expect", [(10, 0.5, 0.1), (100, 1e-6, 1e-4), (10, 0.05, 0.05)])
def test_lp_formula_branches(n, dstar, expect):
    assert lp_consecutive_formula(n, dstar) == pytest.approx(expect, rel=1e-12)


def test_mixture_two_points_uniform():
    mix = mixture_cdf(ParticleConfig.from_points([[0.0], [1.0]]), DisplacementLaw.uniform())
    assert mix.cdf(0.5) == pytest.approx(0.5, abs=1e-15)
    assert mix.cdf(-1.0) == 0.0 and mix.cdf(2.0) == 1.0
    # linear between the breakpoints -1, 0, 1, 2
    for lo, hi in ((-1, 0), (0, 1), (1, 2)):
        v = mix.cdf(np.linspace(lo, hi, 101))
        assert np.max(np.abs(np.diff(v, 2))) < 1e-12


def test_mixture_single_component_far_left():
    mix = MixtureCdf([0.0, 1.0], [1.0, 1.0], DisplacementLaw.normal(0.5))
    assert mix.cdf(-40.0) == 0.0


def test_mixture_zero_scale_modes():
    with pytest.raises(CoincidentPointError):
        MixtureCdf([0.0, 0.0], [0.0, 0.0], DisplacementLaw.uniform())
    mix = MixtureCdf([0.0, 0.0, 1.0], [0.0, 0.0, 1.0], DisplacementLaw.uniform(), zero_scale="atom")
    # two atoms at 0 and a Unif[0, 2] component
    assert mix.cdf_left(0.0) == 0.0
    assert mix.cdf(0.0) == pytest.approx(2 / 3)
    assert mix.cdf(1.0) == pytest.approx(2 / 3 + 1 / 6)


def test_mixture_ks_shrinks_on_clu():
    sim = Simulation(ModelSpec.clu(), 3)
    sim.advance_to(100)
    law = DisplacementLaw.uniform()
    k1 = ks_distance(mixture_cdf(sim.config, law, "atom"), empirical_cdf(sim.config))
    sim.advance_to(10_000)
    k2 = ks_distance(mixture_cdf(sim.config, law, "atom"), empirical_cdf(sim.config))
    assert k2 < k1 and k2 < 0.05


@settings(max_examples=30, deadline=None)
@given(xs=st.lists(st.floats(-10, 10), min_size=2, max_size=40, unique=True))
def test_mixture_is_a_cdf(xs):
    mix = mixture_cdf(np.asarray(xs), DisplacementLaw.normal(0.7))
    t = np.linspace(-200, 200, 2000)
    v = mix.cdf(t)
    assert np.all(np.diff(v) >= -1e-15)
    assert v[0] == pytest.approx(0.0, abs=1e-12) and v[-1] == pytest.approx(1.0, abs=1e-12)


def test_beta_parameters():
    assert beta_parameters(2, {1}) == (1.0, 1.0)
    assert beta_parameters(2, {0}) == (0.5, 1.5)
    assert beta_parameters(3, {0, 3}) == (1.0, 2.0)
    with pytest.raises(ValueError):
        beta_parameters(2, {0, 1, 2})


def test_interval_partition():
    p = IntervalPartition([0.0, 1.0])
    assert p.locate([-0.5, 0.0, 0.5, 1.0, 2.0]).tolist() == [0, 1, 1, 2, 2]


def test_beta_law_three_point_base():
    base = IntervalPartition([0.0, 1.0, 2.0])
    m = interval_mass_estimate(ModelSpec.clu(), base, {0, 3}, 2000, 400, seed=1)
    assert beta_ks(m, 3, {0, 3}).pvalue > 0.01


def test_local_dimension_uniform_points():
    pts = np.random.default_rng(0).random(100_000)
    assert local_dimension(pts, probes=300) == pytest.approx(1.0, abs=0.05)


def test_local_dimension_coincident():
    assert local_dimension(np.full(100, 0.5), probes=20) == pytest.approx(0.0, abs=1e-12)


def test_local_dimension_rnu():
    tr = run(ModelSpec.rnu(), 100_000, seed=0, recorders=())
    assert local_dimension(tr.final, probes=500) == pytest.approx(0.5, abs=0.1)
