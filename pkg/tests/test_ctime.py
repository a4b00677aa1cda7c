import math

import numpy as np
import pytest
from scipy import stats

from lisa.ctime import (
    InsufficientReplicasError,
    PopulationCapError,
    decay_rate_bound,
    dstar_increases,
    spacing_decay_fit,
    yule_run,
)
from lisa.distributions import DisplacementLaw, constants
from lisa.engine import ModelSpec, Simulation

YULE_MEAN_T3 = 2 * math.exp(3)    # n0 e^T with n0 = 2


def test_zero_horizon_is_initial_configuration():
    tt = yule_run(ModelSpec.clu(), 0.0, seed=1)
    assert tt.count == 2
    assert tt.discrete.final.points[:, 0].tolist() == [0.0, 1.0]
    assert tt.birth_times.tolist() == [0.0, 0.0]


def test_birth_times_sorted():
    tt = yule_run(ModelSpec.clu(), 4.0, seed=2)
    assert np.all(np.diff(tt.birth_times) >= 0)
    assert tt.birth_times[-1] <= 4.0


def test_yule_mean():
    counts = np.array([yule_run(ModelSpec.clu(), 3.0, 0, r, recorders=()).count for r in range(10_000)])
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - YULE_MEAN_T3) <= 4 * se


def test_yule_count_is_negative_binomial():
    # a Yule process from n0 has NegBin(n0, e^-T) count at T
    counts = np.array([yule_run(ModelSpec.clu(), 1.0, 5, r, recorders=()).count for r in range(4000)])
    p = math.exp(-1.0)
    ref = stats.nbinom(2, p)
    obs = np.bincount(counts - 2, minlength=60)[:60]
    exp = ref.pmf(np.arange(60)) * len(counts)
    keep = exp > 5
    chi2 = ((obs[keep] - exp[keep]) ** 2 / exp[keep]).sum()
    assert stats.chi2(keep.sum() - 1).sf(chi2) > 0.01


def test_embedded_chain_matches_discrete_run():
    n = 1000
    timed, plain = [], []
    for r in range(2000):
        sim = Simulation(ModelSpec.clu(), 9, r, recorders=(), timed=True)
        sim.advance_to(n)
        timed.append(sim.max_spacing())
        sim = Simulation(ModelSpec.clu(), 10, r, recorders=())
        sim.advance_to(n)
        plain.append(sim.max_spacing())
    assert stats.ks_2samp(timed, plain).pvalue > 0.01


def test_population_cap():
    with pytest.raises(PopulationCapError):
        yule_run(ModelSpec.clu(), 10.0, seed=0, cap=1000)


def test_dstar_never_increases():
    tt = yule_run(ModelSpec.cln(0.3), 5.0, seed=3)
    assert dstar_increases(tt) == 0


def test_decay_fit_cln():
    law = DisplacementLaw.normal(0.3)
    trs = [yule_run(ModelSpec.cln(0.3), 6.0, 1, r) for r in range(500)]
    slope = spacing_decay_fit(trs, law, np.linspace(2, 6, 9))
    assert slope <= decay_rate_bound(law) + 0.05


def test_decay_fit_deterministic():
    q = 0.3
    law = DisplacementLaw.deterministic(q)
    c = constants(law)
    assert (c.C, c.C_hat) == (q, q)
    assert decay_rate_bound(law) == pytest.approx(-(1 - 2 * q))
    trs = [yule_run(ModelSpec.cld(law), 5.0, 2, r) for r in range(200)]
    assert spacing_decay_fit(trs, law, np.linspace(1, 5, 9)) <= decay_rate_bound(law) + 0.05


def test_decay_fit_errors():
    law = DisplacementLaw.normal(0.3)
    trs = [yule_run(ModelSpec.cln(0.3), 2.0, 1, r) for r in range(100)]
    with pytest.raises(ValueError):
        spacing_decay_fit(trs, law, [2.0])
    with pytest.raises(InsufficientReplicasError):
        spacing_decay_fit(trs[:10], law, [1.0, 2.0])
