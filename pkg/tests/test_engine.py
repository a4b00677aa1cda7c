import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lisa.distributions import DisplacementLaw
from lisa.engine import (
    CSARejectionError,
    MissingRecorderError,
    ModelSpec,
    ParticleConfig,
    Simulation,
    embedded_maxima,
    run,
    step,
)
from lisa.nn_index import brute_nearest

ALL = {"chi", "d", "x", "dstar", "extrema", "psi"}


def test_clu_injected_step():
    cfg = ParticleConfig.initial(ModelSpec.clu())
    rec = step(cfg, ModelSpec.clu(), 0, chi=2, psi=-0.25)
    assert rec.x_new == 0.75
    assert cfg.points[:, 0].tolist() == [0.0, 1.0, 0.75]
    assert cfg.parents.tolist() == [0, 0, 2]


def test_rnu_injected_step():
    model = ModelSpec.rnu(initial=((0.0,), (0.4,), (0.9,)))
    cfg = ParticleConfig.initial(model)
    assert step(cfg, model, 0, chi=2, u=0.5).x_new == pytest.approx(0.65, abs=1e-15)


def test_bmq_fresh_draw_frequency():
    model = ModelSpec.bmq(initial=((0.1,), (0.2,), (0.3,), (0.4,)))
    base = ParticleConfig.initial(model)
    rng = np.random.default_rng(0)
    trials = 100_000
    fresh = 0
    for _ in range(trials):
        cfg = base.copy()
        x = step(cfg, model, rng).x_new
        fresh += x not in (0.1, 0.2, 0.3, 0.4)
    p = 0.25
    assert abs(fresh / trials - p) <= 4 * math.sqrt(p * (1 - p) / trials)


def test_zero_steps():
    tr = run(ModelSpec.clu(), 0, seed=1)
    assert len(tr.records) == 0
    assert tr.final.points[:, 0].tolist() == [0.0, 1.0]


@pytest.mark.parametrize("model", [ModelSpec.clu(), ModelSpec.rnu(), ModelSpec.cln(0.5), ModelSpec.bmq(),
                                   ModelSpec.csa(0.05, [1.0, 2.0]),
                                   ModelSpec.cld(DisplacementLaw.isotropic_normal(0.5, 2))])
def test_runs_are_reproducible(model):
    a = run(model, 300, seed=5, recorders=ALL)
    b = run(model, 300, seed=5, recorders=ALL)
    assert np.array_equal(a.final.points, b.final.points)
    for k, v in a.records.columns().items():
        w = b.records.columns()[k]
        assert (v is None and w is None) or np.array_equal(v, w, equal_nan=True)
    c = run(model, 300, seed=6)
    assert not np.array_equal(a.final.points, c.final.points)


def test_resumed_simulation_equals_single_run():
    sim = Simulation(ModelSpec.clu(), seed=3)
    sim.advance(100)
    sim.advance(150)
    tr = run(ModelSpec.clu(), 250, seed=3)
    assert np.array_equal(sim.config.points, tr.final.points)
    assert np.array_equal(sim.records.x, tr.records.x)


def test_replicas_are_distinct_streams():
    a = Simulation(ModelSpec.clu(), 1, 0)
    b = Simulation(ModelSpec.clu(), 1, 1)
    a.advance(20)
    b.advance(20)
    assert not np.array_equal(a.config.points, b.config.points)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 63), steps=st.integers(1, 400),
       variant=st.sampled_from(["clu", "rnu", "cln", "bmq"]))
def test_record_invariants(seed, steps, variant):
    model = {"clu": ModelSpec.clu(), "rnu": ModelSpec.rnu(), "cln": ModelSpec.cln(0.7),
             "bmq": ModelSpec.bmq()}[variant]
    tr = run(model, steps, seed=seed, recorders=ALL)
    rec = tr.records
    assert len(rec) == steps
    assert np.all(rec.m <= rec.M)
    assert np.all(np.diff(rec.M) >= 0) and np.all(np.diff(rec.m) <= 0)
    par = tr.final.parents
    ids = np.arange(1, len(par) + 1)
    assert np.all((par == 0) | (par < ids))
    assert np.all(rec.chi >= 1) and np.all(rec.chi <= rec.n)
    assert rec.dstar[-1] == brute_nearest(tr.final.points).max()


def test_clu_child_displacement_scaled_by_parent_distance():
    tr = run(ModelSpec.clu(), 500, seed=9, recorders=ALL)
    pts = tr.final.points[:, 0]
    rec = tr.records
    parent_x = pts[rec.chi - 1]
    assert np.allclose(rec.x[:, 0], parent_x + rec.d * rec.psi[:, 0], rtol=0, atol=1e-12)
    assert np.all(np.abs(rec.psi[:, 0]) <= 1)


def test_rnu_stays_in_unit_interval():
    tr = run(ModelSpec.rnu(), 2000, seed=2)
    assert np.all((tr.final.points >= 0) & (tr.final.points <= 1))


def test_csa_stays_in_box_2d():
    model = ModelSpec.csa(0.05, [1.0, 5.0, 1.0], box=((0.0, 0.0), (1.0, 2.0)), initial=((0.5, 0.5),))
    tr = run(model, 1000, seed=4)
    p = tr.final.points
    assert np.all(p[:, 0] >= 0) and np.all(p[:, 0] <= 1) and np.all(p[:, 1] <= 2)


def test_csa_rejection_failure():
    model = ModelSpec.csa(1e-9, [1e-12, 1.0], initial=((0.5,),))
    with pytest.raises(CSARejectionError):
        run(model, 50, seed=0)


def test_embedded_maxima_sequence():
    assert embedded_maxima([1, 1, 1.2, 1.2, 1.5]) == [(3, 1.2), (5, 1.5)]
    assert embedded_maxima([2.0, 2.0, 2.0]) == []


def test_embedded_maxima_needs_extrema():
    with pytest.raises(MissingRecorderError):
        embedded_maxima(run(ModelSpec.clu(), 10, seed=0))


def test_embedded_maxima_from_trace_are_record_values():
    tr = run(ModelSpec.clu(), 2000, seed=11, recorders={"extrema"})
    jumps = embedded_maxima(tr)
    vals = [v for _, v in jumps]
    assert vals == sorted(vals) and len(set(vals)) == len(vals)
    assert vals[-1] == tr.summary["max"]


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec.clu(initial=((0.0,),))
    with pytest.raises(ValueError):
        ModelSpec.csa(0.1, [1.0, -1.0])
    with pytest.raises(ValueError):
        ModelSpec.rnu(initial=((2.0,),))
    spec = ModelSpec.cln(0.3)
    assert ModelSpec.from_dict(spec.to_dict()) == spec


def test_cld_2d_cloud():
    tr = run(ModelSpec.cld(DisplacementLaw.isotropic_normal(0.5, 2)), 4000, seed=1)
    assert tr.final.points.shape == (tr.final.points.shape[0], 2)
    assert np.all(np.isfinite(tr.final.points))
