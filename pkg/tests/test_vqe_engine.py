import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasesketch import vqe_engine as V
from phasesketch.exact_oracle import ground_space
from phasesketch.model import build_model, coefficients
from phasesketch.qudit_sim import SpinCircuit

AKLT = math.atan(1 / 3)


def fake_record(g, p, subs, energy, theta, seed=0, model="tfim-1d"):
    return V.RunRecord(model=model, lattice=[4], g=g, param_name="h_x", p=p, seed=seed,
                       init_strategy="random", theta_final=list(theta), sub_expectations=list(subs),
                       energy=energy, order_params={}, iterations=0, grad_norm_final=0.0,
                       converged=True, wall_time=0.0)


def test_aklt_start_stays_put():
    m = build_model("bbc", 4)
    x0 = np.r_[np.zeros(4), 0.3, 1.0, 2.0, 0.5]
    rec = V.minimize(m, AKLT, 1, x0)
    assert rec.energy - ground_space(m, AKLT).energy < 1e-8


def test_minimize_descends():
    m = build_model("tfim-1d", 5)
    rng = np.random.default_rng(2)
    for _ in range(3):
        rec = V.minimize(m, 0.9, 2, V.random_init(m, 2, rng))
        assert rec.energy <= rec.initial_energy + 1e-12
        assert rec.energy >= ground_space(m, 0.9).energy - 1e-9


def test_small_tfim_reaches_ground_state():
    m = build_model("tfim-1d", 4)
    gs = ground_space(m, 0.2)
    best = min((V.minimize(m, 0.2, 2, V.random_init(m, 2, np.random.default_rng(s)), exact=gs) for s in range(5)),
               key=lambda r: r.energy)
    assert best.exact_ref["fidelity"] > 0.99


def test_record_energy_is_coefficient_dot_subs():
    m = build_model("bbc", 4)
    rec = V.minimize(m, 1.1, 2, V.random_init(m, 2, np.random.default_rng(0)), V.MinimizeOptions(max_iters=20))
    assert rec.energy == pytest.approx(float(coefficients(m, 1.1) @ rec.sub_expectations), abs=1e-12)
    assert rec.energy == pytest.approx(SpinCircuit(m).energy(1.1, np.array(rec.theta_final), 2), abs=1e-10)
    assert set(rec.order_params) == {"dimer", "string", "spin_corr"}


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        V.minimize(build_model("tfim-1d", 4), 1.0, 2, np.zeros(5))


def test_iteration_cap_reported():
    m = build_model("tfim-1d", 6)
    rec = V.minimize(m, 1.0, 3, V.random_init(m, 3, np.random.default_rng(1)), V.MinimizeOptions(max_iters=2))
    assert rec.iterations <= 2 and not rec.converged


def test_random_init_ranges():
    rng = np.random.default_rng(0)
    x = V.random_init(build_model("tfim-1d", 4), 4, rng, 2.0)
    assert x.shape == (16,) and x.min() >= 0 and x.max() <= 0.5
    y = V.random_init(build_model("bbc", 4), 2, rng)
    assert y.shape == (12,) and y[-4:].max() <= math.pi


def test_zero_pad_example():
    theta = np.array([[0.3, 0.1, 0.2, 0.05]])
    assert np.array_equal(V.zero_pad(theta, 3), np.array([[0.3, 0.1, 0.2, 0.05], [0, 0, 0, 0], [0, 0, 0, 0]]))


def test_smooth_resample_linear():
    theta = np.array([[0.1, 1.0], [0.3, 2.0]])
    out = V.smooth_resample(theta, 4)
    # columns are linear in l/p, so PCHIP reproduces them exactly
    expect = np.array([[0.0, 0.5], [0.1, 1.0], [0.2, 1.5], [0.3, 2.0]])
    assert np.allclose(out, expect)
    assert np.array_equal(V.smooth_resample(theta, 2), theta)


def test_cross_g_picks_best_score():
    m = build_model("tfim-1d", 4)
    a = fake_record(1.0, 2, (2, 0, 1, 0), -9.0, np.full(8, 0.1), seed=3)
    b = fake_record(1.2, 2, (1.9, 0, 0.9, 0), -9.5, np.full(8, 0.2), seed=1)
    assert float(coefficients(m, 0.5) @ [2, 0, 1, 0]) == pytest.approx(-1.5)
    cands = V.warm_start_candidates([a, b], (m, 0.5, 2), depth_modes=())
    assert cands[0][0] == "cross_g" and np.allclose(cands[0][1], 0.1)


def test_cross_g_skips_same_g_and_other_depths():
    m = build_model("tfim-1d", 4)
    same = fake_record(0.5, 2, (4, 4, 0, 0), -9.0, np.zeros(8))
    deeper = fake_record(0.7, 3, (4, 4, 0, 0), -9.0, np.zeros(12))
    assert V.warm_start_candidates([same, deeper], (m, 0.5, 2), depth_modes=()) == []
    assert V.warm_start_candidates([], (m, 0.5, 2)) == []


def test_depth_candidates_order():
    m = build_model("tfim-1d", 4)
    lo = fake_record(0.5, 1, (0, 0, 0, 0), -2.0, [0.3, 0.1, 0.2, 0.05], seed=1)
    hi = fake_record(0.5, 1, (0, 0, 0, 0), -1.0, [9, 9, 9, 9], seed=0)
    other = fake_record(0.8, 3, (2, 1, 0, 0), -3.0, np.ones(12))
    names = [n for n, _ in V.warm_start_candidates([hi, lo, other], (m, 0.5, 3))]
    assert names == ["smooth", "zero_pad", "cross_g"]
    zp = dict(V.warm_start_candidates([hi, lo], (m, 0.5, 3)))["zero_pad"]
    assert np.allclose(zp[:4], [0.3, 0.1, 0.2, 0.05]) and not zp[4:].any()


def test_bbc_boundary_carried_through_depth_start():
    m = build_model("bbc", 4)
    rec = fake_record(0.3, 1, (0, 0, 0, 0), -1.0, [0.1, 0.2, 0.3, 0.4, 1.0, 2.0, 0.5, 0.7], model="bbc")
    for _, x in V.warm_start_candidates([rec], (m, 0.3, 2)):
        assert x.shape == (12,) and np.allclose(x[-4:], [1.0, 2.0, 0.5, 0.7])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), p=st.integers(1, 4), extra=st.integers(1, 4))
def test_depth_start_reconstructs_energy(seed, p, extra):
    # zero-padding appends identity layers, so the energy is unchanged
    m = build_model("tfim-1d", 4)
    sim = SpinCircuit(m)
    x = np.random.default_rng(seed).uniform(-1, 1, sim.n_params(p))
    rec = fake_record(0.6, p, sim.sub_expectations(sim.run(x, p)), sim.energy(0.6, x, p), x)
    zp = dict(V.warm_start_candidates([rec], (m, 0.6, p + extra), cross_g=False))["zero_pad"]
    assert sim.energy(0.6, zp, p + extra) == pytest.approx(rec.energy, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), g2=st.floats(0.1, 2.0))
def test_cross_g_score_reconstructs_energy(seed, g2):
    m = build_model("tfim-1d", 4)
    sim = SpinCircuit(m)
    x = np.random.default_rng(seed).uniform(-1, 1, sim.n_params(2))
    subs = sim.sub_expectations(sim.run(x, 2))
    assert float(coefficients(m, g2) @ subs) == pytest.approx(sim.energy(g2, x, 2), abs=1e-10)


def test_task_seed():
    assert V.task_seed(1, 0, 2, 0, 1) == V.task_seed(1, 0, 2, 0, 1)
    seeds = {V.task_seed(1, gi, p, r, s) for gi in range(3) for p in (1, 2) for r in range(3) for s in (1, 2, 3)}
    assert len(seeds) == 54


def test_config_validation():
    with pytest.raises(ValueError):
        V.SweepConfig("tfim-1d", 4, [0.5], [2, 1])
    with pytest.raises(ValueError):
        V.SweepConfig("tfim-1d", 4, [], [1])
    with pytest.raises(ValueError):
        V.SweepConfig("tfim-1d", 4, [0.5], [1], depth_mode="spline")


@pytest.fixture(scope="module")
def small_sweep():
    cfg = V.SweepConfig("tfim-1d", 4, [0.3, 1.0, 1.7], [1, 2], n_restarts=2, seed=3, compute_exact=True)
    return cfg, V.run_sweep(cfg)


def test_sweep_record_count(small_sweep):
    cfg, recs = small_sweep
    # 3 g x 2 p x (2 random + depth + cross-g)
    assert len(recs) == 24
    assert sum(r.stage == 1 for r in recs) == 12
    assert all(r.exact_ref is not None and r.energy >= r.exact_ref["E0"] - 1e-9 for r in recs)
    assert sum(r.best for r in recs) == 6


def test_sweep_is_deterministic(small_sweep):
    cfg, recs = small_sweep
    again = V.run_sweep(cfg)
    assert [r.theta_final for r in recs] == [r.theta_final for r in again]
    assert [r.energy for r in recs] == [r.energy for r in again]


def test_sweep_stage_strategies(small_sweep):
    _, recs = small_sweep
    stage2 = [r for r in recs if r.stage == 2]
    assert {r.init_strategy for r in stage2 if r.p == 1} == {"random"}
    assert {r.init_strategy for r in stage2 if r.p == 2} == {"depth_extrapolated"}
    assert {r.init_strategy for r in recs if r.stage == 3} == {"cross_g"}


def test_warm_start_never_worse_than_its_start(small_sweep):
    # a warm-started run ends at or below the seed it was started from
    cfg, recs = small_sweep
    stage1 = {(r.g_index, r.p): min(x.energy for x in recs if x.stage == 1 and (x.g_index, x.p) == (r.g_index, r.p))
              for r in recs}
    for r in recs:
        if r.stage > 1:
            assert r.energy <= r.initial_energy + 1e-12
    best = V.best_energies(recs)
    assert all(best[(cfg.g_grid[gi], p)] <= e + 1e-12 for (gi, p), e in stage1.items())


def test_sweep_resume_skips_done(small_sweep):
    cfg, recs = small_sweep

    class Store:
        def __init__(self, rs):
            self.rs, self.added = list(rs), []

        def records(self):
            return self.rs

        def append(self, r):
            self.added.append(r)

    partial = Store([r for r in recs if r.stage == 1])
    out = V.run_sweep(cfg, partial)
    assert len(partial.added) == 12 and len(out) == 24
    full = Store(recs)
    V.run_sweep(cfg, full)
    assert full.added == []


def test_parallel_matches_serial(small_sweep):
    cfg, recs = small_sweep
    par = V.run_sweep(cfg, workers=2)
    assert [r.energy for r in par] == [r.energy for r in recs]
