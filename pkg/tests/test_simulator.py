import json

import numpy as np
import pytest

from synthdse.estimator import allocate_all, estimate_all
from synthdse.model import FormulaKind, SimConfig
from synthdse.simulator import (
    PRNG_NAME,
    estimate_grids,
    equality_rate,
    generate_population,
    homogeneity_rejection_rate,
    oracle_size,
    run_monte_carlo,
    simulate_measurement,
    small_instance_oracle,
)


def _dump(mc):
    return json.dumps(mc.to_dict(), sort_keys=True)


def test_population_models():
    fixed = SimConfig(2, 3, true_pop=[[1, 2, 3], [4, 5, 6]])
    assert generate_population(fixed).tolist() == [[1, 2, 3], [4, 5, 6]]
    with pytest.raises(ValueError, match="integral"):
        generate_population(SimConfig(1, 1, true_pop=2.5))
    pois = SimConfig(2, 3, true_pop=1000, pop_model="poisson", seed=9)
    assert np.array_equal(generate_population(pois), generate_population(pois))
    other = SimConfig(2, 3, true_pop=1000, pop_model="poisson", seed=10)
    assert not np.array_equal(generate_population(pois), generate_population(other))


def test_measurement_accounting():
    cfg = SimConfig(2, 3, true_pop=500, capture_prob=0.9, ee_rate=0.05, ii_rate=0.04,
                    late_add_rate=0.02, survey_prob=0.3, seed=1)
    truth = generate_population(cfg)
    cells, survey = simulate_measurement(truth, cfg, rep=4)
    for c in cells:
        assert c.census == c.dd + c.ii
    again, _ = simulate_measurement(truth, cfg, rep=4)
    assert again == cells
    other, _ = simulate_measurement(truth, cfg, rep=5)
    assert other != cells
    assert all(0 < s.mr <= 1 for s in survey)


def test_grid_estimator_matches_scalar_pipeline():
    cfg = SimConfig(2, 3, true_pop=[[200, 300, 400], [150, 250, 350]], capture_prob=[0.8, 0.9, 0.95],
                    ee_rate=0.03, ii_rate=[0.02, 0.05, 0.1], survey_prob=0.6, seed=2)
    truth = generate_population(cfg)
    cells, survey = simulate_measurement(truth, cfg)
    estimates = estimate_all(cells, survey)
    grid = {n: np.zeros(cfg.shape) for n in ("census", "dd", "ii", "ce", "ee", "mn", "nn")}
    for i, s in enumerate(cfg.strata_names):
        for k, r in enumerate(cfg.region_names):
            c = next(c for c in cells if c.key == (s, r))
            grid["census"][i, k], grid["dd"][i, k], grid["ii"][i, k] = c.census, c.dd, c.ii
        # survey inputs per stratum fit in the first column
        grid["ce"][i, 0], grid["ee"][i, 0] = survey[i].ce, survey[i].ee
        grid["mn"][i, 0], grid["nn"][i, 0] = survey[i].mr, 1 - survey[i].mr
    alloc, dse, valid = estimate_grids(**grid)
    assert valid
    for i, s in enumerate(cfg.strata_names):
        assert dse[i] == pytest.approx(estimates[s].dse, rel=1e-12)
    for j, f in enumerate(FormulaKind):
        table = allocate_all(estimates, cells, f)
        for i, s in enumerate(cfg.strata_names):
            for k, r in enumerate(cfg.region_names):
                assert alloc[j, i, k] == pytest.approx(table.entries[(s, r)], rel=1e-12)


def test_perfect_census_is_exact():
    cfg = SimConfig(3, 4, true_pop=[[17, 250, 3, 999]] * 3, capture_prob=1.0, survey_prob=1.0,
                    n_reps=300, seed=5)
    mc = run_monte_carlo(cfg)
    assert mc.n_valid == 300
    assert np.all(mc.bias == 0.0)
    assert np.all(mc.mse == 0.0)
    assert np.array_equal(mc.mean_alloc, np.broadcast_to(mc.truth.astype(float), mc.mean_alloc.shape))


def test_report_is_deterministic_and_seeded():
    cfg = SimConfig(2, 3, true_pop=300, capture_prob=0.9, ii_rate=0.05, ee_rate=0.02, survey_prob=0.5,
                    n_reps=600, seed=21)
    first = _dump(run_monte_carlo(cfg))
    assert first == _dump(run_monte_carlo(cfg))
    assert first == _dump(run_monte_carlo(cfg, workers=2))
    cfg.seed = 22
    assert first != _dump(run_monte_carlo(cfg))
    assert json.loads(first)["prng"] == PRNG_NAME


def test_alt2_wins_when_imputation_tracks_misses():
    # region 1 misses more people and imputes more; alt2 follows the imputations
    cfg = SimConfig(1, 2, true_pop=10_000, capture_prob=[0.85, 0.99], ii_rate=[0.10, 0.01],
                    survey_prob=0.5, n_reps=512, seed=3)
    mc = run_monte_carlo(cfg)
    mse = dict(zip(mc.formulas, mc.mse.sum(axis=1)))
    assert min(mse, key=mse.get) == "alt2"
    assert mse["alt2"] < 0.1 * mse["cb"]


def test_homogeneous_world_is_unbiased():
    cfg = SimConfig(2, 4, true_pop=5000, capture_prob=0.9, ii_rate=0.05, ee_rate=0.02, survey_prob=0.5,
                    n_reps=1024, seed=4)
    mc = run_monte_carlo(cfg)
    z = mc.bias / mc.bias_se
    assert np.all(np.abs(z) < 4)
    assert mc.cb_between > 0.5


def test_normalization_tracked():
    cfg = SimConfig(3, 5, true_pop=800, capture_prob=0.92, ii_rate=0.03, ee_rate=0.01, survey_prob=0.4,
                    n_reps=256, seed=8)
    mc = run_monte_carlo(cfg)
    assert np.all(mc.normalization_max < 1e-12)


def test_equality_and_rejection_rates():
    uniform = SimConfig(2, 3, true_pop=100, capture_prob=1.0, ii_rate=0.0, n_reps=20, seed=1)
    assert equality_rate(uniform) == 1.0
    het = SimConfig(1, 4, true_pop=10_000, capture_prob=1.0, ii_rate=[0.01, 0.01, 0.10, 0.10],
                    n_reps=20, seed=1)
    assert homogeneity_rejection_rate(het) == 1.0


def test_oracle_expected_counts_have_closed_forms():
    cfg = SimConfig(1, 2, true_pop=[[3, 2]], capture_prob=[0.7, 0.9], ee_rate=0.1, ii_rate=[0.2, 0.1],
                    late_add_rate=[0.05, 0.0], survey_prob=0.6)
    res = small_instance_oracle(cfg)
    n = np.array([[3.0, 2.0]])
    p = np.array([[0.7, 0.9]])
    assert res.expected_counts["census"] == pytest.approx(n * (p + 0.1), rel=1e-12)
    assert res.expected_counts["ii"] == pytest.approx(n * p * np.array([[0.25, 0.1]]), rel=1e-12)
    assert res.expected_counts["ee"] == pytest.approx(n * 0.1, rel=1e-12)
    assert 0 < res.p_valid < 1
    assert res.n_outcomes == oracle_size(cfg, generate_population(cfg))


def test_oracle_single_person():
    # one person: valid only when captured as a correct enumeration and surveyed
    cfg = SimConfig(1, 1, true_pop=1, capture_prob=0.8, survey_prob=0.5)
    res = small_instance_oracle(cfg)
    assert res.p_valid == pytest.approx(0.4)
    assert res.expected_alloc[:, 0, 0] == pytest.approx([1.0] * 4)


def test_oracle_refuses_large_instances():
    with pytest.raises(ValueError, match="at most"):
        small_instance_oracle(SimConfig(1, 2, true_pop=15))
    with pytest.raises(ValueError, match="joint outcomes"):
        small_instance_oracle(SimConfig(2, 2, true_pop=5, ee_rate=0.1, ii_rate=0.1, late_add_rate=0.1,
                                        survey_prob=0.5), limit=1000)


def test_monte_carlo_matches_oracle_quickly():
    cfg = SimConfig(1, 2, true_pop=[[4, 3]], capture_prob=[0.8, 0.6], ii_rate=[0.25, 0.1], ee_rate=0.1,
                    survey_prob=0.7, n_reps=20_000, seed=11)
    exact = small_instance_oracle(cfg)
    mc = run_monte_carlo(cfg)
    assert mc.n_valid / mc.n_reps == pytest.approx(exact.p_valid, abs=4 * np.sqrt(0.25 / mc.n_reps))
    z = (mc.mean_alloc - exact.expected_alloc) / mc.se_alloc
    assert np.all(np.abs(z) < 4)
