import csv

import numpy as np
import pytest

from robust_gcc.exceptions import DimensionError
from robust_gcc.model.examples import REFERENCE_K_FOUR_OUTPUT
from robust_gcc.model.system import close_loop, closed_loop_delta_bar, step
from robust_gcc.model.uncertainty import DeltaRealization, sample_delta_batch
from robust_gcc.simulation.montecarlo import (
    MonteCarloRunner,
    SimConfig,
    check_bound,
    run,
    write_run_csv,
    write_trajectory_csvs,
)
from robust_gcc.synthesis.lqr import lqr


@pytest.fixture(scope="module")
def structured_report(plant, cost, lemma_structured):
    cfg = SimConfig(runs=5000, horizon=200, seed=2024)
    return run(plant, cost, lemma_structured.k, cfg, certificate=lemma_structured.p)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(runs=0)
    with pytest.raises(ValueError):
        SimConfig(horizon=-1)
    with pytest.raises(ValueError):
        SimConfig(x0_mode="fixed")
    with pytest.raises(ValueError):
        SimConfig(x0_mode="uniform")
    assert SimConfig(x0_mode="fixed", x0=[1, 2, 3]).x0 == (1.0, 2.0, 3.0)


def test_runner_rejects_gain_shape(plant, cost):
    with pytest.raises(DimensionError):
        MonteCarloRunner(plant, cost, np.zeros((3, 2)))


def test_runner_rejects_fixed_state_length(plant, cost):
    runner = MonteCarloRunner(plant, cost, np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        runner.run(SimConfig(runs=1, horizon=1, x0_mode="fixed", x0=(1.0, 1.0)))


def test_nominal_lqr_matches_riccati(plant, cost):
    nominal = plant.nominal()
    result = lqr(nominal, cost)
    x0 = np.ones(3)
    cfg = SimConfig(runs=1, horizon=2000, x0_mode="fixed", x0=tuple(x0))
    report = run(nominal, cost, result.k, cfg)
    assert report.per_run_costs[0] == pytest.approx(x0 @ result.p @ x0, rel=1e-3)


def test_structured_effective_cost(structured_report):
    assert 35.0 <= structured_report.effective_cost <= 55.0
    assert structured_report.diverged_runs == 0
    assert structured_report.ci95_halfwidth > 0


def test_unstructured_effective_cost(mild_plant, cost, mild_lemma_unstructured):
    p = mild_lemma_unstructured.p
    report = run(mild_plant, cost, mild_lemma_unstructured.k,
                 SimConfig(runs=5000, horizon=200, seed=2024), certificate=p)
    assert report.diverged_runs == 0
    assert report.bound_violations == 0
    guaranteed = np.einsum('ri,ij,rj->r', report.x0_samples, p, report.x0_samples)
    assert report.effective_cost <= np.mean(guaranteed) * (1 + 1e-6) + 1e-9


def test_certificate_holds_on_every_run(structured_report):
    assert structured_report.bound.checked == 5000
    assert structured_report.bound_violations == 0
    assert structured_report.lyapunov_violations == 0
    assert structured_report.bound.worst_ratio <= 1.0
    assert np.all(structured_report.bound_ok)


def test_lqr_is_far_worse_under_uncertainty(plant, cost, lqr_result, structured_report):
    report = run(plant, cost, lqr_result.k, SimConfig(runs=5000, horizon=200, seed=2024))
    assert report.effective_cost >= 5.0 * structured_report.effective_cost
    # the nominal Riccati matrix is not a robust certificate
    check_bound(report, lqr_result.p)
    assert report.bound_violations > 0


def test_effective_cost_is_mean_of_runs(structured_report):
    assert structured_report.effective_cost == pytest.approx(np.mean(structured_report.per_run_costs))
    expected = 1.96 * np.std(structured_report.per_run_costs, ddof=1) / np.sqrt(5000)
    assert structured_report.ci95_halfwidth == pytest.approx(expected)


def test_zero_horizon(plant, cost, lemma_structured):
    report = run(plant, cost, lemma_structured.k, SimConfig(runs=10, horizon=0),
                 certificate=lemma_structured.p)
    np.testing.assert_array_equal(report.per_run_costs, np.zeros(10))
    assert report.bound_violations == 0


def test_runs_are_deterministic(plant, cost, lemma_structured):
    cfg = SimConfig(runs=300, horizon=50, seed=5, chunk_size=64)
    first = run(plant, cost, lemma_structured.k, cfg)
    second = run(plant, cost, lemma_structured.k, cfg)
    np.testing.assert_array_equal(first.per_run_costs, second.per_run_costs)
    np.testing.assert_array_equal(first.x0_samples, second.x0_samples)


def test_results_independent_of_chunking_and_workers(plant, cost, lemma_structured):
    serial = run(plant, cost, lemma_structured.k, SimConfig(runs=300, horizon=50, seed=5, chunk_size=300))
    parallel = run(plant, cost, lemma_structured.k,
                   SimConfig(runs=300, horizon=50, seed=5, chunk_size=37, workers=2))
    np.testing.assert_allclose(serial.per_run_costs, parallel.per_run_costs, rtol=1e-12)
    np.testing.assert_array_equal(serial.x0_samples, parallel.x0_samples)


def test_parallel_runs_are_deterministic(plant, cost, lemma_structured):
    cfg = SimConfig(runs=300, horizon=50, seed=5, chunk_size=37, workers=3)
    first = run(plant, cost, lemma_structured.k, cfg)
    second = run(plant, cost, lemma_structured.k, cfg)
    np.testing.assert_array_equal(first.per_run_costs, second.per_run_costs)


def test_different_seeds_differ(plant, cost, lemma_structured):
    a = run(plant, cost, lemma_structured.k, SimConfig(runs=20, horizon=20, seed=1))
    b = run(plant, cost, lemma_structured.k, SimConfig(runs=20, horizon=20, seed=2))
    assert not np.array_equal(a.per_run_costs, b.per_run_costs)


def test_diverging_runs_are_excluded(plant, cost):
    # nominal open loop grows like 1.1^k until the cost overflows
    cfg = SimConfig(runs=2, horizon=20000, x0_mode="fixed", x0=(1.0, 1.0, 1.0))
    report = run(plant.nominal(), cost, np.zeros((2, 3)), cfg)
    assert report.diverged_runs == 2
    assert report.max_state_norm == float("inf")
    assert report.effective_cost == float("inf")


def test_trajectories_follow_closed_loop_step(four_output_plant, cost):
    cfg = SimConfig(runs=2, horizon=50, seed=9, record_trajectories=True)
    report = MonteCarloRunner(four_output_plant, cost, REFERENCE_K_FOUR_OUTPUT).run(cfg)
    cl = close_loop(four_output_plant, cost, REFERENCE_K_FOUR_OUTPUT)
    for i, trajectory in enumerate(report.trajectories):
        rng = np.random.default_rng([cfg.seed, i])
        x = rng.standard_normal(four_output_plant.n_x)
        batch = sample_delta_batch(four_output_plant.structure, rng, cfg.horizon)
        for t in range(cfg.horizon):
            np.testing.assert_allclose(trajectory[t, 1:4], x, rtol=1e-9, atol=1e-9)
            d = DeltaRealization(blocks=tuple(b[t] for b in batch))
            x = step(cl, closed_loop_delta_bar(cl, d), x)


def test_trajectory_stage_costs_sum_to_run_cost(plant, cost, lemma_structured):
    cfg = SimConfig(runs=3, horizon=40, seed=4, record_trajectories=True)
    report = run(plant, cost, lemma_structured.k, cfg)
    for trajectory, total in zip(report.trajectories, report.per_run_costs):
        assert trajectory.shape == (40, 1 + 3 + 2 + 1)
        assert np.sum(trajectory[:, -1]) == pytest.approx(total, rel=1e-12)


def test_run_csv(tmp_path, plant, cost, lemma_structured):
    report = run(plant, cost, lemma_structured.k, SimConfig(runs=5, horizon=10),
                 certificate=lemma_structured.p)
    path = tmp_path / "runs.csv"
    write_run_csv(report, path)
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['run', 'cost', 'bound_ok']
    assert len(rows) == 6
    assert all(row[2] == 'true' for row in rows[1:])
    assert float(rows[3][1]) == report.per_run_costs[2]


def test_trajectory_csvs(tmp_path, plant, cost, lemma_structured):
    report = run(plant, cost, lemma_structured.k, SimConfig(runs=2, horizon=5, record_trajectories=True))
    paths = write_trajectory_csvs(report, tmp_path / "traj", plant.n_x, plant.n_u)
    assert [p.name for p in paths] == ['run_00000.csv', 'run_00001.csv']
    with open(paths[0]) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['k', 'x_1', 'x_2', 'x_3', 'u_1', 'u_2', 'stage_cost']
    assert [row[0] for row in rows[1:]] == ['0', '1', '2', '3', '4']


def test_trajectory_csvs_require_recording(tmp_path, plant, cost, lemma_structured):
    report = run(plant, cost, lemma_structured.k, SimConfig(runs=1, horizon=5))
    with pytest.raises(ValueError):
        write_trajectory_csvs(report, tmp_path, plant.n_x, plant.n_u)


def test_report_dict(structured_report):
    doc = structured_report.to_dict()
    assert doc['runs'] == 5000
    assert doc['bound_violations'] == 0
    assert doc['config']['seed'] == 2024
