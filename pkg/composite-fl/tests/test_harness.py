import json
import math

import numpy as np
import pandas as pd
import pytest

from fl_simulator.errors import MissingLogError, MissingSnapshotsError
from fl_simulator.fedalgo import HyperParams, ProposedOptimizer
from fl_simulator.harness import (METRIC_COLUMNS, RunLog, build_objective, drift_bound, estimate_batch_variance,
                                  fit_linear_rate, load_run, metric_cadence, omega_value, run_experiment,
                                  theorem_bounds)
from fl_simulator.objectives import CompositeObjective, estimate_smoothness
from fl_simulator.presets import get_preset
from fl_simulator.prox import Regularizer

from conftest import make_least_squares, steps_for


def test_metric_cadence():
    assert metric_cadence(500) == 1
    assert metric_cadence(1000) == 1
    assert metric_cadence(2500) == 3
    assert metric_cadence(2500, requested=7) == 7


def test_zero_rounds_gives_single_initial_row(unit_config):
    result = run_experiment(unit_config.replace(rounds=0))
    assert len(result.metrics) == 1
    row = result.metrics[0]
    assert (row.round, row.optimality, row.drift, row.comm_scalars) == (1, 1.0, 0.0, 0)


def test_outputs_are_written_and_deterministic(unit_config, tmp_path):
    first = run_experiment(unit_config, tmp_path / "a")
    second = run_experiment(unit_config, tmp_path / "b")
    csv_a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert csv_a == (tmp_path / "b" / "metrics.csv").read_bytes()
    frame = pd.read_csv(tmp_path / "a" / "metrics.csv")
    assert list(frame.columns) == METRIC_COLUMNS
    assert len(frame) == unit_config.rounds + 1
    assert frame["optimality"].iloc[0] == 1.0
    assert (frame["wall_ms"] == 0).all()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == unit_config.seed
    assert manifest["algorithm"] == "proposed"
    assert manifest["config"]["optimizer"]["tau"] == 3
    assert manifest["dataset"]["source"] == "synthetic"
    assert manifest["dataset"]["normalize"] is True
    assert manifest["accuracy"] is None
    np.testing.assert_array_equal(first.final_model, second.final_model)


def test_rows_describe_rounds(unit_config):
    result = run_experiment(unit_config, write=False)
    n, d = unit_config.data.clients, unit_config.data.dim
    rounds = [m.round for m in result.metrics]
    assert rounds == list(range(1, unit_config.rounds + 2))
    assert all(m.comm_scalars == 2 * n * d for m in result.metrics[:-1])
    assert result.metrics[-1].comm_scalars == 0 and result.metrics[-1].drift == 0.0
    # first round starts every client at p_x, so its first step adds no drift but later ones do
    assert result.metrics[0].drift > 0.0


def test_threads_do_not_change_metrics(unit_config):
    sequential = run_experiment(unit_config, write=False)
    threaded = run_experiment(unit_config.replace(threads=3), write=False)
    assert [m.csv_row() for m in sequential.metrics] == [m.csv_row() for m in threaded.metrics]


def test_omega_second_term_vanishes_for_one_client():
    objective = CompositeObjective(make_least_squares(n=1), Regularizer.l1(0.05))
    hp = steps_for(objective.problem, tau=2)
    opt = ProposedOptimizer(objective, hp)
    opt.run_round(1)
    value = omega_value(opt.aux(), objective, opt.model, hp, fstar=0.0)
    assert value == pytest.approx(objective.value(opt.model), rel=1e-14)


def test_omega_first_round_uses_client_gradient_spread(ls_l1):
    hp = steps_for(ls_l1.problem, tau=3)
    opt = ProposedOptimizer(ls_l1, hp)
    p_x = opt.model
    grads = ls_l1.problem.client_grads(p_x)
    spread = np.sum((grads - grads.mean(axis=0)) ** 2)
    expected = (ls_l1.value(p_x) - 1.0
                + hp.eta ** 2 * hp.tau ** 2 * spread / (ls_l1.n_clients * hp.eta_tilde))
    assert omega_value(opt.aux(), ls_l1, p_x, hp, fstar=1.0) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(MissingLogError):
        omega_value(None, ls_l1, p_x, hp, fstar=1.0)


def test_batch_variance_is_zero_for_full_batches(ls_problem):
    objective = CompositeObjective(ls_problem, Regularizer.zero())
    x = np.ones(objective.dim)
    assert estimate_batch_variance(objective, x, None, seed=1, round_index=1) == 0.0
    assert estimate_batch_variance(objective, x, 60, seed=1, round_index=1) == 0.0
    small = estimate_batch_variance(objective, x, 5, seed=1, round_index=1)
    large = estimate_batch_variance(objective, x, 40, seed=1, round_index=1)
    assert small > large > 0.0


def test_drift_bound_terms():
    hp = HyperParams(eta=0.1, eta_g=2.0, tau=2, rounds=1)
    assert drift_bound(hp, n=3, b_g=0.0, grad_map_sq=0.0, lambda_spread=0.0, sigma2_batch=0.0) == 0.0
    value = drift_bound(hp, n=3, b_g=1.0, grad_map_sq=2.0, lambda_spread=0.5, sigma2_batch=0.25)
    expected = 5 * 8 * 0.01 * 3 * 4 + 5 * 3 * 8 * 0.01 * 2 + 5 * 2 * 0.5 + 10 * 3 * 4 * 0.01 * 0.25
    assert value == pytest.approx(expected)


def test_fit_linear_rate_recovers_contraction():
    rounds = np.arange(1, 40)
    assert fit_linear_rate(rounds, 0.8 ** rounds) == pytest.approx(0.8)
    assert math.isnan(fit_linear_rate([1], [1.0]))


def test_theorem_bounds_zero_regularizer(unit_config):
    cfg = unit_config.replace(problem=unit_config.problem.__class__(kind="least_squares", regularizer="zero"),
                              rounds=30)
    result = run_experiment(cfg, write=False)
    assert result.bounds is not None and not result.bounds.advisory
    log = result.log
    bounds = theorem_bounds(log, log.smoothness, 0.0, 0.0, mu_grid=[0.1])
    expected = log.metrics[0].omega / (0.3 * cfg.hyper_params().eta_tilde * cfg.rounds)
    assert bounds.sublinear_bound == pytest.approx(expected)
    assert bounds.sublinear_holds
    assert bounds.linear[0]["mu"] == 0.1


def test_snapshots_round_trip_through_disk(unit_config, tmp_path):
    result = run_experiment(unit_config.replace(snapshots=True), tmp_path / "snap")
    log = load_run(tmp_path / "snap")
    assert isinstance(log, RunLog)
    assert len(log.snapshots) == unit_config.rounds
    np.testing.assert_array_equal(log.snapshots[-1].p_x_next, result.log.snapshots[-1].p_x_next)
    assert [m.csv_row() for m in log.metrics] == [m.csv_row() for m in result.metrics]
    assert log.config == result.log.config
    assert log.fstar == result.log.fstar


def test_load_run_without_snapshots_explains_fix(unit_config, tmp_path):
    run_experiment(unit_config, tmp_path / "plain")
    with pytest.raises(MissingSnapshotsError, match="--snapshots"):
        load_run(tmp_path / "plain")


def test_baselines_run_through_harness(unit_config):
    for algorithm in ("fedmid", "fedda", "fastfedda", "pgd"):
        result = run_experiment(unit_config.replace(algorithm=algorithm), write=False)
        assert result.bounds is None
        assert all(math.isnan(m.omega) for m in result.metrics)
        assert len(result.metrics) == unit_config.rounds + 1


def test_smoothness_estimate_feeds_step_rule(unit_config):
    objective = build_objective(unit_config)
    L = estimate_smoothness(objective.problem)
    assert unit_config.hyper_params().eta_tilde == pytest.approx(1.0 / (20.0 * L))


def test_mlp_runs_report_training_accuracy(tmp_path):
    cfg = get_preset("mlp-smoke").config.replace(rounds=3)
    result = run_experiment(cfg, tmp_path / "mlp")
    assert 0.0 <= result.log.accuracy <= 1.0
    manifest = json.loads((tmp_path / "mlp" / "manifest.json").read_text())
    assert manifest["accuracy"] == result.log.accuracy
    assert manifest["dataset"]["normalize"] is False


def test_full_gradient_preset_is_well_scaled():
    objective = build_objective(get_preset("fig1-full-grad").config)
    assert estimate_smoothness(objective.problem) <= 0.25 + 1e-12
    assert objective.n_clients == 30 and objective.dim == 20
