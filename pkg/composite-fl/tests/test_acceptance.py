"""Long runs: exact convergence against drift plateaus, on hand-built problems and the named presets."""

import dataclasses

import numpy as np
import pytest

from fl_simulator.fedalgo import FedMidOptimizer, ProposedOptimizer
from fl_simulator.harness import run_experiment
from fl_simulator.objectives import CompositeObjective, gradient_mapping
from fl_simulator.presets import get_preset
from fl_simulator.prox import Regularizer

from conftest import make_least_squares, steps_for

pytestmark = pytest.mark.slow


def _optimality_curve(optimizer, objective, eta_tilde, rounds):
    norms = [np.linalg.norm(gradient_mapping(objective, optimizer.model, eta_tilde))]
    for r in range(1, rounds + 1):
        optimizer.run_round(r)
        norms.append(np.linalg.norm(gradient_mapping(objective, optimizer.model, eta_tilde)))
    return np.array(norms) / norms[0]


def _preset_run(preset, algorithm, **changes):
    cfg = get_preset(preset).config_for(algorithm)
    # optimality does not depend on F★
    cfg = cfg.replace(report=dataclasses.replace(cfg.report, fstar_iterations=0), **changes)
    return run_experiment(cfg, write=False)


def _optimality(result):
    return np.array([m.optimality for m in result.metrics])


def _first_round_below(curve, level):
    hits = np.flatnonzero(curve <= level)
    assert hits.size, f"never reached {level:g} (min {curve.min():.3e})"
    return int(hits[0])


@pytest.fixture
def heterogeneous_l1():
    return CompositeObjective(make_least_squares(n=5, d=6, m=80, seed=3, spread=2.0), Regularizer.l1(0.05))


def test_proposed_reaches_exact_optimum(heterogeneous_l1):
    hp = steps_for(heterogeneous_l1.problem, tau=2, fraction=0.5, rounds=1000)
    curve = _optimality_curve(ProposedOptimizer(heterogeneous_l1, hp), heterogeneous_l1, hp.eta_tilde, 1000)
    assert curve.min() < 1e-10


def test_fedmid_stalls_at_client_drift_floor(heterogeneous_l1):
    hp = steps_for(heterogeneous_l1.problem, tau=2, fraction=0.5, rounds=1000)
    curve = _optimality_curve(FedMidOptimizer(heterogeneous_l1, hp), heterogeneous_l1, hp.eta_tilde, 1000)
    assert curve[-100:].min() > 1e-8


def test_full_gradient_preset_ordering():
    proposed = _optimality(_preset_run("fig1-full-grad", "proposed"))
    fedda = _optimality(_preset_run("fig1-full-grad", "fedda"))
    fedmid = _optimality(_preset_run("fig1-full-grad", "fedmid"))
    assert proposed.min() <= 1e-10
    assert fedda[-1] >= 1e3 * proposed[-1]
    assert fedmid[-1] > fedda[-1]


def test_single_local_step_proposed_and_fedda_share_rate():
    proposed = _optimality(_preset_run("fig1-full-grad-tau1", "proposed"))
    fedda = _optimality(_preset_run("fig1-full-grad-tau1", "fedda"))
    assert proposed.min() <= 1e-10 and fedda.min() <= 1e-10
    assert abs(_first_round_below(proposed, 1e-8) - _first_round_below(fedda, 1e-8)) <= 1


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_larger_batches_reach_a_tighter_neighbourhood(seed):
    tails = {}
    for preset in ("fig2-stochastic", "fig2-stochastic-b1"):
        curve = _optimality(_preset_run(preset, "proposed", seed=seed))
        tails[preset] = np.median(curve[-len(curve) // 5:])
    assert tails["fig2-stochastic"] < tails["fig2-stochastic-b1"]


def test_mlp_smoke_loss_decreases_over_windows():
    result = _preset_run("mlp-smoke", "proposed")
    losses = np.array([m.f_value for m in result.metrics])
    windows = losses[: len(losses) // 10 * 10].reshape(-1, 10).mean(axis=1)
    assert np.all(np.diff(windows) <= 0.0)
    assert result.log.accuracy > 0.5
