"""Shared fixtures: small, well-conditioned federated problems."""

import dataclasses
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from fl_simulator.config import DataSpec, ExperimentConfig, OptimizerSpec, ProblemSpec, ReportSpec  # noqa: E402
from fl_simulator.fedalgo import HyperParams  # noqa: E402
from fl_simulator.harness import build_objective  # noqa: E402
from fl_simulator.objectives import (CompositeObjective, LeastSquaresProblem,  # noqa: E402
                                     estimate_smoothness)
from fl_simulator.prox import Regularizer  # noqa: E402


def make_least_squares(n=5, d=4, m=60, seed=7, spread=1.0):
    """Heterogeneous least squares: every client fits its own planted model."""
    rng = np.random.default_rng(seed)
    scale = np.linspace(0.7, 1.3, d)
    features, targets = [], []
    for _ in range(n):
        a = rng.standard_normal((m, d)) * scale
        x_i = spread * rng.standard_normal(d)
        features.append(a)
        targets.append(a @ x_i + 0.1 * rng.standard_normal(m))
    return LeastSquaresProblem(features, targets)


def steps_for(problem, tau, eta_g=2.0, fraction=0.5, rounds=50, batch_size=None, seed=42):
    """HyperParams with η̃ = fraction/L."""
    L = estimate_smoothness(problem)
    eta = fraction / (L * eta_g * tau)
    return HyperParams(eta=eta, eta_g=eta_g, tau=tau, rounds=rounds, batch_size=batch_size, seed=seed)


@pytest.fixture
def ls_problem():
    return make_least_squares()


@pytest.fixture
def ls_zero(ls_problem):
    return CompositeObjective(ls_problem, Regularizer.zero())


@pytest.fixture
def ls_l1(ls_problem):
    return CompositeObjective(ls_problem, Regularizer.l1(0.05))


@pytest.fixture
def unit_config(tmp_path):
    """
    Synthetic least-squares experiment whose steps satisfy the step rule
    (η̃ = 1/(20L), η_g = 2).
    """
    cfg = ExperimentConfig(
        name="unit",
        algorithm="proposed",
        rounds=12,
        output_dir=str(tmp_path / "run"),
        problem=ProblemSpec(kind="least_squares", regularizer="l1", strength=0.01),
        data=DataSpec(alpha=0.0, beta=0.0, clients=4, dim=4, samples_per_client=40),
        optimizer=OptimizerSpec(eta=1e-3, eta_g=2.0, tau=3),
        report=ReportSpec(fstar_iterations=500),
    )
    L = estimate_smoothness(build_objective(cfg).problem)
    optimizer = dataclasses.replace(cfg.optimizer, eta=1.0 / (20.0 * L * 2.0 * 3))
    return cfg.replace(optimizer=optimizer)
