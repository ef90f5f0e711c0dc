import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from fl_simulator.errors import InvalidArgumentError, UnsupportedRegularizerError
from fl_simulator.prox import (Regularizer, prox, prox_blocks, prox_objective_residual, regularizer_value,
                               subgradient_bound)


def test_l1_prox_soft_thresholds():
    reg = Regularizer.l1(0.5)
    w = np.array([3.0, -0.2, 0.0, -2.0, 1.0])
    # threshold θ·ϑ = 2
    np.testing.assert_array_equal(prox(reg, 4.0, w), [1.0, 0.0, 0.0, -0.0, 0.0])


def test_l1_prox_matches_scalar_minimizer():
    reg = Regularizer.l1(0.3)
    rng = np.random.default_rng(1)
    theta = 1.7
    for value in rng.normal(0.0, 2.0, size=20):
        res = minimize_scalar(lambda u: theta * 0.3 * abs(u) + 0.5 * (value - u) ** 2,
                              bounds=(-10, 10), method="bounded", options={"xatol": 1e-10})
        assert prox(reg, theta, np.array([value]))[0] == pytest.approx(res.x, abs=1e-7)


def test_zero_prox_is_identity_and_box_prox_clamps():
    w = np.array([-3.0, 0.5, 4.0])
    np.testing.assert_array_equal(prox(Regularizer.zero(), 2.0, w), w)
    box = Regularizer.box([-1.0, -1.0, -1.0], [1.0, 1.0, 2.0])
    np.testing.assert_array_equal(prox(box, 123.0, w), [-1.0, 0.5, 2.0])


def test_prox_rejects_bad_threshold_and_non_finite_input():
    reg = Regularizer.l1(0.1)
    with pytest.raises(InvalidArgumentError):
        prox(reg, 0.0, np.ones(3))
    with pytest.raises(InvalidArgumentError):
        prox(reg, -1.0, np.ones(3))
    with pytest.raises(InvalidArgumentError):
        prox(reg, 1.0, np.array([1.0, np.nan]))


def test_prox_blocks_is_rowwise_prox():
    reg = Regularizer.l1(0.2)
    W = np.random.default_rng(3).normal(size=(5, 6))
    stacked = prox_blocks(reg, 1.5, W)
    for i in range(5):
        np.testing.assert_array_equal(stacked[i], prox(reg, 1.5, W[i]))
    with pytest.raises(InvalidArgumentError):
        prox_blocks(reg, 1.5, W[0])


def test_prox_objective_residual_vanishes_only_at_prox():
    reg = Regularizer.l1(0.4)
    w = np.array([2.0, -0.1, 0.7])
    p = prox(reg, 1.0, w)
    assert prox_objective_residual(reg, 1.0, w, p) == 0.0
    assert prox_objective_residual(reg, 1.0, w, p + 0.01) > 0.0
    box = Regularizer.box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    assert prox_objective_residual(box, 1.0, w, np.array([5.0, 0.0, 0.0])) == float("inf")


def test_subgradient_bounds():
    assert subgradient_bound(Regularizer.zero(), 10) == 0.0
    assert subgradient_bound(Regularizer.l1(0.003), 20) == pytest.approx(0.003 * np.sqrt(20))
    with pytest.raises(UnsupportedRegularizerError):
        subgradient_bound(Regularizer.box([0.0], [1.0]), 1)


def test_regularizer_values():
    x = np.array([1.0, -2.0])
    assert regularizer_value(Regularizer.l1(0.5), x) == pytest.approx(1.5)
    box = Regularizer.box([-1.0, -1.0], [1.0, 1.0])
    assert regularizer_value(box, np.array([0.5, 0.5])) == 0.0
    assert regularizer_value(box, x) == float("inf")


def test_invalid_regularizers():
    with pytest.raises(InvalidArgumentError):
        Regularizer.l1(-0.1)
    with pytest.raises(InvalidArgumentError):
        Regularizer.box([1.0], [0.0])


def _l1_prox_objective(strength, theta, w, u):
    return theta * strength * np.abs(u) + 0.5 * (w - u) ** 2


@pytest.mark.parametrize("reg", [
    Regularizer.zero(),
    Regularizer.l1(0.7),
    Regularizer.box([-0.5, -1.0, 0.0, -2.0], [0.5, 1.0, 3.0, 0.0]),
])
def test_prox_is_nonexpansive(reg):
    rng = np.random.default_rng(5)
    for _ in range(500):
        a, b = rng.normal(0.0, 3.0, size=(2, 4))
        theta = rng.uniform(0.01, 10.0)
        gap = np.linalg.norm(prox(reg, theta, a) - prox(reg, theta, b))
        assert gap <= np.linalg.norm(a - b) + 1e-12


def test_l1_prox_beats_grid_search_in_one_dimension():
    grid = np.linspace(-2.0, 2.0, 40001)
    rng = np.random.default_rng(8)
    for _ in range(25):
        strength, theta, w = rng.uniform(0.05, 1.0), rng.uniform(0.1, 2.0), rng.uniform(-2.0, 2.0)
        reg = Regularizer.l1(strength)
        p = prox(reg, theta, np.array([w]))[0]
        grid_values = _l1_prox_objective(strength, theta, w, grid)
        assert _l1_prox_objective(strength, theta, w, p) <= grid_values.min() + 1e-12
        best = grid[np.argmin(grid_values)]
        assert prox_objective_residual(reg, theta, np.array([w]), np.array([best])) <= 1e-8


def test_l1_prox_beats_grid_search_in_two_dimensions():
    axis = np.linspace(-2.0, 2.0, 401)
    u1, u2 = np.meshgrid(axis, axis, indexing="ij")
    rng = np.random.default_rng(9)
    for _ in range(10):
        strength, theta = rng.uniform(0.05, 1.0), rng.uniform(0.1, 2.0)
        w = rng.uniform(-2.0, 2.0, size=2)
        p = prox(Regularizer.l1(strength), theta, w)
        grid_values = (_l1_prox_objective(strength, theta, w[0], u1)
                       + _l1_prox_objective(strength, theta, w[1], u2))
        at_prox = _l1_prox_objective(strength, theta, w, p).sum()
        assert at_prox <= grid_values.min() + 1e-12


def test_residual_of_unshrunk_point_matches_grid_gap():
    reg = Regularizer.l1(0.5)
    w = np.array([1.2])
    assert prox_objective_residual(reg, 1.0, w, np.array([0.7])) == pytest.approx(0.0, abs=1e-12)
    grid = np.linspace(-2.0, 2.0, 40001)
    grid_gap = _l1_prox_objective(0.5, 1.0, 1.2, 1.2) - _l1_prox_objective(0.5, 1.0, 1.2, grid).min()
    residual = prox_objective_residual(reg, 1.0, w, w)
    assert residual == pytest.approx(grid_gap, abs=1e-12)
    assert residual == pytest.approx(0.125, abs=1e-12)


@pytest.mark.parametrize("theta", [1e-3, 0.5, 1.0, 40.0, 1e3])
def test_l1_prox_fixed_points(theta):
    reg = Regularizer.l1(0.3)
    np.testing.assert_array_equal(prox(reg, theta, np.zeros(5)), 0.0)
    # s ∈ ∂g(x★) gives prox(x★ + θs) = x★
    x_star = np.array([1.5, -2.0, 0.0, 0.0])
    s = 0.3 * np.array([1.0, -1.0, 0.4, -1.0])
    np.testing.assert_allclose(prox(reg, theta, x_star + theta * s), x_star, atol=1e-12 * max(theta, 1.0))
