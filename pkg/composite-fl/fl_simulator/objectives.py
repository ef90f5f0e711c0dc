"""
Federated Objectives

Smooth per-client losses f_i, the composite objective F = f + g with
f = (1/n)·Σ f_i, the gradient mapping used as the stationarity metric and a
centralized proximal-gradient oracle for F★ and reference minimizers.

Problems:
- LogisticProblem: binary logistic loss with ±1 labels
- LeastSquaresProblem: (1/2m_i)‖A_i x − y_i‖², the well-conditioned test bed
- MlpProblem: one-hidden-layer tanh network with softmax cross-entropy
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from .errors import ConvergenceError, InvalidArgumentError, StepSizeError
from .prox import Regularizer, prox, regularizer_value

logger = logging.getLogger(__name__)

# Power iteration settings for the smoothness estimate
POWER_ITERATION_TOL = 1e-6
POWER_ITERATION_MAX_ITER = 10_000

# PGD oracle aborts after this many consecutive increases of F
DIVERGENCE_PATIENCE = 10

# Default MLP architecture
DEFAULT_MLP_HIDDEN = 16
DEFAULT_MLP_CLASSES = 4


class FederatedProblem:
    """Base class for a smooth loss split across n clients."""

    def __init__(self, features: Sequence[np.ndarray], labels: Sequence[np.ndarray]):
        if len(features) == 0 or len(features) != len(labels):
            raise InvalidArgumentError("need one label vector per non-empty client shard")
        self.features: List[np.ndarray] = [np.ascontiguousarray(a, dtype=float) for a in features]
        self.labels: List[np.ndarray] = [np.asarray(b) for b in labels]
        widths = {a.shape[1] for a in self.features}
        if len(widths) != 1:
            raise InvalidArgumentError(f"clients disagree on feature dimension: {sorted(widths)}")
        for i, (a, b) in enumerate(zip(self.features, self.labels)):
            if a.shape[0] < 1:
                raise InvalidArgumentError(f"client {i} has no samples")
            if b.shape[0] != a.shape[0]:
                raise InvalidArgumentError(f"client {i}: {a.shape[0]} samples but {b.shape[0]} labels")
        self.input_dim = widths.pop()

    @property
    def n_clients(self) -> int:
        return len(self.features)

    @property
    def client_sizes(self) -> List[int]:
        return [a.shape[0] for a in self.features]

    @property
    def dim(self) -> int:
        """Dimension of the optimization variable."""
        return self.input_dim

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidArgumentError(f"expected a point of dimension {self.dim}, got shape {x.shape}")
        return x

    def _check_client(self, i: int) -> None:
        if not 0 <= i < self.n_clients:
            raise InvalidArgumentError(f"client index {i} out of range [0, {self.n_clients})")

    # Subclasses implement the loss on an arbitrary sample subset.
    def _value(self, a: np.ndarray, b: np.ndarray, x: np.ndarray) -> float:
        raise NotImplementedError

    def _grad(self, a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def loss_value(self, i: int, x) -> float:
        self._check_client(i)
        return self._value(self.features[i], self.labels[i], self._check_point(x))

    def loss_grad(self, i: int, x) -> np.ndarray:
        self._check_client(i)
        return self._grad(self.features[i], self.labels[i], self._check_point(x))

    def minibatch_grad(self, i: int, x, batch) -> np.ndarray:
        """(1/b)·Σ_{l∈batch} ∇f_il(x); identical to loss_grad when the batch is every index in order."""
        self._check_client(i)
        idx = np.asarray(batch, dtype=np.int64)
        if idx.size == 0:
            raise InvalidArgumentError("empty mini-batch")
        if idx.min() < 0 or idx.max() >= self.client_sizes[i]:
            raise InvalidArgumentError(f"batch index out of range for client {i}")
        if idx.size == self.client_sizes[i] and np.array_equal(idx, np.arange(idx.size)):
            return self.loss_grad(i, x)
        return self._grad(self.features[i][idx], self.labels[i][idx], self._check_point(x))

    def full_value(self, x) -> float:
        x = self._check_point(x)
        total = 0.0
        for i in range(self.n_clients):
            total += self._value(self.features[i], self.labels[i], x)
        return total / self.n_clients

    def full_grad(self, x) -> np.ndarray:
        x = self._check_point(x)
        total = np.zeros(self.dim)
        for i in range(self.n_clients):
            total = total + self._grad(self.features[i], self.labels[i], x)
        return total / self.n_clients

    def client_grads(self, x) -> np.ndarray:
        """n×d stack of full local gradients ∇f_i(x)."""
        x = self._check_point(x)
        return np.stack([self._grad(a, b, x) for a, b in zip(self.features, self.labels)])

    def smoothness(self) -> float:
        raise NotImplementedError


def _power_iteration(gram: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration on its Rayleigh quotient."""
    d = gram.shape[0]
    v = np.random.default_rng(0).standard_normal(d)
    v /= np.linalg.norm(v)
    previous = 0.0
    for _ in range(POWER_ITERATION_MAX_ITER):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        estimate = float(v @ gram @ v)
        if abs(estimate - previous) <= POWER_ITERATION_TOL * abs(estimate):
            return estimate
        previous = estimate
    raise ConvergenceError(
        f"power iteration did not reach relative tolerance {POWER_ITERATION_TOL} "
        f"in {POWER_ITERATION_MAX_ITER} iterations")


class LogisticProblem(FederatedProblem):
    """f_i(x) = (1/m_i)·Σ_l ln(1 + exp(−b_il·a_ilᵀx)) with b_il ∈ {−1, +1}."""

    def __init__(self, features, labels):
        super().__init__(features, [np.asarray(b, dtype=float) for b in labels])
        for i, b in enumerate(self.labels):
            if not np.all(np.abs(b) == 1.0):
                raise InvalidArgumentError(f"client {i}: logistic labels must be exactly ±1")

    def _value(self, a, b, x):
        margin = b * (a @ x)
        return float(np.mean(np.logaddexp(0.0, -margin)))

    def _grad(self, a, b, x):
        margin = b * (a @ x)
        # d/dm ln(1+e^{-m}) = -sigmoid(-m); expit is stable for large |m|
        weights = -b * expit(-margin)
        return a.T @ weights / a.shape[0]

    def smoothness(self) -> float:
        """L = max_i λ_max(A_iᵀA_i)/(4·m_i)."""
        return max(_power_iteration(a.T @ a) / (4.0 * a.shape[0]) for a in self.features)


class LeastSquaresProblem(FederatedProblem):
    """f_i(x) = (1/(2m_i))·‖A_i x − y_i‖²."""

    def __init__(self, features, targets):
        super().__init__(features, [np.asarray(y, dtype=float) for y in targets])

    def _value(self, a, y, x):
        residual = a @ x - y
        return 0.5 * float(residual @ residual) / a.shape[0]

    def _grad(self, a, y, x):
        return a.T @ (a @ x - y) / a.shape[0]

    def smoothness(self) -> float:
        return max(_power_iteration(a.T @ a) / a.shape[0] for a in self.features)


class MlpProblem(FederatedProblem):
    """
    Dense network d_in → h (tanh) → classes with mean softmax cross-entropy.

    Parameters are flattened as [W1 (h×d_in), b1 (h), W2 (classes×h), b2 (classes)].
    The loss is non-convex, so L cannot be derived and must be supplied.
    """

    def __init__(self, features, labels, hidden: int = DEFAULT_MLP_HIDDEN,
                 n_classes: int = DEFAULT_MLP_CLASSES, smoothness_override: Optional[float] = None):
        super().__init__(features, [np.asarray(b, dtype=np.int64) for b in labels])
        if hidden < 1 or n_classes < 2:
            raise InvalidArgumentError(f"invalid MLP shape: hidden={hidden}, classes={n_classes}")
        for i, b in enumerate(self.labels):
            if b.min() < 0 or b.max() >= n_classes:
                raise InvalidArgumentError(f"client {i}: labels outside [0, {n_classes})")
        self.hidden = hidden
        self.n_classes = n_classes
        self.smoothness_override = smoothness_override

    @property
    def dim(self) -> int:
        h, k, c = self.hidden, self.input_dim, self.n_classes
        return h * k + h + c * h + c

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        h, k, c = self.hidden, self.input_dim, self.n_classes
        w1 = x[:h * k].reshape(h, k)
        b1 = x[h * k:h * k + h]
        offset = h * k + h
        w2 = x[offset:offset + c * h].reshape(c, h)
        b2 = x[offset + c * h:]
        return w1, b1, w2, b2

    def init_params(self, seed: int, scale: float = 0.1) -> np.ndarray:
        """Seeded small random start; the all-zero point is a saddle of the tanh network."""
        return scale * np.random.default_rng(seed).standard_normal(self.dim)

    def _forward(self, a, x):
        w1, b1, w2, b2 = self.unpack(x)
        hidden = np.tanh(a @ w1.T + b1)
        logits = hidden @ w2.T + b2
        return hidden, logits

    def _value(self, a, labels, x):
        _, logits = self._forward(a, x)
        picked = logits[np.arange(a.shape[0]), labels]
        return float(np.mean(logsumexp(logits, axis=1) - picked))

    def _grad(self, a, labels, x):
        m = a.shape[0]
        _, _, w2, _ = self.unpack(x)
        hidden, logits = self._forward(a, x)
        probs = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        probs[np.arange(m), labels] -= 1.0
        d_logits = probs / m
        g_w2 = d_logits.T @ hidden
        g_b2 = d_logits.sum(axis=0)
        d_pre = (d_logits @ w2) * (1.0 - hidden ** 2)
        g_w1 = d_pre.T @ a
        g_b1 = d_pre.sum(axis=0)
        return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])

    def accuracy(self, x) -> float:
        x = self._check_point(x)
        correct = 0
        total = 0
        for a, labels in zip(self.features, self.labels):
            _, logits = self._forward(a, x)
            correct += int(np.sum(np.argmax(logits, axis=1) == labels))
            total += a.shape[0]
        return correct / total

    def smoothness(self) -> float:
        if self.smoothness_override is None:
            raise InvalidArgumentError("MLP smoothness constant must be supplied as smoothness_override")
        return float(self.smoothness_override)


def estimate_smoothness(problem: FederatedProblem) -> float:
    """Smoothness constant L shared by every client loss."""
    value = problem.smoothness()
    logger.debug("Estimated smoothness L=%.6g for %s", value, type(problem).__name__)
    return value


def gradient_dissimilarity(problem: FederatedProblem, x) -> float:
    """(1/n)·Σ_i ‖∇f_i(x) − ∇f(x)‖², the spread of client gradients at x."""
    grads = problem.client_grads(x)
    mean = grads.sum(axis=0) / grads.shape[0]
    return float(np.mean(np.sum((grads - mean) ** 2, axis=1)))


class CompositeObjective:
    """F(x) = f(x) + g(x)."""

    def __init__(self, problem: FederatedProblem, regularizer: Regularizer):
        self.problem = problem
        self.regularizer = regularizer

    @property
    def dim(self) -> int:
        return self.problem.dim

    @property
    def n_clients(self) -> int:
        return self.problem.n_clients

    def value(self, x) -> float:
        return self.problem.full_value(x) + regularizer_value(self.regularizer, x)

    def smooth_grad(self, x) -> np.ndarray:
        return self.problem.full_grad(x)


def pgd_step(obj: CompositeObjective, x, eta_tilde: float) -> np.ndarray:
    """P_η̃(x − η̃·∇f(x)) with the exact full gradient."""
    x = np.asarray(x, dtype=float)
    return prox(obj.regularizer, eta_tilde, x - eta_tilde * obj.smooth_grad(x))


def gradient_mapping(obj: CompositeObjective, x, eta_tilde: float) -> np.ndarray:
    """
    Gradient mapping G(x) = (x − P_η̃(x − η̃∇f(x)))/η̃.

    G vanishes exactly at the first-order stationary points of F and reduces
    to ∇f(x) when g = 0.
    """
    x = np.asarray(x, dtype=float)
    return (x - pgd_step(obj, x, eta_tilde)) / eta_tilde


def pgd_solve(obj: CompositeObjective, eta_tilde: float, iterations: int,
              tol: float = 0.0, x0=None) -> Tuple[np.ndarray, List[float]]:
    """
    Centralized proximal gradient descent.

    Args:
        obj: Composite objective
        eta_tilde: Step size
        iterations: Maximum number of PGD steps
        tol: Stop once ‖G(x)‖ <= tol (0 runs every iteration)
        x0: Start point, zero by default

    Returns:
        Final iterate and the trace of F values (initial value first)
    """
    if iterations < 0:
        raise InvalidArgumentError(f"iterations must be >= 0, got {iterations}")
    x = np.zeros(obj.dim) if x0 is None else np.asarray(x0, dtype=float).copy()
    trace = [obj.value(x)]
    increases = 0
    for k in range(iterations):
        x_next = pgd_step(obj, x, eta_tilde)
        trace.append(obj.value(x_next))
        if not np.isfinite(trace[-1]):
            raise StepSizeError(f"PGD produced a non-finite objective at step {k + 1} (η̃={eta_tilde:g})")
        increases = increases + 1 if trace[-1] > trace[-2] else 0
        if increases >= DIVERGENCE_PATIENCE:
            raise StepSizeError(
                f"F increased {DIVERGENCE_PATIENCE} consecutive PGD steps at η̃={eta_tilde:g}; reduce the step")
        if tol > 0 and np.linalg.norm(x - x_next) <= tol * eta_tilde:
            x = x_next
            break
        x = x_next
    return x, trace


def fstar_estimate(obj: CompositeObjective, eta_tilde: float, iterations: int) -> float:
    """Reference optimal value F★ from `iterations` PGD steps started at 0."""
    _, trace = pgd_solve(obj, eta_tilde, iterations)
    logger.debug("F* estimate after %d PGD steps: %.17g", iterations, trace[-1])
    return trace[-1]
