"""
Federated Composite Optimizers

The decoupled-prox algorithm with client-drift correction, in its per-client
form and in the stacked (compact) form used as a reference, plus the FedMid,
FedDA and Fast-FedDA baselines and a centralized PGD reference.

Proposed algorithm, one round r:
- every client starts from p_x = P_η̃(x̄^r) and runs τ corrected local steps
  on its pre-proximal model ẑ, querying gradients at z = P_{(t+1)η}(ẑ)
- clients upload ẑ_τ only; the server moves x̄ toward their average
- each client replaces its own average gradient in the correction c_i with
  the global one recovered from the server update

Baseline recursions are reconstructions from their one-line descriptions and
are labelled as such in reports.
"""

import logging
import math
import warnings
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .datagen import BatchSampler, BatchSchedule
from .errors import DivergenceError, InvalidArgumentError, ScheduleMismatchError
from .objectives import CompositeObjective, FederatedProblem, pgd_step
from .prox import Regularizer, prox, prox_blocks

logger = logging.getLogger(__name__)

# Step rule under which the convergence guarantees hold
STEP_RULE_ETA_TILDE_FACTOR = 10.0
STEP_RULE_MIN_SERVER_STEP = 1.5

FASTFEDDA_WEIGHTINGS = ("linear", "uniform")
FASTFEDDA_DECAYS = ("sqrt", "none")


class StepRuleWarning(UserWarning):
    """Step sizes outside the range covered by the convergence guarantees."""


@dataclass(frozen=True)
class HyperParams:
    """Step sizes and loop lengths; η̃ = η·η_g·τ is derived."""
    eta: float
    eta_g: float
    tau: int
    rounds: int
    batch_size: Optional[int] = None
    seed: int = 42

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise InvalidArgumentError(f"local step η must be > 0, got {self.eta}")
        if not (np.isfinite(self.eta_g) and self.eta_g > 0):
            raise InvalidArgumentError(f"server step η_g must be > 0, got {self.eta_g}")
        if self.tau < 1:
            raise InvalidArgumentError(f"τ must be >= 1, got {self.tau}")
        if self.rounds < 0:
            raise InvalidArgumentError(f"rounds must be >= 0, got {self.rounds}")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidArgumentError(f"batch size must be >= 1, got {self.batch_size}")

    @property
    def eta_tilde(self) -> float:
        return self.eta * self.eta_g * self.tau

    @property
    def full_gradient(self) -> bool:
        return self.batch_size is None


def check_step_rule(hp: HyperParams, L: float, n: int) -> List[str]:
    """
    Compare the step sizes with η̃ ≤ 1/(10L) and η_g ≥ max{1.5, √(n/8)}.

    Violations are warned about, never raised: hand-tuned steps outside the
    guaranteed range are legitimate experiments.
    """
    violations = []
    limit = 1.0 / (STEP_RULE_ETA_TILDE_FACTOR * L) if L > 0 else math.inf
    if hp.eta_tilde > limit:
        violations.append(f"η̃={hp.eta_tilde:g} exceeds 1/(10L)={limit:g}")
    min_server = max(STEP_RULE_MIN_SERVER_STEP, math.sqrt(n / 8.0))
    if hp.eta_g < min_server:
        violations.append(f"η_g={hp.eta_g:g} below max(1.5, sqrt(n/8))={min_server:g}")
    for message in violations:
        logger.warning("Step rule violated: %s", message)
        warnings.warn(message, StepRuleWarning, stacklevel=2)
    return violations


@dataclass
class LocalTrace:
    """Per-step record of one client's local round."""
    zhat: np.ndarray    # (τ+1)×d
    z: np.ndarray       # (τ+1)×d
    grads: np.ndarray   # τ×d


@dataclass
class ClientState:
    client_id: int
    zhat: np.ndarray
    z: np.ndarray
    c: np.ndarray
    grad_avg: np.ndarray
    drift: float = 0.0
    trace: Optional[LocalTrace] = None

    @classmethod
    def initial(cls, client_id: int, dim: int) -> "ClientState":
        zeros = np.zeros(dim)
        return cls(client_id, zeros.copy(), zeros.copy(), zeros.copy(), zeros.copy())


def _prox_or_identity(reg: Regularizer, theta: float, w: np.ndarray) -> np.ndarray:
    """P_θ with the convention P_0 = identity (no regularization accumulated yet)."""
    if theta == 0.0:
        return np.array(w, dtype=float)
    return prox(reg, theta, w)


@dataclass
class ServerState:
    """Pre-proximal global model x̄ with its cached prox p_x = P_θ(x̄)."""
    x_bar: np.ndarray
    p_x: np.ndarray
    threshold: float

    @classmethod
    def create(cls, reg: Regularizer, x_bar, threshold: float) -> "ServerState":
        x_bar = np.array(x_bar, dtype=float)
        return cls(x_bar, _prox_or_identity(reg, threshold, x_bar), float(threshold))


@dataclass
class AuxState:
    """Λ_i per client and their mean Λ̄."""
    lambdas: np.ndarray
    mean: np.ndarray

    @property
    def spread(self) -> float:
        """Σ_i ‖Λ_i − Λ̄‖²."""
        return float(np.sum((self.lambdas - self.mean) ** 2))


def aux_state(problem: FederatedProblem, p_x: np.ndarray, prev_grad_avg: np.ndarray,
              hp: HyperParams) -> AuxState:
    """
    Λ_i = η·(τ∇f_i(p_x) + τ·(mean_j ḡ_j − ḡ_i)) from the previous round's
    average batch gradients ḡ (zero before the first round).
    """
    grads = problem.client_grads(p_x)
    n = grads.shape[0]
    prev_mean = prev_grad_avg.sum(axis=0) / n
    lambdas = hp.eta * (hp.tau * grads + hp.tau * (prev_mean - prev_grad_avg))
    return AuxState(lambdas, lambdas.sum(axis=0) / n)


def _batch_grad(problem: FederatedProblem, i: int, z: np.ndarray, batch: Optional[np.ndarray]) -> np.ndarray:
    if batch is None:
        return problem.loss_grad(i, z)
    return problem.minibatch_grad(i, z, batch)


def _ensure_finite(v: np.ndarray, client: Optional[int], round_index: int, step: Optional[int]) -> None:
    if not np.all(np.isfinite(v)):
        raise DivergenceError(client, round_index, step)


def _client_mean(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Average in ascending client order."""
    return np.stack(vectors).sum(axis=0) / len(vectors)


def proposed_local_round(client: ClientState, p_x: np.ndarray, hp: HyperParams,
                         objective: CompositeObjective, schedule: BatchSchedule, r: int,
                         record: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    τ corrected local steps from p_x.

    ẑ_{t+1} = ẑ_t − η(∇f_i(z_t; B_t) + c_i),  z_{t+1} = P_{(t+1)η}(ẑ_{t+1})

    Returns:
        (ẑ_τ, grad_avg) where grad_avg is the mean of the τ batch gradients
    """
    i = client.client_id
    problem, reg = objective.problem, objective.regularizer
    zhat = np.array(p_x, dtype=float)
    z = zhat.copy()
    grad_sum = np.zeros_like(zhat)
    drift = 0.0
    if record:
        zhat_rows, z_rows, grad_rows = [zhat.copy()], [z.copy()], []
    for t in range(hp.tau):
        diff = z - p_x
        drift += float(diff @ diff)
        g = _batch_grad(problem, i, z, schedule.get(i, t))
        zhat = zhat - hp.eta * (g + client.c)
        _ensure_finite(zhat, i, r, t)
        z = prox(reg, (t + 1) * hp.eta, zhat)
        grad_sum = grad_sum + g
        if record:
            zhat_rows.append(zhat.copy())
            z_rows.append(z.copy())
            grad_rows.append(g)
    client.zhat, client.z = zhat, z
    client.grad_avg = grad_sum / hp.tau
    client.drift = drift
    client.trace = LocalTrace(np.stack(zhat_rows), np.stack(z_rows), np.stack(grad_rows)) if record else None
    return zhat, client.grad_avg


def server_update(server: ServerState, avg_zhat: np.ndarray, hp: HyperParams,
                  reg: Regularizer) -> ServerState:
    """x̄^{r+1} = p_x + η_g(avg ẑ − p_x), p_x^{r+1} = P_η̃(x̄^{r+1})."""
    x_bar = server.p_x + hp.eta_g * (np.asarray(avg_zhat, dtype=float) - server.p_x)
    return ServerState.create(reg, x_bar, hp.eta_tilde)


def correction_update(client: ClientState, p_x_prev: np.ndarray, x_bar_new: np.ndarray,
                      hp: HyperParams) -> np.ndarray:
    """c_i^{r+1} = (p_x^r − x̄^{r+1})/(η_g·η·τ) − grad_avg_i."""
    client.c = (p_x_prev - x_bar_new) / hp.eta_tilde - client.grad_avg
    return client.c


@dataclass
class CompactState:
    """Stacked state of the compact form: last round's per-client gradient sums."""
    prev_grad_sums: np.ndarray
    zhat: Optional[np.ndarray] = None   # (τ+1)×n×d of the last round
    z: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, n: int, dim: int) -> "CompactState":
        return cls(np.zeros((n, dim)))


def compact_round(state: CompactState, server: ServerState, hp: HyperParams,
                  objective: CompositeObjective, schedule: BatchSchedule,
                  r: int = 0) -> Tuple[CompactState, ServerState]:
    """
    One round of the stacked recursion.

    Ẑ_{t+1} = Ẑ_t − η(∇F(Z_t) + (1/τ)(1⊗Σ_s∇f̄ − Σ_s∇F)^{r−1})
    Z_{t+1} = blockwise P_{(t+1)η}(Ẑ_{t+1})
    x̄^{r+1} = P_η̃(x̄^r) − η_g·η·Σ_t ∇f̄(Z_t)
    """
    problem, reg = objective.problem, objective.regularizer
    n, d = problem.n_clients, problem.dim
    if schedule.n_clients != n or schedule.tau != hp.tau:
        raise ScheduleMismatchError(
            f"schedule is {schedule.n_clients}×{schedule.tau}, expected {n}×{hp.tau}")
    if state.prev_grad_sums.shape != (n, d):
        raise ScheduleMismatchError(f"gradient log has shape {state.prev_grad_sums.shape}, expected {(n, d)}")
    sums = state.prev_grad_sums
    correction = (sums.sum(axis=0) / n - sums) / hp.tau
    zhat = np.tile(server.p_x, (n, 1))
    z = zhat.copy()
    grad_sums = np.zeros((n, d))
    mean_grad_total = np.zeros(d)
    zhat_rows, z_rows = [zhat.copy()], [z.copy()]
    for t in range(hp.tau):
        grads = np.stack([_batch_grad(problem, i, z[i], schedule.get(i, t)) for i in range(n)])
        zhat = zhat - hp.eta * (grads + correction)
        _ensure_finite(zhat, None, r, t)
        z = prox_blocks(reg, (t + 1) * hp.eta, zhat)
        grad_sums = grad_sums + grads
        mean_grad_total = mean_grad_total + grads.sum(axis=0) / n
        zhat_rows.append(zhat.copy())
        z_rows.append(z.copy())
    x_bar = server.p_x - hp.eta_g * hp.eta * mean_grad_total
    new_state = CompactState(grad_sums, np.stack(zhat_rows), np.stack(z_rows))
    return new_state, ServerState.create(reg, x_bar, hp.eta_tilde)


@dataclass
class RoundSnapshot:
    """Everything the invariant checks need from one round of the proposed algorithm."""
    round_index: int
    x_bar: np.ndarray
    p_x: np.ndarray
    corrections: np.ndarray        # n×d, c^r used during the round
    zhat: np.ndarray               # n×(τ+1)×d
    z: np.ndarray                  # n×(τ+1)×d
    grads: np.ndarray              # n×τ×d
    batches: Optional[np.ndarray]  # n×τ×b, None for full gradients
    grad_avg: np.ndarray           # n×d
    x_bar_next: np.ndarray
    p_x_next: np.ndarray
    corrections_next: np.ndarray


@dataclass
class RoundReport:
    drift: float
    comm_scalars: int


@dataclass
class FastFedDAOptions:
    """Step schedule of the weighted dual-averaging baseline."""
    gamma0: Optional[float] = None
    weighting: str = "linear"
    decay: str = "sqrt"

    def __post_init__(self):
        if self.weighting not in FASTFEDDA_WEIGHTINGS:
            raise InvalidArgumentError(f"weighting must be one of {FASTFEDDA_WEIGHTINGS}")
        if self.decay not in FASTFEDDA_DECAYS:
            raise InvalidArgumentError(f"decay must be one of {FASTFEDDA_DECAYS}")
        if self.gamma0 is not None and self.gamma0 < 0:
            raise InvalidArgumentError(f"gamma0 must be >= 0, got {self.gamma0}")


class FederatedOptimizer:
    """Common driver interface; subclasses implement run_round."""
    name = "base"
    reconstructed = False

    def __init__(self, objective: CompositeObjective, hp: HyperParams, x0=None,
                 executor: Optional[Executor] = None, record: bool = False):
        self.objective = objective
        self.hp = hp
        self.executor = executor
        self.record = record
        self.n = objective.n_clients
        self.dim = objective.dim
        self.sampler = BatchSampler(hp.seed)
        self.snapshot: Optional[RoundSnapshot] = None
        self.x0 = np.zeros(self.dim) if x0 is None else np.array(x0, dtype=float)
        if self.x0.shape != (self.dim,):
            raise InvalidArgumentError(f"initial model has shape {self.x0.shape}, expected ({self.dim},)")
        sizes = objective.problem.client_sizes
        if hp.batch_size is not None and hp.batch_size > min(sizes):
            raise InvalidArgumentError(
                f"batch size {hp.batch_size} exceeds the smallest client shard ({min(sizes)} samples)")

    @property
    def model(self) -> np.ndarray:
        raise NotImplementedError

    def comm_per_round(self) -> int:
        return 2 * self.n * self.dim

    def schedule(self, r: int) -> BatchSchedule:
        return BatchSchedule.build(self.sampler, r, self.objective.problem.client_sizes,
                                   self.hp.tau, self.hp.batch_size)

    def _map_clients(self, fn: Callable[[int], object]) -> list:
        if self.executor is None:
            return [fn(i) for i in range(self.n)]
        # executor.map yields results in submission order
        return list(self.executor.map(fn, range(self.n)))

    def run_round(self, r: int) -> RoundReport:
        raise NotImplementedError


class ProposedOptimizer(FederatedOptimizer):
    name = "proposed"

    def __init__(self, objective, hp, x0=None, executor=None, record=False):
        super().__init__(objective, hp, x0, executor, record)
        self.server = ServerState.create(objective.regularizer, self.x0, hp.eta_tilde)
        self.clients = [ClientState.initial(i, self.dim) for i in range(self.n)]

    @property
    def model(self) -> np.ndarray:
        return self.server.p_x

    @property
    def grad_avgs(self) -> np.ndarray:
        return np.stack([c.grad_avg for c in self.clients])

    @property
    def corrections(self) -> np.ndarray:
        return np.stack([c.c for c in self.clients])

    def aux(self) -> AuxState:
        return aux_state(self.objective.problem, self.server.p_x, self.grad_avgs, self.hp)

    def run_round(self, r: int) -> RoundReport:
        schedule = self.schedule(r)
        server = self.server
        p_x = server.p_x
        corrections = self.corrections if self.record else None
        results = self._map_clients(
            lambda i: proposed_local_round(self.clients[i], p_x, self.hp, self.objective,
                                           schedule, r, self.record))
        new_server = server_update(server, _client_mean([zhat for zhat, _ in results]),
                                   self.hp, self.objective.regularizer)
        for client in self.clients:
            correction_update(client, p_x, new_server.x_bar, self.hp)
        self.server = new_server
        if self.record:
            self.snapshot = self._snapshot(r, server, corrections, schedule)
        return RoundReport(sum(c.drift for c in self.clients), self.comm_per_round())

    def _snapshot(self, r: int, server: ServerState, corrections: np.ndarray,
                  schedule: BatchSchedule) -> RoundSnapshot:
        batches = None
        if self.hp.batch_size is not None:
            batches = np.array([[schedule.get(i, t) for t in range(self.hp.tau)] for i in range(self.n)])
        return RoundSnapshot(
            round_index=r,
            x_bar=server.x_bar.copy(),
            p_x=server.p_x.copy(),
            corrections=corrections,
            zhat=np.stack([c.trace.zhat for c in self.clients]),
            z=np.stack([c.trace.z for c in self.clients]),
            grads=np.stack([c.trace.grads for c in self.clients]),
            batches=batches,
            grad_avg=self.grad_avgs,
            x_bar_next=self.server.x_bar.copy(),
            p_x_next=self.server.p_x.copy(),
            corrections_next=self.corrections,
        )


def fedmid_round(states: List[ClientState], x_server: np.ndarray, hp: HyperParams,
                 objective: CompositeObjective, schedule: BatchSchedule, r: int,
                 map_clients: Optional[Callable] = None) -> np.ndarray:
    """
    Federated mirror descent: local proximal SGD, primal averaging.

    z_{t+1} = P_η(z_t − η∇f_i(z_t; B_t)) from z_0 = x;  x ← x + η_g(avg z_τ − x)
    """
    problem, reg = objective.problem, objective.regularizer

    def local(i: int) -> np.ndarray:
        z = np.array(x_server, dtype=float)
        drift = 0.0
        for t in range(hp.tau):
            diff = z - x_server
            drift += float(diff @ diff)
            g = _batch_grad(problem, i, z, schedule.get(i, t))
            z = z - hp.eta * g
            _ensure_finite(z, i, r, t)
            z = prox(reg, hp.eta, z)
        states[i].z = z
        states[i].drift = drift
        return z

    outputs = map_clients(local) if map_clients else [local(i) for i in range(len(states))]
    return x_server + hp.eta_g * (_client_mean(outputs) - x_server)


class FedMidOptimizer(FederatedOptimizer):
    name = "fedmid"
    reconstructed = True

    def __init__(self, objective, hp, x0=None, executor=None, record=False):
        super().__init__(objective, hp, x0, executor, record)
        self.x = self.x0.copy()
        self.clients = [ClientState.initial(i, self.dim) for i in range(self.n)]

    @property
    def model(self) -> np.ndarray:
        return self.x

    def run_round(self, r: int) -> RoundReport:
        self.x = fedmid_round(self.clients, self.x, self.hp, self.objective, self.schedule(r), r,
                              self._map_clients)
        return RoundReport(sum(c.drift for c in self.clients), self.comm_per_round())


@dataclass
class DualServerState:
    """Dual global model x̄ and the regularization weight θ accumulated so far."""
    x_bar: np.ndarray
    theta: float = 0.0


def _dual_averaging_round(states: List[ClientState], server: DualServerState, steps: Sequence[float],
                          hp: HyperParams, objective: CompositeObjective, schedule: BatchSchedule,
                          r: int, map_clients: Optional[Callable] = None) -> Tuple[DualServerState, float]:
    """
    Shared local loop of the dual-averaging baselines.

    Clients start from the dual model, query gradients at z_t = P_{θ+Σa}(u_t),
    accumulate u_{t+1} = u_t − a_t·∇f_i(z_t; B_t) and upload (u_τ, Σa).
    """
    problem, reg = objective.problem, objective.regularizer
    start = _prox_or_identity(reg, server.theta, server.x_bar)

    def local(i: int) -> Tuple[np.ndarray, float]:
        u = server.x_bar.copy()
        acc = 0.0
        drift = 0.0
        for t in range(hp.tau):
            z = _prox_or_identity(reg, server.theta + acc, u)
            diff = z - start
            drift += float(diff @ diff)
            g = _batch_grad(problem, i, z, schedule.get(i, t))
            u = u - steps[t] * g
            _ensure_finite(u, i, r, t)
            acc += steps[t]
        states[i].zhat = u
        states[i].drift = drift
        return u, acc

    outputs = map_clients(local) if map_clients else [local(i) for i in range(len(states))]
    avg_u = _client_mean([u for u, _ in outputs])
    avg_acc = sum(acc for _, acc in outputs) / len(outputs)
    x_bar = server.x_bar + hp.eta_g * (avg_u - server.x_bar)
    return DualServerState(x_bar, server.theta + hp.eta_g * avg_acc), avg_acc


def fedda_round(states: List[ClientState], server: DualServerState, hp: HyperParams,
                objective: CompositeObjective, schedule: BatchSchedule, r: int,
                map_clients: Optional[Callable] = None) -> DualServerState:
    """Federated dual averaging with constant local step η; θ grows by η̃ per round."""
    new_server, _ = _dual_averaging_round(states, server, [hp.eta] * hp.tau, hp, objective,
                                          schedule, r, map_clients)
    return new_server


def fastfedda_steps(options: FastFedDAOptions, hp: HyperParams, r: int) -> List[float]:
    """
    Dual weights a_k for the global steps k = (r−1)τ .. rτ−1.

    a_k = γ_k·w_k / mean(w_0..w_k) with w_k = k+1 (linear) or 1 (uniform) and
    γ_k = γ0/√(k+1) (sqrt) or γ0 (none). Uniform weights without decay give
    a_k = γ0, the FedDA schedule.
    """
    gamma0 = hp.eta if options.gamma0 is None else options.gamma0
    steps = []
    for t in range(hp.tau):
        k = (r - 1) * hp.tau + t
        gamma = gamma0 / math.sqrt(k + 1) if options.decay == "sqrt" else gamma0
        if options.weighting == "linear":
            weight = gamma * (k + 1) / ((k + 2) / 2.0)
        else:
            weight = gamma
        steps.append(weight)
    return steps


def fastfedda_round(states: List[ClientState], server: DualServerState, hp: HyperParams,
                    objective: CompositeObjective, schedule: BatchSchedule, r: int,
                    options: Optional[FastFedDAOptions] = None,
                    map_clients: Optional[Callable] = None) -> DualServerState:
    """Weighted dual averaging with decaying steps; clients also upload their weight sum."""
    options = options or FastFedDAOptions()
    new_server, _ = _dual_averaging_round(states, server, fastfedda_steps(options, hp, r), hp,
                                          objective, schedule, r, map_clients)
    return new_server


class FedDAOptimizer(FederatedOptimizer):
    name = "fedda"
    reconstructed = True

    def __init__(self, objective, hp, x0=None, executor=None, record=False):
        super().__init__(objective, hp, x0, executor, record)
        self.server = DualServerState(self.x0.copy())
        self.clients = [ClientState.initial(i, self.dim) for i in range(self.n)]

    @property
    def model(self) -> np.ndarray:
        return _prox_or_identity(self.objective.regularizer, self.server.theta, self.server.x_bar)

    def run_round(self, r: int) -> RoundReport:
        self.server = fedda_round(self.clients, self.server, self.hp, self.objective,
                                  self.schedule(r), r, self._map_clients)
        return RoundReport(sum(c.drift for c in self.clients), self.comm_per_round())


class FastFedDAOptimizer(FedDAOptimizer):
    name = "fastfedda"

    def __init__(self, objective, hp, x0=None, executor=None, record=False,
                 options: Optional[FastFedDAOptions] = None):
        super().__init__(objective, hp, x0, executor, record)
        self.options = options or FastFedDAOptions()

    def comm_per_round(self) -> int:
        # one extra scalar per client: the accumulated dual weight
        return 2 * self.n * self.dim + self.n

    def run_round(self, r: int) -> RoundReport:
        self.server = fastfedda_round(self.clients, self.server, self.hp, self.objective,
                                      self.schedule(r), r, self.options, self._map_clients)
        return RoundReport(sum(c.drift for c in self.clients), self.comm_per_round())


class CentralizedPGD(FederatedOptimizer):
    """One full-gradient PGD step with η̃ per round: clients send ∇f_i, receive the model."""
    name = "pgd"

    def __init__(self, objective, hp, x0=None, executor=None, record=False):
        super().__init__(objective, hp, x0, executor, record)
        self.x = self.x0.copy()

    @property
    def model(self) -> np.ndarray:
        return self.x

    def run_round(self, r: int) -> RoundReport:
        self.x = pgd_step(self.objective, self.x, self.hp.eta_tilde)
        _ensure_finite(self.x, None, r, None)
        return RoundReport(0.0, self.comm_per_round())


OPTIMIZERS: Dict[str, type] = {
    cls.name: cls
    for cls in (ProposedOptimizer, FedMidOptimizer, FedDAOptimizer, FastFedDAOptimizer, CentralizedPGD)
}


def make_optimizer(kind: str, objective: CompositeObjective, hp: HyperParams, x0=None,
                   executor: Optional[Executor] = None, record: bool = False,
                   fastfedda: Optional[FastFedDAOptions] = None) -> FederatedOptimizer:
    """Instantiate an optimizer by its CLI name."""
    if kind not in OPTIMIZERS:
        raise InvalidArgumentError(f"unknown algorithm '{kind}' (choose from {', '.join(OPTIMIZERS)})")
    if kind == FastFedDAOptimizer.name:
        return FastFedDAOptimizer(objective, hp, x0, executor, record, options=fastfedda)
    return OPTIMIZERS[kind](objective, hp, x0, executor, record)
