"""
Run Invariant Suite

Re-checks the structural identities of the proposed algorithm against a
logged run. Every check yields one InvariantVerdict with the worst
violation found and the round it occurred in; checks that do not apply
to the logged algorithm or configuration report "n/a".
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .datagen import BatchSchedule
from .errors import MissingSnapshotsError
from .fedalgo import CompactState, ProposedOptimizer, ServerState, compact_round
from .objectives import CompositeObjective, pgd_step
from .prox import prox

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "n/a"

CORRECTION_SUM_TOL = 1e-12
EQUIVALENCE_TOL = 1e-9
SERVER_IDENTITY_TOL = 1e-12
PGD_COLLAPSE_TOL = 1e-12
DESCENT_TOL = 1e-9
BOUND_TOL = 1e-12

# Ω^{r+1} ≤ Ω^r + 56·L²η̃³B_g²/η_g² − 0.3·η̃‖G‖² (56 = 2.8·20)
DESCENT_DRIFT_CONSTANT = 2.8 * 20
DESCENT_PROGRESS = 0.3


@dataclass
class InvariantVerdict:
    name: str
    status: str
    max_violation: float = 0.0
    round: Optional[int] = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != FAIL


class _Worst:
    """Tracks the largest excess of a measured error over its tolerance."""

    def __init__(self):
        self.violation = 0.0
        self.excess = 0.0
        self.round: Optional[int] = None

    def update(self, r: int, error: float, tol: float) -> None:
        excess = error - tol if math.isfinite(error) else math.inf
        if excess > self.excess or (excess == math.inf and self.round is None):
            self.excess = excess
            self.round = r
        if not math.isfinite(error) or error > self.violation:
            self.violation = error

    def verdict(self, name: str, detail: str = "") -> InvariantVerdict:
        status = FAIL if self.round is not None else PASS
        return InvariantVerdict(name, status, float(self.violation), self.round, detail)


def _norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v))


def _schedule_of(snapshot, hp) -> BatchSchedule:
    n = snapshot.corrections.shape[0]
    if snapshot.batches is None:
        return BatchSchedule(snapshot.round_index, [[None] * hp.tau for _ in range(n)])
    return BatchSchedule(snapshot.round_index,
                         [[np.asarray(snapshot.batches[i, t]) for t in range(hp.tau)] for i in range(n)])


def check_correction_sum(log, objective) -> InvariantVerdict:
    """(1/n)Σ_i c_i^r stays at rounding level for every round."""
    hp = log.hp
    worst = _Worst()
    for snap in log.snapshots:
        for r, corrections, x_bar in ((snap.round_index, snap.corrections, snap.x_bar),
                                      (snap.round_index + 1, snap.corrections_next, snap.x_bar_next)):
            mean = corrections.sum(axis=0) / corrections.shape[0]
            scale = 1.0 + max(_norm(c) for c in corrections) + (_norm(snap.p_x) + _norm(x_bar)) / hp.eta_tilde
            worst.update(r, _norm(mean), CORRECTION_SUM_TOL * scale)
    return worst.verdict("correction_sum")


def check_compact_equivalence(log, objective: CompositeObjective) -> InvariantVerdict:
    """Replay every round with the stacked recursion and compare iterates."""
    hp = log.hp
    n, d = log.snapshots[0].corrections.shape
    worst = _Worst()
    prev_sums = np.zeros((n, d))
    for k, snap in enumerate(log.snapshots):
        if k > 0 and log.snapshots[k - 1].round_index == snap.round_index - 1:
            prev_sums = log.snapshots[k - 1].grads.sum(axis=1)
        elif snap.round_index != 1:
            continue
        server = ServerState(snap.x_bar, snap.p_x, hp.eta_tilde)
        state, new_server = compact_round(CompactState(prev_sums), server, hp, objective,
                                          _schedule_of(snap, hp), snap.round_index)
        compact_z = np.transpose(state.z, (1, 0, 2))
        compact_zhat = np.transpose(state.zhat, (1, 0, 2))
        scale = 1.0 + _norm(snap.x_bar_next) + float(np.max(np.abs(snap.zhat)))
        error = max(_norm(new_server.x_bar - snap.x_bar_next),
                    float(np.max(np.abs(compact_zhat - snap.zhat))),
                    float(np.max(np.abs(compact_z - snap.z))))
        worst.update(snap.round_index, error, EQUIVALENCE_TOL * scale)
    return worst.verdict("compact_equivalence")


def check_server_identity(log, objective: CompositeObjective) -> InvariantVerdict:
    """
    p_x^{r+1} = P_η̃(p_x^r − η̃·v^r), v^r the mean batch gradient over clients
    and steps, recomputed from the logged local iterates and batches.
    """
    hp = log.hp
    problem = objective.problem
    worst = _Worst()
    for snap in log.snapshots:
        n = snap.corrections.shape[0]
        schedule = _schedule_of(snap, hp)
        total = np.zeros(problem.dim)
        for i in range(n):
            for t in range(hp.tau):
                batch = schedule.get(i, t)
                z = snap.z[i, t]
                total = total + (problem.loss_grad(i, z) if batch is None else problem.minibatch_grad(i, z, batch))
        v = total / (n * hp.tau)
        expected = prox(objective.regularizer, hp.eta_tilde, snap.p_x - hp.eta_tilde * v)
        spread = float(np.max([_norm(snap.zhat[i, -1] - snap.p_x) for i in range(n)]))
        scale = 1.0 + _norm(snap.p_x) + hp.eta_tilde * _norm(v) + hp.eta_g * spread
        worst.update(snap.round_index, _norm(expected - snap.p_x_next), SERVER_IDENTITY_TOL * scale)
    return worst.verdict("server_identity")


def check_pgd_collapse(log, objective: CompositeObjective) -> InvariantVerdict:
    """With one full-gradient local step the global model follows centralized PGD."""
    hp = log.hp
    if hp.tau != 1 or not hp.full_gradient:
        return InvariantVerdict("pgd_collapse", NOT_APPLICABLE, detail="needs tau=1 with full gradients")
    worst = _Worst()
    for snap in log.snapshots:
        expected = pgd_step(objective, snap.p_x, hp.eta_tilde)
        local = float(np.max([_norm(snap.grads[i, 0] + snap.corrections[i])
                              for i in range(snap.corrections.shape[0])]))
        scale = 1.0 + hp.eta_g * (_norm(snap.p_x) + hp.eta * local)
        worst.update(snap.round_index, _norm(expected - snap.p_x_next), PGD_COLLAPSE_TOL * scale)
    return worst.verdict("pgd_collapse")


def check_omega_descent(log, objective: CompositeObjective) -> InvariantVerdict:
    name = "omega_descent"
    hp = log.hp
    if not hp.full_gradient:
        return InvariantVerdict(name, NOT_APPLICABLE, detail="stochastic gradients")
    if log.step_rule_violations:
        return InvariantVerdict(name, NOT_APPLICABLE, detail="step rule not satisfied")
    if log.subgradient_bound is None or log.fstar is None:
        return InvariantVerdict(name, NOT_APPLICABLE, detail="no B_g or F* reference")
    L, b_g = log.smoothness, log.subgradient_bound
    slack = DESCENT_DRIFT_CONSTANT * L ** 2 * hp.eta_tilde ** 3 * b_g ** 2 / hp.eta_g ** 2
    worst = _Worst()
    checked = 0
    for cur, nxt in zip(log.metrics, log.metrics[1:]):
        if nxt.round != cur.round + 1 or not (math.isfinite(cur.omega) and math.isfinite(nxt.omega)):
            continue
        rhs = cur.omega + slack - DESCENT_PROGRESS * hp.eta_tilde * cur.grad_map_norm ** 2
        worst.update(cur.round, nxt.omega - rhs, DESCENT_TOL * (1.0 + abs(cur.omega)))
        checked += 1
    if checked == 0:
        return InvariantVerdict(name, NOT_APPLICABLE, detail="no consecutive metric rows")
    return worst.verdict(name, f"{checked} rounds checked")


def check_drift_bound(log, objective: CompositeObjective) -> InvariantVerdict:
    name = "drift_bound"
    if log.step_rule_violations:
        return InvariantVerdict(name, NOT_APPLICABLE, detail="step rule not satisfied")
    rows = [m for m in log.metrics if m.round <= log.hp.rounds and math.isfinite(m.drift_bound)]
    if not rows:
        return InvariantVerdict(name, NOT_APPLICABLE, detail="no drift bound logged")
    worst = _Worst()
    for m in rows:
        worst.update(m.round, m.drift - m.drift_bound, BOUND_TOL * (1.0 + m.drift_bound))
    return worst.verdict(name)


def check_comm_accounting(log, objective: CompositeObjective) -> InvariantVerdict:
    n, d = objective.n_clients, objective.dim
    expected = 2 * n * d + (n if log.algorithm == "fastfedda" else 0)
    worst = _Worst()
    for m in log.metrics:
        want = expected if m.round <= log.hp.rounds else 0
        worst.update(m.round, float(abs(m.comm_scalars - want)), 0.0)
    return worst.verdict("comm_accounting", f"{expected} scalars per round")


def check_metric_consistency(log, objective: CompositeObjective) -> InvariantVerdict:
    worst = _Worst()
    if not log.metrics:
        return InvariantVerdict("metric_consistency", FAIL, math.inf, None, "no metric rows")
    first = log.metrics[0]
    worst.update(first.round, abs(first.optimality - 1.0), 0.0)
    g1 = first.grad_map_norm
    for m in log.metrics[1:]:
        expected = m.grad_map_norm / g1 if g1 > 0 else 0.0
        worst.update(m.round, abs(m.optimality - expected), 1e-12 * (1.0 + expected))
    return worst.verdict("metric_consistency")


PROPOSED_CHECKS: List[Callable] = [check_correction_sum, check_compact_equivalence, check_server_identity,
                                   check_pgd_collapse, check_omega_descent, check_drift_bound]
GENERAL_CHECKS: List[Callable] = [check_comm_accounting, check_metric_consistency]


def _check_name(check: Callable) -> str:
    return check.__name__[len("check_"):]


def invariant_suite(log, objective: CompositeObjective) -> List[InvariantVerdict]:
    """
    Run every invariant check against a logged run.

    Raises:
        MissingSnapshotsError: the run was recorded without snapshots
    """
    if log.snapshots is None:
        raise MissingSnapshotsError("invariant checks need per-round snapshots; re-run with --snapshots")
    verdicts = []
    proposed = log.algorithm == ProposedOptimizer.name and len(log.snapshots) > 0
    for check in PROPOSED_CHECKS:
        if proposed:
            verdicts.append(check(log, objective))
        else:
            verdicts.append(InvariantVerdict(_check_name(check), NOT_APPLICABLE,
                                             detail=f"not defined for {log.algorithm}"))
    verdicts.extend(check(log, objective) for check in GENERAL_CHECKS)
    for verdict in verdicts:
        if verdict.status == FAIL:
            logger.error("Invariant %s failed at round %s (violation %.3e)", verdict.name, verdict.round,
                         verdict.max_violation)
    return verdicts
