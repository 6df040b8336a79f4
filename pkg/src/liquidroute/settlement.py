"""Critical-agent audit and payoff computation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .ledger import DelegationForest, index_actions
from .model import AgentId, DelegationAction, DiffusionState, GraphConfig, TaskId
from .routing import RouteOutcome, RoutePath, route

log = logging.getLogger(__name__)

Scaling = Callable[[float], float]
Multiplier = Callable[[float, float, float], float]


class ChainInvariantError(RuntimeError):
    """Critical agents of one task do not form a single vote chain."""


def identity(x: float) -> float:
    return x


def ordered_multiplier(successor: float, own: float, alpha: float) -> float:
    """+1 when the successor's level is at least ours, else -alpha."""
    return 1.0 if successor >= own else -alpha


def check_scaling(f: Scaling, grid: int = 200) -> None:
    if abs(f(0.0)) > 1e-12:
        raise ValueError("scaling function must satisfy f(0) = 0")
    prev = f(0.0)
    for i in range(1, grid + 1):
        cur = f(i / grid)
        if cur < prev - 1e-12:
            raise ValueError(f"scaling function is not monotone near {i / grid:.3f}")
        prev = cur


@dataclass(frozen=True)
class SettlementParams:
    alpha: float = 100.0
    base_cost: float = 0.0
    scaling: Scaling = identity
    multiplier: Multiplier = ordered_multiplier
    # what settle_round does with a critical set that is not one vote chain:
    # "longest" pays the longest all-critical chain ending at the guru, "raise" propagates
    broken_chain: str = "longest"

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.broken_chain not in ("longest", "raise"):
            raise ValueError("broken_chain must be 'longest' or 'raise'")
        check_scaling(self.scaling)


@dataclass(frozen=True)
class CriticalChain:
    task: TaskId
    agents: tuple[AgentId, ...]
    reports: tuple[float, ...] = ()

    @property
    def guru(self) -> AgentId:
        return self.agents[-1]


@dataclass
class AgentSettlement:
    task_payoff: dict[TaskId, float] = field(default_factory=dict)
    misreport_penalty: float = 0.0
    infeasibility_penalty: float = 0.0

    @property
    def total(self) -> float:
        return sum(self.task_payoff.values()) - self.misreport_penalty - self.infeasibility_penalty


@dataclass
class SettlementReport:
    agents: dict[AgentId, AgentSettlement]
    winner: Optional[RoutePath]
    realized: dict[TaskId, float]
    critical: dict[TaskId, frozenset[AgentId]]
    chains: dict[TaskId, CriticalChain]
    broken: tuple[TaskId, ...] = ()

    @property
    def winner_id(self) -> Optional[str]:
        return None if self.winner is None else self.winner.path_id

    def total(self, agent: AgentId) -> float:
        rec = self.agents.get(agent)
        return 0.0 if rec is None else rec.total

    def totals(self) -> dict[AgentId, float]:
        return {a: r.total for a, r in self.agents.items()}

    def to_json(self) -> dict:
        return {
            "winner": self.winner_id,
            "realized": {str(t): v for t, v in sorted(self.realized.items())},
            "critical": {str(t): sorted(c) for t, c in sorted(self.critical.items())},
            "chains": {str(t): list(c.agents) for t, c in sorted(self.chains.items())},
            "broken_chains": list(self.broken),
            "agents": {
                str(a): {
                    "task_payoff": {str(t): v for t, v in sorted(r.task_payoff.items())},
                    "misreport_penalty": r.misreport_penalty,
                    "infeasibility_penalty": r.infeasibility_penalty,
                    "total": r.total,
                }
                for a, r in sorted(self.agents.items())
            },
        }


# --- critical agents ---------------------------------------------------------


def critical_sets(
    winner: Optional[RoutePath],
    actions: Sequence[DelegationAction],
    config: GraphConfig,
    request: Sequence[TaskId],
) -> dict[TaskId, frozenset[AgentId]]:
    """Counterfactual audit, task by task.

    A pool member is critical when, with its own vote switched to itself
    and everything else unchanged, the re-routed winner runs through it as
    the guru of that task.
    """
    if winner is None:
        return {}
    actions = list(actions)
    where = {(a.agent, a.task): i for i, a in enumerate(actions)}
    out: dict[TaskId, frozenset[AgentId]] = {}
    for seg in winner.segments:
        found = {seg.guru}
        for n in sorted(seg.pool):
            idx = where.get((n, seg.task))
            if idx is None:
                continue
            cf = list(actions)
            cf[idx] = actions[idx].with_vote(n)
            alt = route(request, cf, config).winner
            if alt is not None and any(s.task == seg.task and s.guru == n for s in alt.segments):
                found.add(n)
        out[seg.task] = out.get(seg.task, frozenset()) | frozenset(found)
    return out


def critical_set(winner, actions, config, request) -> set[AgentId]:
    out: set[AgentId] = set()
    for members in critical_sets(winner, actions, config, request).values():
        out |= members
    return out


def order_chain(
    critical: Iterable[AgentId],
    task: TaskId,
    forest: DelegationForest,
    actions: Optional[Mapping[AgentId, DelegationAction]] = None,
) -> CriticalChain:
    """Arrange critical agents along their vote pointers, guru last."""
    crit = set(critical)
    if not crit:
        raise ChainInvariantError(f"task {task}: empty critical set")
    missing = [a for a in crit if a not in forest.guru_of]
    if missing:
        raise ChainInvariantError(f"task {task}: agents {sorted(missing)} reach no guru")
    gurus = {forest.guru_of[a] for a in crit}
    if len(gurus) != 1:
        raise ChainInvariantError(f"task {task}: critical agents split across gurus {sorted(gurus)}")
    longest = max((forest.path_to_guru(a) for a in crit), key=len)
    if set(longest) != crit:
        raise ChainInvariantError(f"task {task}: critical set {sorted(crit)} is not a contiguous vote chain")
    reports: tuple[float, ...] = ()
    if actions is not None:
        reports = tuple(actions[a].reported[task] for a in longest)
    return CriticalChain(task, tuple(longest), reports)


def longest_critical_chain(
    critical: Iterable[AgentId],
    task: TaskId,
    forest: DelegationForest,
    guru: AgentId,
    actions: Optional[Mapping[AgentId, DelegationAction]] = None,
) -> CriticalChain:
    """Longest vote chain into ``guru`` made only of critical agents (smallest ids on ties)."""
    crit = set(critical) | {guru}
    best: list[AgentId] = [guru]
    for a in sorted(crit):
        if forest.guru_of.get(a) != guru:
            continue
        path = forest.path_to_guru(a)
        if set(path) <= crit and (len(path), [-x for x in path]) > (len(best), [-x for x in best]):
            best = path
    reports: tuple[float, ...] = ()
    if actions is not None:
        reports = tuple(actions[a].reported[task] for a in best)
    return CriticalChain(task, tuple(best), reports)


# --- payoffs -------------------------------------------------------------------


def task_payoff(
    chain: CriticalChain,
    base_cost: float = 0.0,
    scaling: Scaling = identity,
    alpha: float = 100.0,
    true_guru_competence: Optional[float] = None,
    multiplier: Multiplier = ordered_multiplier,
) -> dict[AgentId, float]:
    """Marginal payoffs along a critical chain.

    Each agent earns f(own report) - f(predecessor report), scaled by the
    ordering multiplier against its successor.  The guru's successor value
    is its true competence and the guru also collects ``base_cost``.
    """
    reps = list(chain.reports)
    if len(reps) != len(chain.agents):
        raise ValueError("chain reports missing")
    succ = reps[1:] + [reps[-1] if true_guru_competence is None else true_guru_competence]
    out: dict[AgentId, float] = {}
    prev = 0.0
    for i, agent in enumerate(chain.agents):
        m = multiplier(succ[i], reps[i], alpha)
        out[agent] = m * (scaling(reps[i]) - scaling(prev))
        prev = reps[i]
    out[chain.guru] += base_cost
    return out


def _claims_from(diffusion: Optional[DiffusionState], agent: AgentId, senders: Iterable[AgentId], task: TaskId) -> float:
    if diffusion is None:
        return 0.0
    best = 0.0
    for j in senders:
        v = diffusion.observed(agent, j, task)
        if v is not None and v > best:
            best = v
    return best


def misreport_penalty(
    agent: AgentId,
    actions: Iterable[DelegationAction],
    diffusion: Optional[DiffusionState],
    achieved: Mapping[TaskId, float],
    alpha: float,
    config: GraphConfig,
) -> float:
    """alpha times the total unjustified overshoot on auxiliary tasks.

    A claim on task t is justified up to the larger of the agent's own
    level, the best claim on t that a connected neighbor logged to it, and
    (for executed tasks in ``achieved``) the competence actually delivered.
    """
    intrinsic = config.intrinsic(agent)
    total = 0.0
    for act in actions:
        if act.agent != agent:
            continue
        contacts = {j for j in act.declared_neighbors | {act.vote} if config.has_edge(agent, j)}
        for t, claimed in act.reported.items():
            if t == act.task:
                continue
            justified = max(intrinsic[t], _claims_from(diffusion, agent, contacts, t), achieved.get(t, 0.0))
            total += max(0.0, claimed - justified)
    return alpha * total


def infeasibility_penalty(
    agent: AgentId,
    actions: Iterable[DelegationAction],
    config: GraphConfig,
    alpha: float,
    failed_bridges: Iterable[tuple[AgentId, TaskId]] = (),
) -> float:
    """alpha times the agent's auxiliary claims, if any connection it declared is infeasible.

    Infeasible means a declared neighbor that is not a real edge, or a
    failed bridge: the agent was picked as representative delegate but
    none of its declared edges reaches an agent capable of the next task.
    """
    failed_tasks = {t for a, t in failed_bridges if a == agent}
    total = 0.0
    for act in actions:
        if act.agent != agent:
            continue
        bad = any(not config.has_edge(agent, j) for j in act.declared_neighbors)
        if not bad and failed_tasks:
            bad = any(not any(j in config.capable(t) for j in act.declared_neighbors) for t in failed_tasks)
        if bad:
            total += sum(v for t, v in act.reported.items() if t != act.task)
    return alpha * total


# --- round settlement ------------------------------------------------------------


def settle_round(
    winner: Optional[RoutePath],
    actions: Sequence[DelegationAction],
    config: GraphConfig,
    request: Sequence[TaskId],
    params: SettlementParams = SettlementParams(),
    diffusion: Optional[DiffusionState] = None,
    outcome: Optional[RouteOutcome] = None,
) -> SettlementReport:
    actions = list(actions)
    if outcome is None:
        outcome = route(request, actions, config)
    by_task = index_actions(actions)
    agents = sorted({a.agent for a in actions})
    recs = {a: AgentSettlement() for a in agents}

    realized: dict[TaskId, float] = {}
    crit: dict[TaskId, frozenset[AgentId]] = {}
    chains: dict[TaskId, CriticalChain] = {}
    broken: list[TaskId] = []
    if winner is not None:
        crit = critical_sets(winner, actions, config, request)
        for seg in winner.segments:
            if seg.task in chains:
                continue
            realized[seg.task] = config.intrinsic(seg.guru)[seg.task]
            forest = outcome.forests[seg.task]
            try:
                chain = order_chain(crit[seg.task], seg.task, forest, by_task[seg.task])
            except ChainInvariantError as exc:
                if params.broken_chain == "raise":
                    raise
                log.warning("%s; paying the longest critical chain", exc)
                broken.append(seg.task)
                chain = longest_critical_chain(crit[seg.task], seg.task, forest, seg.guru, by_task[seg.task])
            chains[seg.task] = chain
            pay = task_payoff(
                chain,
                params.base_cost,
                params.scaling,
                params.alpha,
                realized[seg.task],
                params.multiplier,
            )
            for a, v in pay.items():
                recs.setdefault(a, AgentSettlement()).task_payoff[seg.task] = v

    on_winner = winner.members() if winner is not None else frozenset()
    failed = [(b.delegate, b.next_task) for b in outcome.attempts if b.target is None]
    for a in agents:
        achieved = realized if a in on_winner else {}
        recs[a].misreport_penalty = misreport_penalty(a, actions, diffusion, achieved, params.alpha, config)
        recs[a].infeasibility_penalty = infeasibility_penalty(a, actions, config, params.alpha, failed)
    return SettlementReport(recs, winner, realized, crit, chains, tuple(broken))
