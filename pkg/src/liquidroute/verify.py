"""Brute-force checks of the mechanism's guarantees on small graphs.

Three families of checks:

* incentive compatibility: along a best-response run, delegating to a
  neighbor whose logged signal beats the agent's own level never pays
  less than keeping the vote;
* contiguity: for every vote profile of a small graph, the critical
  agents of each task form one vote chain ending at the winning guru;
* stability: at the converged best-response profile no agent gains by a
  unilateral change of vote, report (0.01 grid) or signal (one-round
  lookahead).
"""

from __future__ import annotations

import contextlib
import copy
import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .ledger import index_actions
from .model import AgentId, AgentSpec, CompetenceVector, DelegationAction, GraphConfig, TaskId
from .routing import route
from .settlement import ChainInvariantError, SettlementParams, critical_sets, order_chain, settle_round
from .simulation import SimulationParameters, SimulationState, collect_actions, run_iteration, run_until_stable
from .strategies import StrategyParameters

log = logging.getLogger(__name__)

TOL = 1e-9


@dataclass(frozen=True)
class ICViolation:
    round: int
    agent: AgentId
    neighbor: AgentId
    signal: float
    self_payoff: float
    delegate_payoff: float


@dataclass(frozen=True)
class ContiguityViolation:
    task: TaskId
    votes: tuple[tuple[AgentId, AgentId], ...]
    critical: tuple[AgentId, ...]
    reason: str


@dataclass(frozen=True)
class DeviationViolation:
    agent: AgentId
    kind: str  # "delegation" or "diffusion"
    detail: tuple
    baseline: float
    deviant: float

    @property
    def gain(self) -> float:
        return self.deviant - self.baseline


@dataclass
class VerificationReport:
    ic: list[ICViolation] = field(default_factory=list)
    contiguity: list[ContiguityViolation] = field(default_factory=list)
    deviations: list[DeviationViolation] = field(default_factory=list)
    converged_round: Optional[int] = None
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not (self.ic or self.contiguity or self.deviations)

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        self.ic += other.ic
        self.contiguity += other.contiguity
        self.deviations += other.deviations
        for k, v in other.checked.items():
            self.checked[k] = self.checked.get(k, 0) + v
        if other.converged_round is not None:
            self.converged_round = max(self.converged_round or 0, other.converged_round)
        return self

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "converged_round": self.converged_round,
            "checked": dict(sorted(self.checked.items())),
            "ic": [v.__dict__ for v in self.ic],
            "contiguity": [
                {"task": v.task, "votes": [list(p) for p in v.votes], "critical": list(v.critical), "reason": v.reason}
                for v in self.contiguity
            ],
            "deviations": [
                {"agent": v.agent, "kind": v.kind, "detail": list(v.detail), "baseline": v.baseline, "deviant": v.deviant}
                for v in self.deviations
            ],
        }

    def lines(self) -> list[str]:
        out = [
            f"incentive compatibility: {len(self.ic)} violation(s) in {self.checked.get('ic', 0)} paired settlements",
            f"contiguity: {len(self.contiguity)} violation(s) in {self.checked.get('contiguity', 0)} vote profiles",
            f"unilateral deviation: {len(self.deviations)} profitable of {self.checked.get('deviation', 0)} tried",
        ]
        if self.converged_round is not None:
            out.append(f"best-response converged at round {self.converged_round}")
        for v in self.deviations[:5]:
            out.append(f"  agent {v.agent} {v.kind} {v.detail}: {v.baseline:.6f} -> {v.deviant:.6f}")
        return out


# --- random instances ---------------------------------------------------------


def random_single_task_config(
    rng: np.random.Generator, min_agents: int = 2, max_agents: int = 8, extra_edges: int = 1
) -> GraphConfig:
    """Random tree on 2..8 agents plus a few extra edges, all on task 1.

    Levels are drawn on a 0.05 grid so that ties occur now and then.
    """
    n = int(rng.integers(min_agents, max_agents + 1))
    agents = [AgentSpec(a, 1, CompetenceVector.of({1: round(float(rng.integers(1, 21)) * 0.05, 2)})) for a in range(1, n + 1)]
    edges = set()
    for a in range(2, n + 1):
        b = int(rng.integers(1, a))
        edges.add((b, a))
    for _ in range(int(rng.integers(0, extra_edges + 1))):
        a, b = sorted(int(x) for x in rng.choice(n, size=2, replace=False) + 1) if n > 1 else (1, 1)
        if a != b:
            edges.add((a, b))
    return GraphConfig.build(agents, sorted(edges))


# --- helpers ------------------------------------------------------------------------


@contextlib.contextmanager
def quiet_ledger():
    """Brute force hits cycles, rejected votes and broken chains constantly; keep them out of the log."""
    loggers = [logging.getLogger(n) for n in ("liquidroute.ledger", "liquidroute.settlement")]
    old = [lg.level for lg in loggers]
    for lg in loggers:
        lg.setLevel(logging.ERROR)
    try:
        yield
    finally:
        for lg, lv in zip(loggers, old):
            lg.setLevel(lv)


def _replace_action(actions: Sequence[DelegationAction], new: DelegationAction) -> list[DelegationAction]:
    return [new if (a.agent, a.task) == (new.agent, new.task) else a for a in actions]


def _payoff(actions, config, request, settlement, diffusion=None) -> dict[AgentId, float]:
    outcome = route(request, actions, config)
    rep = settle_round(outcome.winner, actions, config, request, settlement, diffusion, outcome)
    return rep.totals()


def _reaches_guru(vote_of: dict[AgentId, AgentId], start: AgentId, avoid: AgentId) -> bool:
    """True when the vote chain from ``start`` ends at a self-voter without passing ``avoid``."""
    seen = set()
    cur = start
    while cur not in seen and cur != avoid:
        seen.add(cur)
        nxt = vote_of.get(cur, cur)
        if nxt == cur:
            return True
        cur = nxt
    return False


def _grid(lo: float, hi: float, step: float) -> list[float]:
    """Grid points from lo to hi inclusive, always containing both ends."""
    if hi <= lo + TOL:
        return [lo]
    k = int(np.floor((hi - lo) / step + TOL))
    pts = [round(lo + i * step, 10) for i in range(k + 1)]
    if hi - pts[-1] > TOL:
        pts.append(hi)
    return pts


def _single_task_params(strategy: StrategyParameters, settlement: SettlementParams, task: TaskId, ratchet: bool):
    return SimulationParameters(
        iterations=1, replications=1, strategy=strategy, settlement=settlement, request=(task,), ratchet=ratchet
    )


# --- incentive compatibility ----------------------------------------------------------


def ic_violations(
    config: GraphConfig,
    task: TaskId = 1,
    rounds: int = 30,
    strategy: StrategyParameters = StrategyParameters(),
    settlement: SettlementParams = SettlementParams(),
) -> tuple[list[ICViolation], int]:
    """Paired settlements along a best-response run.

    At every round, for every agent ``i`` and same-task neighbor ``j``
    whose latest signal to ``i`` exceeds ``i``'s intrinsic level, settle
    the round twice with everyone else fixed: once with ``i`` delegating
    to ``j`` and reporting the signal, once with ``i`` voting for itself
    and reporting its own level.  Pairs where ``j``'s vote chain never
    reaches a guru (it loops, or runs back through ``i``) are skipped:
    delegating there only feeds a cycle, which the ledger discards.
    """
    params = _single_task_params(strategy, settlement, task, ratchet=False)
    state = SimulationState.start(config, params)
    found: list[ICViolation] = []
    checked = 0
    for _ in range(rounds):
        actions = collect_actions(state)
        vote_of = {a.agent: a.vote for a in actions}
        for act in actions:
            i = act.agent
            own = config.intrinsic(i)[task]
            for j in sorted(config.task_neighbors(i, task)):
                sig = state.diffusion.observed(i, j, task)
                if sig is None or sig <= own or not _reaches_guru(vote_of, j, i):
                    continue
                dele = DelegationAction(i, task, act.reported.with_level(task, sig), j, act.declared_neighbors | {j})
                solo = DelegationAction(i, task, act.reported.with_level(task, own), i, act.declared_neighbors)
                u_del = _payoff(_replace_action(actions, dele), config, (task,), settlement, state.diffusion)[i]
                u_self = _payoff(_replace_action(actions, solo), config, (task,), settlement, state.diffusion)[i]
                checked += 1
                if u_self > u_del + TOL:
                    found.append(ICViolation(state.round + 1, i, j, sig, u_self, u_del))
        before = state.diffusion.pairs(), [state.diffusion.latest(*k) for k in state.diffusion.pairs()]
        run_iteration(state)
        after = state.diffusion.pairs(), [state.diffusion.latest(*k) for k in state.diffusion.pairs()]
        if before == after and state.round > 1:
            break
    return found, checked


# --- contiguity --------------------------------------------------------------------------


def vote_profiles(config: GraphConfig, task: TaskId) -> Iterable[dict[AgentId, AgentId]]:
    agents = sorted(config.capable(task))
    options = [[a] + sorted(config.task_neighbors(a, task)) for a in agents]
    for combo in itertools.product(*options):
        yield dict(zip(agents, combo))


def profile_count(config: GraphConfig, task: TaskId) -> int:
    n = 1
    for a in config.capable(task):
        n *= 1 + len(config.task_neighbors(a, task))
    return n


def contiguity_violations(
    config: GraphConfig, task: TaskId = 1, limit: Optional[int] = None
) -> tuple[list[ContiguityViolation], int]:
    """Audit every vote profile (reports at intrinsic) and order the critical sets."""
    found: list[ContiguityViolation] = []
    checked = 0
    request = (task,)
    for votes in vote_profiles(config, task):
        if limit is not None and checked >= limit:
            break
        actions = [
            DelegationAction(a, task, CompetenceVector.of({task: config.intrinsic(a)[task]}), v, config.neighbors(a))
            for a, v in votes.items()
        ]
        checked += 1
        outcome = route(request, actions, config)
        if outcome.winner is None:
            continue
        crit = critical_sets(outcome.winner, actions, config, request)
        by_task = index_actions(actions)
        for seg in outcome.winner.segments:
            members = crit.get(seg.task, frozenset())
            try:
                chain = order_chain(members, seg.task, outcome.forests[seg.task], by_task[seg.task])
            except ChainInvariantError as exc:
                found.append(ContiguityViolation(seg.task, tuple(sorted(votes.items())), tuple(sorted(members)), str(exc)))
                continue
            if chain.guru != seg.guru:
                found.append(
                    ContiguityViolation(seg.task, tuple(sorted(votes.items())), tuple(sorted(members)), "chain ends off the guru")
                )
    return found, checked


# --- unilateral deviations ---------------------------------------------------------------


def _clone(state: SimulationState) -> SimulationState:
    dup = copy.copy(state)
    dup.diffusion = state.diffusion.copy()
    dup.levels = dict(state.levels)
    dup.history = copy.deepcopy(state.history)
    dup.metrics = list(state.metrics)
    dup.keep_records = False
    dup.records = []
    return dup


def deviation_violations(
    config: GraphConfig,
    task: TaskId = 1,
    grid_step: float = 0.01,
    strategy: StrategyParameters = StrategyParameters(),
    settlement: SettlementParams = SettlementParams(),
    max_rounds: int = 20,
    ratchet: bool = True,
) -> tuple[list[DeviationViolation], int, int]:
    """Search unilateral deviations at the converged best-response profile.

    Delegation deviations try every vote target with reports on the grid
    between the agent's own level and the signal it holds from that
    target.  Diffusion deviations override one outgoing signal with each
    grid level the sender can back, [0, c*], and compare the next round's
    payoff.

    Returns (violations, deviations tried, convergence round).
    """
    params = _single_task_params(strategy, settlement, task, ratchet)
    state = SimulationState.start(config, params)
    state, record, converged = run_until_stable(state, max_rounds)
    actions = record.actions
    request = (task,)
    base = _payoff(actions, config, request, settlement, state.diffusion)
    found: list[DeviationViolation] = []
    tried = 0

    for act in actions:
        i = act.agent
        own = config.intrinsic(i)[task]
        for target in [i] + sorted(config.task_neighbors(i, task)):
            if target == i:
                levels = [own]
            else:
                sig = state.diffusion.observed(i, target, task) or 0.0
                levels = _grid(own, max(own, sig), grid_step)
            for level in levels:
                dev = DelegationAction(i, task, act.reported.with_level(task, level), target, act.declared_neighbors | ({target} - {i}))
                if dev == act:
                    continue
                tried += 1
                u = _payoff(_replace_action(actions, dev), config, request, settlement, state.diffusion)[i]
                if u > base[i] + TOL:
                    found.append(DeviationViolation(i, "delegation", (target, level), base[i], u))

    ahead = run_iteration(_clone(state))[1].settlement.totals()
    for i in sorted(config.capable(task)):
        backed = state.view(i, task).best()[0]
        for j in sorted(config.task_neighbors(i, task)):
            current = state.diffusion.observed(j, i, task)
            for level in _grid(0.0, backed, grid_step):
                if current is not None and abs(level - current) <= TOL:
                    continue
                trial = _clone(state)
                trial.diffusion.send(state.round, i, j, CompetenceVector.of({task: level}))
                tried += 1
                u = run_iteration(trial)[1].settlement.totals().get(i, 0.0)
                if u > ahead.get(i, 0.0) + TOL:
                    found.append(DeviationViolation(i, "diffusion", (j, level), ahead.get(i, 0.0), u))
    return found, tried, converged


# --- entry point ------------------------------------------------------------------------------


def verify_theorems(
    config: GraphConfig,
    grid_step: float = 0.01,
    strategy: StrategyParameters = StrategyParameters(),
    settlement: SettlementParams = SettlementParams(),
    tasks: Optional[Sequence[TaskId]] = None,
    ic_rounds: int = 30,
    max_rounds: int = 20,
    profile_limit: Optional[int] = 20000,
    deviations: bool = True,
) -> VerificationReport:
    """Run all three checks task by task; an empty report means every check passed."""
    report = VerificationReport()
    with quiet_ledger():
        for task in tasks or config.tasks():
            report.merge(_verify_task(config, task, grid_step, strategy, settlement, ic_rounds, max_rounds, profile_limit, deviations))
    return report


def _verify_task(config, task, grid_step, strategy, settlement, ic_rounds, max_rounds, profile_limit, deviations):
    if not config.capable(task):
        return VerificationReport()
    ic, n_ic = ic_violations(config, task, ic_rounds, strategy, settlement)
    cont, n_cont = contiguity_violations(config, task, profile_limit)
    part = VerificationReport(ic=ic, contiguity=cont, checked={"ic": n_ic, "contiguity": n_cont})
    if deviations:
        dev, n_dev, conv = deviation_violations(config, task, grid_step, strategy, settlement, max_rounds)
        part.deviations = dev
        part.checked["deviation"] = n_dev
        part.converged_round = conv
    return part


# --- routing on multi-domain configs -----------------------------------------------------------


@dataclass(frozen=True)
class DomainOutcome:
    """Where best-response dynamics route one domain, against the domain's best agent."""

    task: TaskId
    best_level: float
    best_agents: tuple[AgentId, ...]
    guru: Optional[AgentId]
    guru_level: float
    feasible: bool
    converged_round: int
    components: tuple[tuple[AgentId, ...], ...]

    @property
    def ok(self) -> bool:
        return self.guru_level >= self.best_level - TOL

    @property
    def violation(self) -> bool:
        """The best agent was reachable but did not win."""
        return self.feasible and not self.ok

    def blocking(self) -> str:
        """Why the best agent could not gather the largest pool."""
        home = next(c for c in self.components if set(c) & set(self.best_agents))
        big = max(len(c) for c in self.components)
        others = [c for c in self.components if len(c) == big and c != home]
        parts = [f"best agent(s) {list(self.best_agents)} sit in component {list(home)} of size {len(home)}"]
        if others:
            parts.append(f"largest component {list(others[0])} has size {big}")
        return "; ".join(parts)

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "best_level": self.best_level,
            "best_agents": list(self.best_agents),
            "guru": self.guru,
            "guru_level": self.guru_level,
            "feasible": self.feasible,
            "ok": self.ok,
            "converged_round": self.converged_round,
            "components": [list(c) for c in self.components],
        }


def capable_components(config: GraphConfig, task: TaskId) -> list[tuple[AgentId, ...]]:
    """Connected pieces of the graph restricted to agents able to do ``task``."""
    import networkx as nx

    cap = config.capable(task)
    g = nx.Graph()
    g.add_nodes_from(cap)
    g.add_edges_from(e for e in config.edges if e[0] in cap and e[1] in cap)
    return sorted((tuple(sorted(c)) for c in nx.connected_components(g)), key=lambda c: (-len(c), c))


def domain_routing(
    config: GraphConfig,
    tasks: Optional[Sequence[TaskId]] = None,
    strategy: StrategyParameters = StrategyParameters(),
    settlement: SettlementParams = SettlementParams(),
    max_rounds: int = 200,
) -> list[DomainOutcome]:
    """Route each domain as a one-task request and compare with its best agent.

    The best agent counts as reachable when its component of capable
    agents is as large as any other, since only a largest pool can win.
    """
    out = []
    with quiet_ledger():
        for task in tasks or config.tasks():
            cap = config.capable(task)
            if not cap:
                continue
            levels = {a: config.intrinsic(a)[task] for a in cap}
            best = max(levels.values())
            best_agents = tuple(sorted(a for a, v in levels.items() if v == best))
            comps = capable_components(config, task)
            big = len(comps[0])
            feasible = any(len(c) == big and set(c) & set(best_agents) for c in comps)
            params = _single_task_params(strategy, settlement, task, True)
            _, record, conv = run_until_stable(SimulationState.start(config, params), max_rounds)
            winner = record.outcome.winner
            guru = winner.segments[0].guru if winner is not None else None
            out.append(
                DomainOutcome(
                    task,
                    best,
                    best_agents,
                    guru,
                    levels[guru] if guru is not None else 0.0,
                    feasible,
                    conv,
                    tuple(comps),
                )
            )
    return out
