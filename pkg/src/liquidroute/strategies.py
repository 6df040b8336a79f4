"""Agent policies: best response, the equilibrium rules, and the report ratchet."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import networkx as nx

from .model import AgentId, CompetenceVector, DelegationAction, DiffusionState, GraphConfig, TaskId, clamp01


@dataclass(frozen=True)
class StrategyParameters:
    delta: float = 0.02
    epsilon: float = 0.001
    delta_r: float = 0.02
    # share the current best level with neighbors working on other tasks
    advertise: bool = True

    def __post_init__(self) -> None:
        for name in ("delta", "epsilon", "delta_r"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.epsilon > self.delta:
            raise ValueError("epsilon must not exceed delta")


@dataclass(frozen=True)
class AgentView:
    """What one agent can see when deciding for one task."""

    agent: AgentId
    task: TaskId
    intrinsic: CompetenceVector
    neighbors: frozenset[AgentId]
    task_neighbors: frozenset[AgentId]
    incoming: Mapping[AgentId, CompetenceVector] = field(default_factory=dict)
    outgoing: Mapping[AgentId, CompetenceVector] = field(default_factory=dict)
    payoffs: tuple[float, ...] = ()
    report_level: Optional[float] = None
    request: tuple[TaskId, ...] = ()
    # neighbors whose vote on this task pointed at this agent in the current round
    supporters: frozenset[AgentId] = frozenset()

    @property
    def own(self) -> float:
        return self.intrinsic[self.task]

    def observed(self, j: AgentId, task: Optional[TaskId] = None) -> Optional[float]:
        vec = self.incoming.get(j)
        return None if vec is None else vec.get(self.task if task is None else task)

    def best(self) -> tuple[float, Optional[AgentId]]:
        """(c*, j*) with j* None when the agent's own level attains the max."""
        top, arg = self.own, None
        for j in sorted(self.task_neighbors):
            v = self.observed(j)
            if v is not None and v > top:
                top, arg = v, j
        return top, arg

    def auxiliary_claims(self) -> dict[TaskId, float]:
        """Per other task: own level or the best claim a neighbor has sent."""
        tasks = set(self.intrinsic.tasks()) | set(self.request)
        for vec in self.incoming.values():
            tasks |= vec.tasks()
        tasks.discard(self.task)
        out = {}
        for t in sorted(tasks):
            best = self.intrinsic[t]
            for j in self.neighbors:
                v = self.observed(j, t)
                if v is not None and v > best:
                    best = v
            out[t] = best
        return out


def make_view(
    config: GraphConfig,
    diffusion: DiffusionState,
    agent: AgentId,
    task: TaskId,
    payoffs: Sequence[float] = (),
    report_level: Optional[float] = None,
    request: Sequence[TaskId] = (),
    supporters: frozenset[AgentId] = frozenset(),
) -> AgentView:
    nbrs = config.neighbors(agent)
    incoming = {j: v for j in nbrs if (v := diffusion.latest(j, agent)) is not None}
    outgoing = {j: v for j in nbrs if (v := diffusion.latest(agent, j)) is not None}
    return AgentView(
        agent=agent,
        task=task,
        intrinsic=config.intrinsic(agent),
        neighbors=nbrs,
        task_neighbors=config.task_neighbors(agent, task),
        incoming=incoming,
        outgoing=outgoing,
        payoffs=tuple(payoffs),
        report_level=report_level,
        request=tuple(request),
        supporters=frozenset(supporters),
    )


# --- best response -------------------------------------------------------------


def best_response_delegation(view: AgentView) -> DelegationAction:
    """Vote for the highest observed level; self wins ties.

    The primary report is the observed maximum, or the agent's ratcheted
    report level (kept between intrinsic and that maximum) when one is set.
    """
    top, arg = view.best()
    vote = view.agent if arg is None else arg
    if view.report_level is None:
        primary = top
    else:
        primary = min(max(view.report_level, view.own), top)
    levels = view.auxiliary_claims()
    levels[view.task] = primary
    return DelegationAction(view.agent, view.task, CompetenceVector.of(levels, clamp=True), vote, view.neighbors)


def best_response_diffusion(view: AgentView, params: StrategyParameters = StrategyParameters()) -> dict[AgentId, CompetenceVector]:
    """Raise the bid to every same-task neighbor that is not yet won over.

    The bid to ``j`` steps by delta above the larger of what ``j`` last
    claimed and what was last sent to ``j``, capped at c*.  Nothing goes to
    the neighbor that supplied c*, nor to neighbors already voting for this
    agent, except that a standing claim above c* is always pulled back to
    c*.  Neighbors on other tasks get the current c* when
    ``params.advertise`` is set and it differs from what they last received.
    """
    top, arg = view.best()
    out: dict[AgentId, CompetenceVector] = {}
    for j in sorted(view.task_neighbors):
        sent = view.outgoing.get(j)
        last = None if sent is None else sent.get(view.task)
        if last is not None and last > top:
            out[j] = CompetenceVector.of({view.task: top}, clamp=True)
            continue
        if j == arg or j in view.supporters:
            continue
        base = max(view.observed(j) or 0.0, last or 0.0)
        if base < top:
            step = round(base + params.delta, 10)
            out[j] = CompetenceVector.of({view.task: top if step >= top else step}, clamp=True)
    if params.advertise:
        for j in sorted(view.neighbors - view.task_neighbors):
            sent = view.outgoing.get(j)
            if sent is None or sent.get(view.task) != top:
                out[j] = CompetenceVector.of({view.task: top}, clamp=True)
    return out


def relay_diffusion(view: AgentView) -> dict[AgentId, CompetenceVector]:
    """Forward a level learned from a neighbor; agents at their own level stay quiet."""
    top, arg = view.best()
    if arg is None:
        return {}
    out = {}
    for j in sorted(view.task_neighbors):
        if j == arg:
            continue
        sent = view.outgoing.get(j)
        if sent is None or sent.get(view.task) != top:
            out[j] = CompetenceVector.of({view.task: top}, clamp=True)
    return out


def competence_update(view: AgentView, params: StrategyParameters = StrategyParameters()) -> float:
    """Next report level: step up by delta_r, capped by the best incoming claim, floored at intrinsic."""
    current = view.own if view.report_level is None else view.report_level
    seen = [v for j in view.task_neighbors if (v := view.observed(j)) is not None]
    bound = max(seen) if seen else view.own
    return clamp01(max(view.own, min(current + params.delta_r, bound)))


# --- equilibrium rules ------------------------------------------------------------


@dataclass(frozen=True)
class NashDecision:
    vote: AgentId
    report: float
    diffusion: dict[AgentId, float]


def competitor_set(graph: nx.DiGraph, i: AgentId, j: AgentId) -> frozenset[AgentId]:
    """Agents that can reach ``j`` and sit on every ``j`` -> ``i`` path in ``graph``."""
    if j not in graph or i not in graph or not nx.has_path(graph, j, i):
        return frozenset({i, j})
    idom = nx.immediate_dominators(graph, j)
    on_all = {i}
    cur = i
    while cur != j:
        cur = idom[cur]
        on_all.add(cur)
    feeders = nx.ancestors(graph, j) | {j}
    return frozenset(on_all & feeders)


def nash_profile(
    config: GraphConfig,
    task: TaskId,
    signals: Mapping[tuple[AgentId, AgentId], float],
    epsilon: float = 0.001,
) -> dict[AgentId, NashDecision]:
    """One application of the equilibrium rules to a full-information state.

    ``signals`` maps (sender, receiver) to the level last diffused on
    ``task``; its keys also define the directed diffusion graph.
    """
    agents = sorted(config.capable(task))
    c = {a: config.intrinsic(a)[task] for a in agents}
    graph = nx.DiGraph()
    graph.add_nodes_from(agents)
    graph.add_edges_from(k for k in signals if k[0] in c and k[1] in c)

    votes: dict[AgentId, AgentId] = {}
    for i in agents:
        incoming = [(signals[(j, i)], j) for j in config.task_neighbors(i, task) if (j, i) in signals]
        d_tilde = max((v for v, _ in incoming), default=None)
        if d_tilde is None or c[i] >= d_tilde:
            votes[i] = i
        else:
            votes[i] = min(j for v, j in incoming if v == d_tilde)

    reports: dict[AgentId, float] = {}
    for i in agents:
        if votes[i] == i:
            reports[i] = c[i]
            continue
        ranked = sorted((c[k] for k in competitor_set(graph, i, votes[i])), reverse=True)
        second = ranked[1] if len(ranked) > 1 else c[i]
        reports[i] = max(c[i], second)

    out = {}
    for j in agents:
        sends = {}
        for i in sorted(config.task_neighbors(j, task)):
            if reports[j] > reports[i]:
                sends[i] = min(reports[j], reports[i] + epsilon)
            else:
                sends[i] = reports[j]
        out[j] = NashDecision(votes[j], reports[j], sends)
    return out


def nash_fixed_point(
    config: GraphConfig, task: TaskId, epsilon: float = 0.001, max_rounds: int = 100
) -> tuple[dict[AgentId, NashDecision], int]:
    """Iterate ``nash_profile`` from an empty signal set until it repeats."""
    signals: dict[tuple[AgentId, AgentId], float] = {}
    prof = nash_profile(config, task, signals, epsilon)
    for n in range(1, max_rounds + 1):
        signals = {(j, i): v for j, d in prof.items() for i, v in d.diffusion.items()}
        nxt = nash_profile(config, task, signals, epsilon)
        if nxt == prof:
            return prof, n
        prof = nxt
    return prof, max_rounds
