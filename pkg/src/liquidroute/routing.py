"""Cross-task path construction and winner selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .ledger import DelegationForest, index_actions, resolve_delegations
from .model import AgentId, DelegationAction, GraphConfig, TaskId


@dataclass(frozen=True)
class Segment:
    task: TaskId
    guru: AgentId
    pool: frozenset[AgentId]

    @property
    def members(self) -> frozenset[AgentId]:
        return self.pool | {self.guru}


@dataclass(frozen=True)
class RoutePath:
    segments: tuple[Segment, ...]
    bridges: tuple[tuple[AgentId, AgentId], ...]
    total_votes: int

    @property
    def gurus(self) -> tuple[AgentId, ...]:
        return tuple(s.guru for s in self.segments)

    @property
    def path_id(self) -> str:
        return "-".join(str(g) for g in self.gurus)

    def segment_for(self, task: TaskId) -> Optional[Segment]:
        for s in self.segments:
            if s.task == task:
                return s
        return None

    def members(self) -> frozenset[AgentId]:
        out: set[AgentId] = set()
        for s in self.segments:
            out |= s.members
        return frozenset(out)

    def to_json(self) -> dict:
        return {
            "id": self.path_id,
            "segments": [{"task": s.task, "guru": s.guru, "pool": sorted(s.pool)} for s in self.segments],
            "bridges": [list(b) for b in self.bridges],
            "total_votes": self.total_votes,
        }


def _downstream(report, request: Sequence[TaskId], k: int) -> float:
    return sum(report[t] for t in request[k + 1:])


def representative_delegate(
    guru: AgentId,
    forest: DelegationForest,
    actions: Mapping[AgentId, DelegationAction] | Iterable[DelegationAction],
    request: Sequence[TaskId],
    k: int,
) -> AgentId:
    """Member of D(g) ∪ {g} with the largest reported downstream sum; lowest id on ties."""
    if not isinstance(actions, Mapping):
        actions = {a.agent: a for a in actions if a.task == request[k]}
    best_id, best_val = None, None
    for member in sorted(forest.members(guru)):
        act = actions.get(member)
        val = _downstream(act.reported, request, k) if act is not None else 0.0
        if best_val is None or val > best_val:
            best_id, best_val = member, val
    return best_id


@dataclass(frozen=True)
class BridgeAttempt:
    """One representative delegate's try at crossing into the next task."""

    position: int
    delegate: AgentId
    next_task: TaskId
    target: Optional[AgentId]


def _extend(request, forests, by_task, config):
    paths: list[RoutePath] = []
    attempts: list[BridgeAttempt] = []
    first = forests[request[0]]
    for g0 in sorted(first.gurus):
        segments = [Segment(request[0], g0, first.pool[g0])]
        bridges: list[tuple[AgentId, AgentId]] = []
        votes = first.votes[g0]
        ok = True
        for k in range(len(request) - 1):
            here, nxt = forests[request[k]], forests[request[k + 1]]
            acts = by_task.get(request[k], {})
            delegate = representative_delegate(segments[-1].guru, here, acts, request, k)
            act = acts.get(delegate)
            declared = act.declared_neighbors if act is not None else frozenset()
            choice = None  # (votes, guru, target)
            for target in sorted(declared):
                if not config.has_edge(delegate, target):
                    continue
                g = nxt.guru_of.get(target)
                if g is None:
                    continue
                if choice is None or (nxt.votes[g], -g) > (choice[0], -choice[1]):
                    choice = (nxt.votes[g], g, target)
            attempts.append(BridgeAttempt(k, delegate, request[k + 1], None if choice is None else choice[2]))
            if choice is None:
                ok = False
                break
            v, g, target = choice
            bridges.append((delegate, target))
            segments.append(Segment(request[k + 1], g, nxt.pool[g]))
            votes += v
        if ok:
            paths.append(RoutePath(tuple(segments), tuple(bridges), votes))
    return paths, attempts


def build_feasible_paths(
    request: Sequence[TaskId],
    forests: Mapping[TaskId, DelegationForest],
    actions: Iterable[DelegationAction],
    config: GraphConfig,
) -> list[RoutePath]:
    """All paths that start at a first-task guru and bridge through every task.

    Each path is extended greedily: the representative delegate of the
    current segment crosses along one of its declared, real edges into the
    next task, preferring the target whose guru holds the most votes.
    Returned in ascending guru-sequence order.
    """
    if not request:
        return []
    return _extend(request, forests, index_actions(actions), config)[0]


def bridge_attempts(
    request: Sequence[TaskId],
    forests: Mapping[TaskId, DelegationForest],
    actions: Iterable[DelegationAction],
    config: GraphConfig,
) -> list[BridgeAttempt]:
    if not request:
        return []
    return _extend(request, forests, index_actions(actions), config)[1]


def select_winning_path(feasible: Iterable[RoutePath]) -> Optional[RoutePath]:
    best = None
    for p in feasible:
        if best is None or (-p.total_votes, p.gurus) < (-best.total_votes, best.gurus):
            best = p
    return best


@dataclass(frozen=True)
class RouteOutcome:
    forests: dict[TaskId, DelegationForest]
    feasible: list[RoutePath]
    winner: Optional[RoutePath]
    attempts: list[BridgeAttempt]


def route(request: Sequence[TaskId], actions: Sequence[DelegationAction], config: GraphConfig) -> RouteOutcome:
    """Resolve every requested task, build paths and pick the winner."""
    forests = {t: resolve_delegations(actions, config, t) for t in dict.fromkeys(request)}
    if not request:
        return RouteOutcome(forests, [], None, [])
    feasible, attempts = _extend(request, forests, index_actions(actions), config)
    return RouteOutcome(forests, feasible, select_winning_path(feasible), attempts)
