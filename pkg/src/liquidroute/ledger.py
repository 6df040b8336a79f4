"""Vote resolution: from per-agent actions to gurus, pools and vote counts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .model import AgentId, DelegationAction, GraphConfig, TaskId

log = logging.getLogger(__name__)


class LedgerError(ValueError):
    pass


@dataclass(frozen=True)
class DelegationForest:
    task: TaskId
    vote_of: Mapping[AgentId, AgentId]
    gurus: frozenset[AgentId]
    pool: Mapping[AgentId, frozenset[AgentId]]
    votes: Mapping[AgentId, int]
    cyclic_agents: frozenset[AgentId] = frozenset()
    guru_of: Mapping[AgentId, AgentId] = field(default_factory=dict)
    rejected: frozenset[AgentId] = frozenset()

    @property
    def gurus_by_task(self) -> dict[TaskId, frozenset[AgentId]]:
        return {self.task: self.gurus}

    @property
    def participants(self) -> frozenset[AgentId]:
        return frozenset(self.vote_of)

    def members(self, guru: AgentId) -> frozenset[AgentId]:
        return self.pool[guru] | {guru}

    def path_to_guru(self, agent: AgentId) -> list[AgentId]:
        """``agent`` followed by each vote target up to and including its guru."""
        if agent not in self.guru_of:
            raise LedgerError(f"agent {agent} does not reach a guru")
        out = [agent]
        while self.vote_of[out[-1]] != out[-1]:
            out.append(self.vote_of[out[-1]])
        return out

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "vote_of": {str(a): v for a, v in sorted(self.vote_of.items())},
            "gurus": sorted(self.gurus),
            "pool": {str(g): sorted(p) for g, p in sorted(self.pool.items())},
            "votes": {str(g): v for g, v in sorted(self.votes.items())},
            "cyclic_agents": sorted(self.cyclic_agents),
        }


def _chase(vote_of: Mapping[AgentId, AgentId]) -> tuple[dict[AgentId, AgentId], set[AgentId]]:
    """Follow pointers; returns (agent -> guru, cyclic set).

    Targets outside ``vote_of`` end the chase without a guru and are
    counted as cyclic-like losses only by the caller's validation, which
    never lets them through.
    """
    guru_of: dict[AgentId, AgentId] = {}
    lost: set[AgentId] = set()
    for start in sorted(vote_of):
        if start in guru_of or start in lost:
            continue
        trail: list[AgentId] = []
        seen: set[AgentId] = set()
        cur = start
        result = None
        while True:
            if cur in guru_of:
                result = guru_of[cur]
                break
            if cur in lost or cur not in vote_of:
                break
            if cur in seen:
                break
            nxt = vote_of[cur]
            if nxt == cur:
                result = cur
                trail.append(cur)
                break
            seen.add(cur)
            trail.append(cur)
            cur = nxt
        if result is None:
            lost.update(trail)
        else:
            for a in trail:
                guru_of[a] = result
    return guru_of, lost


def detect_cycles(actions: Iterable[DelegationAction]) -> set[AgentId]:
    """Agents whose pointer chase revisits a node before reaching a self-voter."""
    vote_of = {a.agent: a.vote for a in actions}
    guru_of, lost = _chase(vote_of)
    # a chase that falls off the action set is not a cycle
    dangling = set()
    for a in lost:
        cur, seen = a, set()
        while cur in vote_of and cur not in seen:
            seen.add(cur)
            cur = vote_of[cur]
        if cur not in vote_of:
            dangling.add(a)
    return lost - dangling


def resolve_delegations(actions: Iterable[DelegationAction], config: GraphConfig, task: TaskId) -> DelegationForest:
    """Resolve the actions submitted for ``task`` into a delegation forest.

    Actions for other tasks are ignored.  A vote that does not target a
    declared, real, same-task neighbor that also submitted an action is
    rejected and counted as a self-vote.
    """
    mine: dict[AgentId, DelegationAction] = {}
    for act in actions:
        if act.task != task:
            continue
        if act.agent not in config:
            raise LedgerError(f"action from unknown agent {act.agent}")
        if act.agent in mine:
            raise LedgerError(f"two actions from agent {act.agent} for task {task}")
        mine[act.agent] = act

    vote_of: dict[AgentId, AgentId] = {}
    rejected = set()
    capable = config.capable(task)
    for agent, act in mine.items():
        target = act.vote
        if target != agent:
            ok = (
                target in act.declared_neighbors
                and config.has_edge(agent, target)
                and target in mine
                and target in capable
                and agent in capable
            )
            if not ok:
                log.warning("task %s: agent %s vote for %s rejected, counted as self-vote", task, agent, target)
                rejected.add(agent)
                target = agent
        vote_of[agent] = target

    guru_of, lost = _chase(vote_of)
    if lost:
        log.warning("task %s: votes of %s trapped in a cycle and discarded", task, sorted(lost))
    gurus = frozenset(a for a, v in vote_of.items() if a == v)
    pools: dict[AgentId, set[AgentId]] = {g: set() for g in gurus}
    for a, g in guru_of.items():
        if a != g:
            pools[g].add(a)
    pool = {g: frozenset(p) for g, p in pools.items()}
    return DelegationForest(
        task=task,
        vote_of=dict(sorted(vote_of.items())),
        gurus=gurus,
        pool=pool,
        votes={g: len(p) + 1 for g, p in pool.items()},
        cyclic_agents=frozenset(lost),
        guru_of=guru_of,
        rejected=frozenset(rejected),
    )


def index_actions(actions: Iterable[DelegationAction]) -> dict[TaskId, dict[AgentId, DelegationAction]]:
    out: dict[TaskId, dict[AgentId, DelegationAction]] = {}
    for a in actions:
        out.setdefault(a.task, {})[a.agent] = a
    return out
