"""Domain types shared by every part of the engine.

Agents are identified by positive integers, tasks likewise.  Competence
vectors map task ids to levels in [0, 1]; a task that is not listed has
level 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

AgentId = int
TaskId = int


class ConfigError(ValueError):
    """Raised when a graph config violates one of its invariants."""


def _check_level(value: float, where: str) -> float:
    v = float(value)
    if math.isnan(v) or v < 0.0 or v > 1.0:
        raise ConfigError(f"{where}: competence {value!r} outside [0, 1]")
    return v


def clamp01(value: float) -> float:
    if value != value:  # NaN
        return 0.0
    return 0.0 if value < 0.0 else 1.0 if value > 1.0 else float(value)


@dataclass(frozen=True)
class CompetenceVector:
    """Immutable task -> level map.  Missing tasks read as 0."""

    entries: tuple[tuple[TaskId, float], ...] = ()

    @classmethod
    def of(cls, mapping: Mapping[TaskId, float] | None = None, *, clamp: bool = False) -> "CompetenceVector":
        if not mapping:
            return cls(())
        items = []
        for task, level in mapping.items():
            t = int(task)
            if t <= 0:
                raise ConfigError(f"task id {task!r} must be a positive integer")
            lv = clamp01(float(level)) if clamp else _check_level(level, f"task {t}")
            items.append((t, lv))
        items.sort()
        return cls(tuple(items))

    def __getitem__(self, task: TaskId) -> float:
        for t, v in self.entries:
            if t == task:
                return v
        return 0.0

    def get(self, task: TaskId) -> Optional[float]:
        for t, v in self.entries:
            if t == task:
                return v
        return None

    def __contains__(self, task: object) -> bool:
        return any(t == task for t, _ in self.entries)

    def __iter__(self) -> Iterator[TaskId]:
        return (t for t, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def items(self) -> tuple[tuple[TaskId, float], ...]:
        return self.entries

    def as_dict(self) -> dict[TaskId, float]:
        return dict(self.entries)

    def tasks(self) -> frozenset[TaskId]:
        return frozenset(t for t, _ in self.entries)

    def positive_tasks(self) -> frozenset[TaskId]:
        return frozenset(t for t, v in self.entries if v > 0.0)

    def with_level(self, task: TaskId, level: float) -> "CompetenceVector":
        d = self.as_dict()
        d[task] = clamp01(level)
        return CompetenceVector.of(d)

    def merged(self, other: "CompetenceVector") -> "CompetenceVector":
        """Entries of ``other`` overwrite ours task by task."""
        d = self.as_dict()
        d.update(other.as_dict())
        return CompetenceVector.of(d)

    def to_json(self) -> dict[str, float]:
        return {str(t): v for t, v in self.entries}


@dataclass(frozen=True)
class AgentSpec:
    id: AgentId
    primary_task: TaskId
    intrinsic: CompetenceVector


def _edge(a: AgentId, b: AgentId) -> tuple[AgentId, AgentId]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class GraphConfig:
    """Undirected agent graph.  Construction validates and indexes it."""

    agents: tuple[AgentSpec, ...]
    edges: frozenset[tuple[AgentId, AgentId]]
    _by_id: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)
    _nbrs: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)
    _capable: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        by_id: dict[AgentId, AgentSpec] = {}
        for spec in self.agents:
            if not isinstance(spec.id, int) or spec.id <= 0:
                raise ConfigError(f"agent id {spec.id!r} must be a positive integer")
            if spec.id in by_id:
                raise ConfigError(f"duplicate agent id {spec.id}")
            for t, v in spec.intrinsic.items():
                _check_level(v, f"agent {spec.id} task {t}")
            by_id[spec.id] = spec
        nbrs: dict[AgentId, set[AgentId]] = {a: set() for a in by_id}
        normalized = set()
        for a, b in self.edges:
            if a == b:
                raise ConfigError(f"self-loop on agent {a}")
            for end in (a, b):
                if end not in by_id:
                    raise ConfigError(f"edge ({a}, {b}) has unknown endpoint {end}")
            nbrs[a].add(b)
            nbrs[b].add(a)
            normalized.add(_edge(a, b))
        object.__setattr__(self, "edges", frozenset(normalized))
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_nbrs", {a: frozenset(s) for a, s in nbrs.items()})
        object.__setattr__(self, "_capable", {})

    @classmethod
    def build(cls, agents: Iterable[AgentSpec], edges: Iterable[tuple[AgentId, AgentId]]) -> "GraphConfig":
        return cls(tuple(agents), frozenset((int(a), int(b)) for a, b in edges))

    # lookups
    @property
    def ids(self) -> list[AgentId]:
        return sorted(self._by_id)

    def agent(self, agent_id: AgentId) -> AgentSpec:
        try:
            return self._by_id[agent_id]
        except KeyError:
            raise KeyError(f"unknown agent {agent_id}") from None

    def __contains__(self, agent_id: object) -> bool:
        return agent_id in self._by_id

    def __len__(self) -> int:
        return len(self._by_id)

    def neighbors(self, agent_id: AgentId) -> frozenset[AgentId]:
        return self._nbrs[agent_id]

    def has_edge(self, a: AgentId, b: AgentId) -> bool:
        return b in self._nbrs.get(a, ())

    def intrinsic(self, agent_id: AgentId) -> CompetenceVector:
        return self._by_id[agent_id].intrinsic

    def tasks(self) -> list[TaskId]:
        found: set[TaskId] = set()
        for spec in self.agents:
            found |= spec.intrinsic.tasks()
            found.add(spec.primary_task)
        return sorted(found)

    def capable(self, task: TaskId) -> frozenset[AgentId]:
        """Agents that take part in delegation for ``task``.

        An agent is capable of a task when its intrinsic level there is
        positive.  An agent with no positive level anywhere falls back to
        its primary task so that it still has somewhere to vote.
        """
        hit = self._capable.get(task)
        if hit is None:
            members = set()
            for spec in self.agents:
                pos = spec.intrinsic.positive_tasks()
                if task in pos or (not pos and spec.primary_task == task):
                    members.add(spec.id)
            hit = frozenset(members)
            self._capable[task] = hit
        return hit

    def task_neighbors(self, agent_id: AgentId, task: TaskId) -> frozenset[AgentId]:
        """Neighbors that share capability for ``task`` (intra-task edges)."""
        cap = self.capable(task)
        return frozenset(j for j in self._nbrs[agent_id] if j in cap)

    def agent_tasks(self, agent_id: AgentId) -> list[TaskId]:
        return [t for t in self.tasks() if agent_id in self.capable(t)]

    # serialization
    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": s.id, "primary_task": s.primary_task, "intrinsic_competence": s.intrinsic.to_json()}
                for s in sorted(self.agents, key=lambda s: s.id)
            ],
            "edges": [list(e) for e in sorted(self.edges)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GraphConfig":
        if not isinstance(data, Mapping) or "nodes" not in data:
            raise ConfigError("config must be an object with a 'nodes' list")
        agents = []
        for idx, node in enumerate(data["nodes"]):
            where = f"nodes[{idx}]"
            if "id" not in node:
                raise ConfigError(f"{where}: missing 'id'")
            raw = node.get("intrinsic_competence", {}) or {}
            levels: dict[int, float] = {}
            for key, val in raw.items():
                try:
                    task = int(key)
                except (TypeError, ValueError):
                    raise ConfigError(f"{where}.intrinsic_competence: task key {key!r} is not an integer") from None
                if task <= 0:
                    raise ConfigError(f"{where}.intrinsic_competence: task key {key!r} must be positive")
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise ConfigError(f"{where}.intrinsic_competence[{key!r}]: value {val!r} is not a number")
                levels[task] = _check_level(val, f"{where}.intrinsic_competence[{key!r}]")
            primary = node.get("primary_task")
            if primary is None:
                primary = default_primary_task(levels)
            agents.append(AgentSpec(int(node["id"]), int(primary), CompetenceVector.of(levels)))
        edges = []
        for idx, e in enumerate(data.get("edges", [])):
            if len(e) != 2:
                raise ConfigError(f"edges[{idx}]: expected a pair, got {e!r}")
            edges.append((int(e[0]), int(e[1])))
        return cls.build(agents, edges)

    def checksum(self) -> str:
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def default_primary_task(levels: Mapping[int, float]) -> int:
    """Task with the highest level (lowest id on ties); task 1 when empty."""
    if not levels:
        return 1
    best = max(levels.values())
    return min(t for t, v in levels.items() if v == best)


def validate_config(config: GraphConfig) -> GraphConfig:
    """Re-check a config (construction already validates) and return it."""
    return GraphConfig(tuple(config.agents), frozenset(config.edges))


# --- round state -----------------------------------------------------------


@dataclass(frozen=True)
class DelegationAction:
    """One agent's submission for one task in one round."""

    agent: AgentId
    task: TaskId
    reported: CompetenceVector
    vote: AgentId
    declared_neighbors: frozenset[AgentId] = frozenset()

    @property
    def self_vote(self) -> bool:
        return self.vote == self.agent

    def with_vote(self, vote: AgentId) -> "DelegationAction":
        return DelegationAction(self.agent, self.task, self.reported, vote, self.declared_neighbors)

    def to_json(self) -> dict:
        return {
            "agent": self.agent,
            "task": self.task,
            "reported": self.reported.to_json(),
            "vote": self.vote,
            "declared_neighbors": sorted(self.declared_neighbors),
        }


@dataclass(frozen=True)
class DiffusionRecord:
    round: int
    sender: AgentId
    receiver: AgentId
    signal: CompetenceVector
    message: Optional[str] = None

    def to_json(self) -> dict:
        out = {"round": self.round, "sender": self.sender, "receiver": self.receiver, "signal": self.signal.to_json()}
        if self.message is not None:
            out["message"] = self.message
        return out


class DiffusionState:
    """Latest signal per ordered pair plus the full send log.

    A signal only overwrites the tasks it mentions, so a task-1 claim sent
    earlier survives a later task-2 claim from the same sender.
    """

    def __init__(self) -> None:
        self._latest: dict[tuple[AgentId, AgentId], CompetenceVector] = {}
        self._message: dict[tuple[AgentId, AgentId], Optional[str]] = {}
        self.log: list[DiffusionRecord] = []

    def send(self, round_: int, sender: AgentId, receiver: AgentId, signal: CompetenceVector, message: Optional[str] = None) -> None:
        key = (sender, receiver)
        prev = self._latest.get(key)
        self._latest[key] = signal if prev is None else prev.merged(signal)
        self._message[key] = message
        self.log.append(DiffusionRecord(round_, sender, receiver, signal, message))

    def latest(self, sender: AgentId, receiver: AgentId) -> Optional[CompetenceVector]:
        return self._latest.get((sender, receiver))

    def message(self, sender: AgentId, receiver: AgentId) -> Optional[str]:
        return self._message.get((sender, receiver))

    def observed(self, receiver: AgentId, sender: AgentId, task: TaskId) -> Optional[float]:
        vec = self._latest.get((sender, receiver))
        return None if vec is None else vec.get(task)

    def incoming(self, receiver: AgentId) -> dict[AgentId, CompetenceVector]:
        return {s: v for (s, r), v in self._latest.items() if r == receiver}

    def outgoing(self, sender: AgentId) -> dict[AgentId, CompetenceVector]:
        return {r: v for (s, r), v in self._latest.items() if s == sender}

    def records_for(self, receiver: AgentId, round_: int) -> list[DiffusionRecord]:
        return [r for r in self.log if r.receiver == receiver and r.round == round_]

    def pairs(self) -> list[tuple[AgentId, AgentId]]:
        return sorted(self._latest)

    def copy(self) -> "DiffusionState":
        dup = DiffusionState()
        dup._latest = dict(self._latest)
        dup._message = dict(self._message)
        dup.log = list(self.log)
        return dup


@dataclass
class PayoffHistory:
    by_agent: dict[AgentId, list[float]] = field(default_factory=dict)
    rounds: int = 0

    def record(self, payoffs: Mapping[AgentId, float], agents: Iterable[AgentId]) -> None:
        for a in agents:
            self.by_agent.setdefault(a, []).append(float(payoffs.get(a, 0.0)))
        self.rounds += 1

    def of(self, agent: AgentId) -> list[float]:
        return list(self.by_agent.get(agent, []))


@dataclass(frozen=True)
class Observation:
    payoff: float
    incoming: tuple[tuple[AgentId, CompetenceVector, Optional[str]], ...]
