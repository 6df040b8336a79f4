"""Prompt templates and their fill-in from an agent's local view."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping, Optional, Sequence

from ..model import AgentId, CompetenceVector, TaskId
from ..strategies import AgentView

EMPTY_MEMORY = "No previous iterations yet."
NO_SIGNALS = "No competence information received yet."
NO_NEIGHBORS = "None"


@lru_cache(maxsize=None)
def template(name: str) -> str:
    """Raw template text: ``system``, ``delegation`` or ``diffusion``."""
    return resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


def system_prompt() -> str:
    return template("system")


def _levels(vec: CompetenceVector | Mapping[TaskId, float]) -> str:
    items = vec.items() if isinstance(vec, CompetenceVector) else sorted(vec.items())
    return json.dumps({str(t): float(v) for t, v in items})


@dataclass
class MemoryEntry:
    """One iteration of an agent's own history, as it saw it."""

    round: int
    task: TaskId
    vote: AgentId
    reported: dict[TaskId, float]
    payment: Optional[float] = None
    diffused: dict[AgentId, dict[TaskId, float]] = field(default_factory=dict)
    received: dict[AgentId, dict[TaskId, float]] = field(default_factory=dict)

    def render(self, agent: AgentId) -> str:
        who = "voted for yourself" if self.vote == agent else f"delegated to Node {self.vote}"
        parts = [f"Iteration {self.round} (Task {self.task}): {who}", f"reported {_levels(self.reported)}"]
        parts.append("payment unknown" if self.payment is None else f"payment {self.payment:.4f}")
        if self.received:
            parts.append("received " + ", ".join(f"Node {j} {_levels(v)}" for j, v in sorted(self.received.items())))
        if self.diffused:
            parts.append("diffused " + ", ".join(f"Node {j} {_levels(v)}" for j, v in sorted(self.diffused.items())))
        else:
            parts.append("diffused nothing")
        return "- " + "; ".join(parts)


def render_memory(agent: AgentId, memory: Sequence[MemoryEntry], window: Optional[int] = None) -> str:
    entries = list(memory)
    if window is not None:
        entries = entries[-window:] if window > 0 else []
    if not entries:
        return EMPTY_MEMORY
    return "\n".join(e.render(agent) for e in entries)


def _neighbor_lines(view: AgentView, ids: Sequence[AgentId], tasks: Mapping[AgentId, TaskId]) -> str:
    lines = []
    for j in ids:
        vec = view.incoming.get(j)
        if vec is None or not len(vec):
            continue
        lines.append(f"- Node {j} (Primary Task {tasks.get(j, view.task)}): Competence = {_levels(vec)}")
    return "\n".join(lines) if lines else NO_SIGNALS


def _id_list(ids) -> str:
    ids = sorted(ids)
    return "[" + ", ".join(str(i) for i in ids) + "]" if ids else NO_NEIGHBORS


def render_delegation_prompt(
    view: AgentView,
    memory: Sequence[MemoryEntry] = (),
    window: Optional[int] = None,
) -> str:
    """Delegation template filled from ``view`` and the agent's own memory.

    Only same-task neighbors that have sent something are listed.
    """
    tasks = list(view.request) or [view.task]
    return template("delegation").format(
        node_id=view.agent,
        primary_task=view.task,
        intrinsic_competence=_levels(view.intrinsic),
        tasks="[" + ", ".join(str(t) for t in dict.fromkeys(tasks)) + "]",
        memory_info=render_memory(view.agent, memory, window),
        neighbors_info=_neighbor_lines(view, sorted(view.task_neighbors), {}),
    )


def render_diffusion_prompt(
    view: AgentView,
    payment: Optional[float],
    vote: AgentId,
    reported: CompetenceVector | Mapping[TaskId, float],
    memory: Sequence[MemoryEntry] = (),
    neighbor_tasks: Optional[Mapping[AgentId, TaskId]] = None,
    on_winning_path: bool = False,
    window: Optional[int] = None,
) -> str:
    """Diffusion template for the round whose delegation is already fixed.

    ``neighbor_tasks`` gives other neighbors' primary tasks (public
    topology); same-task neighbors default to the agent's own task.
    """
    tasks = dict(neighbor_tasks or {})
    for j in view.task_neighbors:
        tasks[j] = view.task
    delegated = "You voted for yourself" if vote == view.agent else f"You delegated to Node {vote}"
    if payment is None:
        status = "No payment information for this iteration."
    elif on_winning_path:
        status = f"You were on the winning path. Your payment this iteration: {payment:.4f}"
    else:
        status = f"You were not on the winning path. Your payment this iteration: {payment:.4f}"
    return template("diffusion").format(
        node_id=view.agent,
        primary_task=view.task,
        intrinsic_competence=_levels(view.intrinsic),
        delegated_to_info=delegated,
        competence_for_payment_info=_levels(reported),
        memory_info=render_memory(view.agent, memory, window),
        payment_status=status,
        same_task_neighbors=_id_list(view.task_neighbors),
        diff_task_neighbors=_id_list(view.neighbors - view.task_neighbors),
        neighbors_competence_info=_neighbor_lines(view, sorted(view.neighbors), tasks),
    )
