"""Pull a structured action out of free-form model output."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Union

from ..model import AgentId, CompetenceVector, DelegationAction, TaskId, clamp01

log = logging.getLogger(__name__)

REQUIRED = {
    "delegation": ("delegate_to", "competence_for_payment"),
    "diffusion": ("should_diffuse", "neighbor_updates"),
}


class ActionParseError(ValueError):
    """No usable action object in a reply."""


@dataclass(frozen=True)
class DelegationChoice:
    vote: AgentId
    reported: dict[TaskId, float]
    reasoning: str = ""

    def to_action(self, agent: AgentId, task: TaskId, neighbors: frozenset[AgentId]) -> DelegationAction:
        return DelegationAction(agent, task, CompetenceVector.of(self.reported, clamp=True), self.vote, neighbors)


@dataclass(frozen=True)
class DiffusionChoice:
    should_diffuse: bool
    updates: dict[AgentId, dict[TaskId, float]] = field(default_factory=dict)
    reasoning: str = ""

    def signals(self) -> dict[AgentId, CompetenceVector]:
        if not self.should_diffuse:
            return {}
        return {j: CompetenceVector.of(v, clamp=True) for j, v in sorted(self.updates.items()) if v}


Choice = Union[DelegationChoice, DiffusionChoice]


def json_objects(text: str) -> Iterator[dict]:
    """Every top-level JSON object in ``text``, left to right."""
    dec = json.JSONDecoder()
    i = text.find("{")
    while i != -1:
        try:
            obj, end = dec.raw_decode(text, i)
        except json.JSONDecodeError:
            i = text.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            yield obj
        i = text.find("{", end)


def _int_id(value: Any, name: str) -> int:
    if isinstance(value, bool):
        raise ActionParseError(f"{name}: expected an integer id, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        s = value.strip()
        if s.lower().startswith("node"):
            s = s[4:].strip()
        if s.isdigit():
            return int(s)
    raise ActionParseError(f"{name}: expected an integer id, got {value!r}")


def _levels(raw: Any, name: str) -> dict[TaskId, float]:
    if not isinstance(raw, dict):
        raise ActionParseError(f"{name}: expected an object of task -> level, got {type(raw).__name__}")
    out = {}
    for key, val in raw.items():
        task = _int_id(key, f"{name} key")
        if task <= 0:
            raise ActionParseError(f"{name}: task id {key!r} must be positive")
        if isinstance(val, bool) or not isinstance(val, (int, float, str)):
            raise ActionParseError(f"{name}[{key!r}]: {val!r} is not a number")
        try:
            level = float(val)
        except ValueError:
            raise ActionParseError(f"{name}[{key!r}]: {val!r} is not a number") from None
        if level != level:
            raise ActionParseError(f"{name}[{key!r}]: NaN")
        out[task] = clamp01(level)
    return out


def _flag(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise ActionParseError(f"should_diffuse: expected a boolean, got {value!r}")


def _build(obj: dict, kind: str) -> Choice:
    reason = obj.get("reasoning", "")
    reason = reason if isinstance(reason, str) else json.dumps(reason)
    if kind == "delegation":
        return DelegationChoice(
            _int_id(obj["delegate_to"], "delegate_to"),
            _levels(obj["competence_for_payment"], "competence_for_payment"),
            reason,
        )
    updates_raw = obj["neighbor_updates"]
    if updates_raw is None:
        updates_raw = {}
    if not isinstance(updates_raw, dict):
        raise ActionParseError("neighbor_updates: expected an object")
    updates = {_int_id(j, "neighbor_updates key"): _levels(v, f"neighbor_updates[{j!r}]") for j, v in updates_raw.items()}
    return DiffusionChoice(_flag(obj["should_diffuse"]), updates, reason)


def parse_action_json(text: Optional[str], kind: str, fallback: Optional[Choice] = None) -> Choice:
    """First object in ``text`` carrying the fields ``kind`` requires.

    ``kind`` is ``"delegation"`` or ``"diffusion"``.  Values are clamped to
    [0, 1].  When nothing usable is found, ``fallback`` is returned (and
    the failure logged) if given, otherwise ActionParseError is raised.
    """
    if kind not in REQUIRED:
        raise ValueError(f"unknown action kind {kind!r}")
    need = REQUIRED[kind]
    first_error = None
    for obj in json_objects(text or ""):
        if not all(k in obj for k in need):
            missing = [k for k in need if k not in obj]
            first_error = first_error or f"object lacks {', '.join(missing)}"
            continue
        try:
            return _build(obj, kind)
        except ActionParseError as exc:
            first_error = first_error or str(exc)
    reason = first_error or ("empty reply" if not (text or "").strip() else "no JSON object found")
    if fallback is None:
        raise ActionParseError(f"{kind}: {reason}")
    log.warning("unparseable %s reply (%s); using fallback", kind, reason)
    return fallback
