"""External agents inside the simulation, and divergence from best response."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ..model import AgentId, CompetenceVector, DelegationAction, GraphConfig, TaskId
from ..simulation import BestResponsePolicy, Policy, RoundContext, SimulationParameters, SimulationState, run_iteration
from ..strategies import AgentView, StrategyParameters
from .client import ChatClient, ExternalAgentConfig, TransportError
from .mock import MockEndpoint, ReplayBook
from .parsing import DelegationChoice, DiffusionChoice, parse_action_json
from .prompts import MemoryEntry, render_delegation_prompt, render_diffusion_prompt, system_prompt

log = logging.getLogger(__name__)

BeforeSend = Callable[[str, str], None]


@dataclass
class Decision:
    """One agent's choices for one task in one round.

    ``diffusion`` is the agent's outgoing table after the round: what each
    neighbor holds from it per task, counting earlier sends that were not
    overwritten.
    """

    round: int
    agent: AgentId
    task: TaskId
    vote: AgentId
    reported: dict[TaskId, float]
    diffusion: dict[tuple[AgentId, TaskId], float] = field(default_factory=dict)

    @property
    def key(self) -> tuple[int, AgentId, TaskId]:
        return self.round, self.agent, self.task

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "agent": self.agent,
            "task": self.task,
            "vote": self.vote,
            "reported": {str(t): v for t, v in sorted(self.reported.items())},
            "diffusion": [[j, t, v] for (j, t), v in sorted(self.diffusion.items())],
        }


def _table(outgoing: Mapping[AgentId, CompetenceVector]) -> dict[tuple[AgentId, TaskId], float]:
    return {(j, t): v for j, vec in outgoing.items() for t, v in vec.items()}


def _apply(table: dict, signals: Mapping[AgentId, CompetenceVector]) -> dict:
    out = dict(table)
    for j, vec in signals.items():
        for t, v in vec.items():
            out[(j, t)] = v
    return out


def delegation_reply(action: DelegationAction, reasoning: str = "best response") -> str:
    return json.dumps(
        {"delegate_to": action.vote, "competence_for_payment": action.reported.to_json(), "reasoning": reasoning}
    )


def diffusion_reply(signals: Mapping[AgentId, CompetenceVector], reasoning: str = "best response") -> str:
    return json.dumps(
        {
            "should_diffuse": bool(signals),
            "neighbor_updates": {str(j): v.to_json() for j, v in sorted(signals.items())},
            "reasoning": reasoning,
        }
    )


def _round_of(view: AgentView) -> int:
    return len(view.payoffs) + 1


class _Recorder:
    def __init__(self) -> None:
        self.records: list[Decision] = []
        self._open: dict[TaskId, Decision] = {}

    def _open_record(self, view: AgentView, action: DelegationAction) -> Decision:
        rec = Decision(_round_of(view), view.agent, view.task, action.vote, action.reported.as_dict(), _table(view.outgoing))
        self.records.append(rec)
        self._open[view.task] = rec
        return rec


class RecordingPolicy(_Recorder):
    """Wraps a policy and keeps the trajectory of its decisions."""

    def __init__(self, inner: Policy):
        super().__init__()
        self.inner = inner

    def delegate(self, view: AgentView) -> DelegationAction:
        action = self.inner.delegate(view)
        self._open_record(view, action)
        return action

    def diffuse(self, view: AgentView, ctx: RoundContext):
        out = dict(self.inner.diffuse(view, ctx))
        rec = self._open.get(view.task)
        if rec is not None:
            rec.diffusion = _apply(_table(view.outgoing), {j: v for j, v in out.items() if j in view.neighbors})
        return out


class LLMPolicy(_Recorder):
    """Asks an external model for every delegation and diffusion decision.

    Alongside each call the best response for the very same view is
    computed; those form the decision-level reference in
    ``reference_records``.  ``before_send(prompt, reference_reply)`` runs
    before each request, which is how a replaying mock learns its answer.
    """

    def __init__(
        self,
        agent: AgentId,
        client: ChatClient,
        config: GraphConfig,
        strategy: StrategyParameters = StrategyParameters(),
        ratchet: bool = True,
        before_send: Optional[BeforeSend] = None,
    ):
        super().__init__()
        self.agent = agent
        self.client = client
        self.window = client.cfg.memory_window
        self.neighbor_tasks = {j: config.agent(j).primary_task for j in config.neighbors(agent)}
        self.reference = RecordingPolicy(BestResponsePolicy(strategy, ratchet))
        self.before_send = before_send
        self.memory: list[MemoryEntry] = []
        self.failures = 0
        self.prompts: list[str] = []
        self._last: dict[TaskId, DelegationChoice] = {}

    @property
    def reference_records(self) -> list[Decision]:
        return self.reference.records

    def _ask(self, prompt: str, reference_reply: str) -> Optional[str]:
        self.prompts.append(prompt)
        if self.before_send is not None:
            self.before_send(prompt, reference_reply)
        try:
            return self.client.complete(system_prompt(), prompt)
        except TransportError as exc:
            self.failures += 1
            log.warning("agent %s: %s; using fallback", self.agent, exc)
            return None

    def _settle_memory(self, payoffs: Sequence[float]) -> None:
        for e in self.memory:
            if e.payment is None and e.round <= len(payoffs):
                e.payment = payoffs[e.round - 1]

    def delegate(self, view: AgentView) -> DelegationAction:
        self._settle_memory(view.payoffs)
        ref = self.reference.delegate(view)
        prompt = render_delegation_prompt(view, self.memory, self.window)
        text = self._ask(prompt, delegation_reply(ref))
        fallback = self._last.get(view.task) or DelegationChoice(view.agent, view.intrinsic.as_dict())
        choice = parse_action_json(text, "delegation", fallback)
        if choice is fallback:
            self.failures += text is not None
        self._last[view.task] = choice
        action = choice.to_action(view.agent, view.task, view.neighbors)
        self._open_record(view, action)
        self.memory.append(
            MemoryEntry(
                _round_of(view),
                view.task,
                action.vote,
                action.reported.as_dict(),
                received={j: v.as_dict() for j, v in sorted(view.incoming.items())},
            )
        )
        return action

    def diffuse(self, view: AgentView, ctx: RoundContext) -> dict[AgentId, CompetenceVector]:
        ref = self.reference.diffuse(view, ctx)
        now = _round_of(view)
        winner = ctx.outcome.winner
        prompt = render_diffusion_prompt(
            view,
            ctx.settlement.total(view.agent),
            ctx.action.vote,
            ctx.action.reported,
            [e for e in self.memory if e.round < now],
            self.neighbor_tasks,
            winner is not None and view.agent in winner.members(),
            self.window,
        )
        text = self._ask(prompt, diffusion_reply(ref))
        fallback = DiffusionChoice(False)
        choice = parse_action_json(text, "diffusion", fallback)
        if choice is fallback:
            self.failures += text is not None
        signals = {j: v for j, v in choice.signals().items() if j in view.neighbors}
        rec = self._open.get(view.task)
        if rec is not None:
            rec.diffusion = _apply(_table(view.outgoing), signals)
        for e in reversed(self.memory):
            if e.round == now and e.task == view.task:
                e.diffused = {j: v.as_dict() for j, v in signals.items()}
                e.payment = ctx.settlement.total(view.agent)
                break
        return signals


# --- metrics -------------------------------------------------------------------------


@dataclass(frozen=True)
class IterationDelta:
    round: int
    agent: AgentId
    task: TaskId
    vote_match: bool
    report_delta: float
    diffusion_delta: float

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "agent": self.agent,
            "task": self.task,
            "vote_match": self.vote_match,
            "report_delta": self.report_delta,
            "diffusion_delta": self.diffusion_delta,
        }


@dataclass(frozen=True)
class DivergenceReport:
    match_pct: float
    reporting_mae: float
    diffusion_mae: float
    iterations: tuple[IterationDelta, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.match_pct <= 100.0:
            raise ValueError("match percentage outside [0, 100]")
        if self.reporting_mae < 0 or self.diffusion_mae < 0:
            raise ValueError("MAE must be non-negative")

    def row(self) -> tuple[float, float, float]:
        """(reporting MAE, diffusion MAE, match %) in table order."""
        return self.reporting_mae, self.diffusion_mae, self.match_pct

    def to_json(self) -> dict:
        return {
            "delegation_match_pct": self.match_pct,
            "reporting_mae": self.reporting_mae,
            "diffusion_mae": self.diffusion_mae,
            "iterations": [d.to_json() for d in self.iterations],
        }


def _abs_diffs(a: Mapping, b: Mapping) -> list[float]:
    return [abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in sorted(set(a) | set(b))]


def divergence_metrics(trajectory: Sequence[Decision], reference: Sequence[Decision]) -> DivergenceReport:
    """Compare two aligned decision sequences.

    Match % counts rounds with the same vote target.  Each MAE pools
    absolute differences over rounds and tasks (and, for diffusion,
    neighbors); an entry missing on one side reads as 0.
    """
    if len(trajectory) != len(reference):
        raise ValueError(f"trajectory length mismatch: {len(trajectory)} vs {len(reference)}")
    if not trajectory:
        raise ValueError("empty trajectories")
    deltas, rep_all, dif_all = [], [], []
    for x, y in zip(trajectory, reference):
        if x.key != y.key:
            raise ValueError(f"trajectories not aligned: {x.key} vs {y.key}")
        rep = _abs_diffs(x.reported, y.reported)
        dif = _abs_diffs(x.diffusion, y.diffusion)
        rep_all += rep
        dif_all += dif
        deltas.append(
            IterationDelta(
                x.round,
                x.agent,
                x.task,
                x.vote == y.vote,
                float(np.mean(rep)) if rep else 0.0,
                float(np.mean(dif)) if dif else 0.0,
            )
        )
    match = 100.0 * sum(d.vote_match for d in deltas) / len(deltas)
    return DivergenceReport(
        match,
        float(np.mean(rep_all)) if rep_all else 0.0,
        float(np.mean(dif_all)) if dif_all else 0.0,
        tuple(deltas),
    )


# --- benchmark runs ----------------------------------------------------------------------


@dataclass
class BenchResult:
    nodes: tuple[AgentId, ...]
    decision: DivergenceReport
    trajectory: DivergenceReport
    records: list[Decision]
    decision_reference: list[Decision]
    trajectory_reference: list[Decision]
    failures: int = 0
    requests: int = 0

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "decision_level": self.decision.to_json(),
            "trajectory_level": self.trajectory.to_json(),
            "failures": self.failures,
            "requests": self.requests,
            "records": [r.to_json() for r in self.records],
            "trajectory_reference": [r.to_json() for r in self.trajectory_reference],
        }

    def lines(self) -> list[str]:
        out = []
        for name, rep in (("decision", self.decision), ("trajectory", self.trajectory)):
            out.append(
                f"{name:<10}  reporting MAE {rep.reporting_mae:.4f}  "
                f"diffusion MAE {rep.diffusion_mae:.4f}  delegation match {rep.match_pct:.1f}%"
            )
        return out


def bench_parameters(config: GraphConfig, iterations: int = 20, **kw) -> SimulationParameters:
    kw.setdefault("request", tuple(config.tasks()))
    return SimulationParameters(iterations=iterations, replications=1, **kw)


def run_llm_bench(
    config: GraphConfig,
    agent_cfg: ExternalAgentConfig,
    nodes: Sequence[AgentId] = (2,),
    params: Optional[SimulationParameters] = None,
    before_send: Optional[BeforeSend] = None,
) -> BenchResult:
    """Run ``params.iterations`` rounds with ``nodes`` handed to the endpoint.

    The decision-level reference is best response on the states the
    external agents produced; the trajectory-level reference is a separate
    all-best-response run on the same config.
    """
    params = params or bench_parameters(config)
    nodes = tuple(sorted(set(nodes)))
    for n in nodes:
        if n not in config:
            raise ValueError(f"node {n} is not in the config")
    llm = {
        n: LLMPolicy(n, ChatClient(agent_cfg), config, params.strategy, params.ratchet, before_send) for n in nodes
    }
    state = SimulationState.start(config, params, llm)
    for _ in range(params.iterations):
        run_iteration(state)

    shadow = {n: RecordingPolicy(BestResponsePolicy(params.strategy, params.ratchet)) for n in nodes}
    ref_state = SimulationState.start(config, params, shadow)
    for _ in range(params.iterations):
        run_iteration(ref_state)

    records = [r for n in nodes for r in llm[n].records]
    local = [r for n in nodes for r in llm[n].reference_records]
    independent = [r for n in nodes for r in shadow[n].records]
    return BenchResult(
        nodes,
        divergence_metrics(records, local),
        divergence_metrics(records, independent),
        records,
        local,
        independent,
        failures=sum(p.failures for p in llm.values()),
        requests=sum(p.client.calls for p in llm.values()),
    )


def run_mock_bench(
    config: GraphConfig,
    nodes: Sequence[AgentId] = (2,),
    params: Optional[SimulationParameters] = None,
    model: str = "best-response-replay",
) -> BenchResult:
    """Benchmark through a local endpoint that replays best-response actions."""
    book = ReplayBook()
    with MockEndpoint(book) as mock:
        cfg = ExternalAgentConfig(endpoint=mock.url, model=model, timeout=10.0)
        result = run_llm_bench(config, cfg, nodes, params, before_send=book.register)
    if book.misses:
        log.warning("mock endpoint missed %d prompts", book.misses)
    return result
