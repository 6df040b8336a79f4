"""Multi-round dynamics, replication harness and metric collection."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

from .model import (
    AgentId,
    AgentSpec,
    CompetenceVector,
    DelegationAction,
    DiffusionState,
    GraphConfig,
    PayoffHistory,
    TaskId,
)
from .routing import RouteOutcome, route
from .settlement import SettlementParams, SettlementReport, settle_round
from .strategies import (
    AgentView,
    StrategyParameters,
    best_response_delegation,
    best_response_diffusion,
    competence_update,
    make_view,
    relay_diffusion,
)

METRICS = ("mean_reported", "realized", "max_competence", "mean_intrinsic", "intermediary_payoff")


def sample_competence(rng: np.random.Generator) -> float:
    """Squashed log-normal draw: z ~ LogNormal(-1, 1), c = z / (1 + z)."""
    z = rng.lognormal(mean=-1.0, sigma=1.0)
    return float(np.clip(z / (1.0 + z), 0.0, 1.0))


def sample_two_task_config(
    rng: np.random.Generator, nodes: int = 17, edge_prob: float = 0.2, tasks: int = 2
) -> GraphConfig:
    """Random connected graph with agents split evenly across ``tasks``.

    A random spanning tree keeps the graph connected; every other pair is
    joined with probability ``edge_prob`` regardless of task, so intra-
    and inter-task edges appear in proportion to the split.
    """
    order = rng.permutation(nodes) + 1
    task_of = {int(a): (i % tasks) + 1 for i, a in enumerate(order)}
    agents = [
        AgentSpec(a, task_of[a], CompetenceVector.of({task_of[a]: sample_competence(rng)}))
        for a in range(1, nodes + 1)
    ]
    edges = set()
    perm = [int(x) + 1 for x in rng.permutation(nodes)]
    for i in range(1, nodes):
        j = int(rng.integers(0, i))
        a, b = perm[i], perm[j]
        edges.add((min(a, b), max(a, b)))
    for a in range(1, nodes + 1):
        for b in range(a + 1, nodes + 1):
            if rng.random() < edge_prob:
                edges.add((a, b))
    return GraphConfig.build(agents, sorted(edges))


# --- policies ------------------------------------------------------------------


@dataclass
class RoundContext:
    """What an agent learns after settlement, before it diffuses."""

    round: int
    action: DelegationAction
    outcome: RouteOutcome
    settlement: SettlementReport


class Policy(Protocol):
    def delegate(self, view: AgentView) -> DelegationAction: ...

    def diffuse(self, view: AgentView, ctx: RoundContext) -> Mapping[AgentId, object]: ...


@dataclass
class BestResponsePolicy:
    params: StrategyParameters = field(default_factory=StrategyParameters)
    ratchet: bool = True

    def delegate(self, view: AgentView) -> DelegationAction:
        if not self.ratchet:
            view = replace(view, report_level=None)
        return best_response_delegation(view)

    def diffuse(self, view: AgentView, ctx: RoundContext) -> dict[AgentId, CompetenceVector]:
        return best_response_diffusion(view, self.params)


@dataclass
class RelayPolicy:
    """Best-response votes; forwards what it hears, originates nothing."""

    def delegate(self, view: AgentView) -> DelegationAction:
        return best_response_delegation(replace(view, report_level=None))

    def diffuse(self, view: AgentView, ctx: RoundContext) -> dict[AgentId, CompetenceVector]:
        return relay_diffusion(view)


@dataclass
class PinnedPolicy:
    """Sends a fixed level on its task to every same-task neighbor each round."""

    level: float

    def delegate(self, view: AgentView) -> DelegationAction:
        return best_response_delegation(replace(view, report_level=None))

    def diffuse(self, view: AgentView, ctx: RoundContext) -> dict[AgentId, CompetenceVector]:
        sig = CompetenceVector.of({view.task: self.level}, clamp=True)
        return {j: sig for j in sorted(view.task_neighbors)}


# --- state and pipeline ------------------------------------------------------------


@dataclass(frozen=True)
class SimulationParameters:
    iterations: int = 50
    replications: int = 100
    seed: int = 0
    strategy: StrategyParameters = field(default_factory=StrategyParameters)
    settlement: SettlementParams = field(default_factory=SettlementParams)
    request: tuple[TaskId, ...] = (1, 2)
    nodes: int = 17
    edge_prob: float = 0.2
    ratchet: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.replications < 1:
            raise ValueError("iterations and replications must be at least 1")
        if not self.request:
            raise ValueError("request must name at least one task")

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "replications": self.replications,
            "seed": self.seed,
            "delta": self.strategy.delta,
            "epsilon": self.strategy.epsilon,
            "delta_r": self.strategy.delta_r,
            "advertise": self.strategy.advertise,
            "alpha": self.settlement.alpha,
            "base_cost": self.settlement.base_cost,
            "request": list(self.request),
            "nodes": self.nodes,
            "edge_prob": self.edge_prob,
            "ratchet": self.ratchet,
        }


@dataclass
class RoundRecord:
    round: int
    actions: list[DelegationAction]
    outcome: RouteOutcome
    settlement: SettlementReport
    signals: list[tuple[AgentId, AgentId, CompetenceVector, Optional[str]]]
    metrics: dict[str, float]

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "actions": [a.to_json() for a in self.actions],
            "forests": {str(t): f.to_json() for t, f in sorted(self.outcome.forests.items())},
            "cyclic": sorted(set().union(*(f.cyclic_agents for f in self.outcome.forests.values()))),
            "winner": None if self.outcome.winner is None else self.outcome.winner.to_json(),
            "settlement": self.settlement.to_json(),
            "signals": [
                {"sender": s, "receiver": r, "signal": v.to_json(), **({"message": m} if m is not None else {})}
                for s, r, v, m in self.signals
            ],
            "metrics": self.metrics,
        }


@dataclass
class SimulationState:
    config: GraphConfig
    request: tuple[TaskId, ...]
    params: SimulationParameters
    policies: dict[AgentId, Policy] = field(default_factory=dict)
    diffusion: DiffusionState = field(default_factory=DiffusionState)
    levels: dict[tuple[AgentId, TaskId], float] = field(default_factory=dict)
    history: PayoffHistory = field(default_factory=PayoffHistory)
    round: int = 0
    metrics: list[dict[str, float]] = field(default_factory=list)
    keep_records: bool = False
    records: list[RoundRecord] = field(default_factory=list)

    @classmethod
    def start(
        cls,
        config: GraphConfig,
        params: SimulationParameters,
        policies: Optional[Mapping[AgentId, Policy]] = None,
        request: Optional[Sequence[TaskId]] = None,
        keep_records: bool = False,
    ) -> "SimulationState":
        req = tuple(request if request is not None else params.request)
        st = cls(config, req, params, keep_records=keep_records)
        for a, t in participants(config, req):
            st.levels[(a, t)] = config.intrinsic(a)[t]
        default = BestResponsePolicy(params.strategy, params.ratchet)
        st.policies = {a: default for a in config.ids}
        if policies:
            st.policies.update(policies)
        return st

    def view(self, agent: AgentId, task: TaskId) -> AgentView:
        return make_view(
            self.config,
            self.diffusion,
            agent,
            task,
            self.history.of(agent),
            self.levels.get((agent, task)),
            self.request,
        )


def participants(config: GraphConfig, request: Sequence[TaskId]) -> list[tuple[AgentId, TaskId]]:
    return [(a, t) for t in dict.fromkeys(request) for a in sorted(config.capable(t))]


def _as_signal(value) -> tuple[CompetenceVector, Optional[str]]:
    if isinstance(value, tuple):
        return value[0], value[1]
    return value, None


def collect_actions(state: SimulationState) -> list[DelegationAction]:
    return [state.policies[a].delegate(state.view(a, t)) for a, t in participants(state.config, state.request)]


def round_metrics(
    state: SimulationState, actions: Sequence[DelegationAction], settlement: SettlementReport
) -> dict[str, float]:
    cfg, tasks = state.config, list(dict.fromkeys(state.request))
    reported = [a.reported[a.task] for a in actions]
    intrinsic = [cfg.intrinsic(a.agent)[a.task] for a in actions]
    best = [max((cfg.intrinsic(a)[t] for a in cfg.capable(t)), default=0.0) for t in tasks]
    realized = [settlement.realized.get(t, 0.0) for t in tasks] if settlement.winner is not None else [0.0] * len(tasks)
    inter = []
    for t, chain in settlement.chains.items():
        for a in chain.agents[:-1]:
            inter.append(settlement.agents[a].task_payoff.get(t, 0.0))
    return {
        "mean_reported": float(np.mean(reported)) if reported else 0.0,
        "realized": float(np.mean(realized)),
        "max_competence": float(np.mean(best)),
        "mean_intrinsic": float(np.mean(intrinsic)) if intrinsic else 0.0,
        "intermediary_payoff": float(np.mean(inter)) if inter else 0.0,
    }


def run_iteration(state: SimulationState) -> tuple[SimulationState, RoundRecord]:
    """One round: delegate, route, settle, diffuse, update report levels."""
    cfg, req = state.config, state.request
    state.round += 1
    pairs = participants(cfg, req)
    views = {(a, t): state.view(a, t) for a, t in pairs}

    # (1) delegation, simultaneous from the frozen prior state
    actions = [state.policies[a].delegate(views[(a, t)]) for a, t in pairs]
    # (2, 3) paths and winner
    outcome = route(req, actions, cfg)
    # (4) critical agents and settlement
    report = settle_round(outcome.winner, actions, cfg, req, state.params.settlement, state.diffusion, outcome)
    state.history.record(report.totals(), cfg.ids)

    # (5) diffusion by non-critical agents
    critical = set().union(*report.critical.values()) if report.critical else set()
    winning = outcome.winner.members() if outcome.winner is not None else frozenset()
    own_action = {(a.agent, a.task): a for a in actions}
    outgoing: dict[tuple[AgentId, AgentId], tuple[CompetenceVector, Optional[str]]] = {}
    for a, t in pairs:
        if a in critical:
            continue
        ctx = RoundContext(state.round, own_action[(a, t)], outcome, report)
        forest = outcome.forests[t]
        # votes only count as secured while they carry the agent onto the winning path
        backers = frozenset(j for j, v in forest.vote_of.items() if v == a and j != a) if a in winning else frozenset()
        view = replace(views[(a, t)], supporters=backers)
        for j, raw in state.policies[a].diffuse(view, ctx).items():
            if j not in cfg.neighbors(a):
                continue
            vec, msg = _as_signal(raw)
            key = (a, j)
            if key in outgoing:
                prev, pmsg = outgoing[key]
                outgoing[key] = (prev.merged(vec), msg or pmsg)
            else:
                outgoing[key] = (vec, msg)
    sent = []
    for (a, j), (vec, msg) in sorted(outgoing.items()):
        state.diffusion.send(state.round, a, j, vec, msg)
        sent.append((a, j, vec, msg))

    # (6) report-level update against the new signals
    for a, t in pairs:
        state.levels[(a, t)] = competence_update(state.view(a, t), state.params.strategy)

    metrics = round_metrics(state, actions, report)
    state.metrics.append(metrics)
    record = RoundRecord(state.round, actions, outcome, report, sent, metrics)
    if state.keep_records:
        state.records.append(record)
    return state, record


def profile_key(record: RoundRecord, state: SimulationState) -> tuple:
    """Everything that must repeat for the dynamics to count as converged."""
    acts = tuple((a.agent, a.task, a.vote, a.reported.items()) for a in record.actions)
    sig = tuple((k, state.diffusion.latest(*k).items()) for k in state.diffusion.pairs())
    return acts, sig


def run_until_stable(state: SimulationState, max_rounds: int = 200) -> tuple[SimulationState, RoundRecord, int]:
    """Iterate until votes, reports and the latest signals stop changing.

    Returns the final state, the last round record and the round at which
    the profile first repeated (``max_rounds + 1`` if it never did).
    """
    prev = None
    record = None
    for n in range(1, max_rounds + 1):
        state, record = run_iteration(state)
        key = profile_key(record, state)
        if key == prev:
            return state, record, n - 1
        prev = key
    return state, record, max_rounds + 1


# --- replications --------------------------------------------------------------------


@dataclass
class MetricsSeries:
    values: np.ndarray  # (replications, iterations, metrics)
    names: tuple[str, ...] = METRICS

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.values.std(axis=0)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, :, self.names.index(name)]

    def to_csv(self) -> str:
        lines = ["iteration," + ",".join(self.names)]
        for i, row in enumerate(self.mean, start=1):
            lines.append(f"{i}," + ",".join(f"{v:.10f}" for v in row))
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "replications": int(self.values.shape[0]),
            "iterations": int(self.values.shape[1]),
            "metrics": {
                name: {
                    "mean": [round(float(v), 12) for v in self.mean[:, k]],
                    "std": [round(float(v), 12) for v in self.std[:, k]],
                }
                for k, name in enumerate(self.names)
            },
        }


def run_replication(
    params: SimulationParameters,
    r: int,
    config: Optional[GraphConfig] = None,
    sampler: Optional[Callable[[np.random.Generator], GraphConfig]] = None,
    keep_records: bool = False,
) -> SimulationState:
    rng = np.random.default_rng(params.seed + r)
    if config is None:
        config = sampler(rng) if sampler else sample_two_task_config(rng, params.nodes, params.edge_prob, len(set(params.request)))
    state = SimulationState.start(config, params, keep_records=keep_records)
    for _ in range(params.iterations):
        run_iteration(state)
    return state


def _replication_rows(args) -> list[list[float]]:
    params, r, config = args
    state = run_replication(params, r, config)
    return [[m[k] for k in METRICS] for m in state.metrics]


def run_replications(
    params: SimulationParameters, config: Optional[GraphConfig] = None, workers: Optional[int] = None
) -> MetricsSeries:
    """Run ``params.replications`` independent runs; replication r is seeded with seed + r."""
    jobs = [(params, r, config) for r in range(params.replications)]
    workers = params.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replication_rows, jobs))
    else:
        rows = [_replication_rows(j) for j in jobs]
    return MetricsSeries(np.asarray(rows, dtype=float))


# --- single-node diffusion sweep ----------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    level: float
    votes: int
    feasible: bool
    winning: bool
    payoff: float

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "votes": self.votes,
            "feasible": self.feasible,
            "winning": self.winning,
            "payoff": self.payoff,
        }


def sweep_diffusion(
    config: GraphConfig,
    node: AgentId,
    levels: Iterable[float],
    request: Optional[Sequence[TaskId]] = None,
    settlement: SettlementParams = SettlementParams(),
    max_rounds: Optional[int] = None,
) -> list[SweepRow]:
    """Fix one agent's diffused level and read off where it ends up.

    The swept node sends the level on its primary task to its same-task
    neighbors every round.  Everyone else votes by best response and only
    forwards levels they have received, so the swept node is the sole
    source of new information.  Rounds repeat until the profile is stable;
    the last round is settled.
    """
    task = config.agent(node).primary_task
    if request is None:
        request = [t for t in config.tasks() if t <= task] or [task]
    params = SimulationParameters(iterations=1, replications=1, settlement=settlement, request=tuple(request), ratchet=False)
    rows = []
    for level in levels:
        policies = {a: RelayPolicy() for a in config.ids}
        policies[node] = PinnedPolicy(level)
        state = SimulationState.start(config, params, policies)
        state, record, _ = run_until_stable(state, max_rounds or len(config) + 2)
        forest = record.outcome.forests[task]
        votes = forest.votes.get(node, 0)
        feasible = any(node in p.gurus for p in record.outcome.feasible)
        winner = record.outcome.winner
        winning = winner is not None and node in winner.gurus
        rows.append(SweepRow(level, votes, feasible, winning, record.settlement.total(node)))
    return rows


def dump_rounds(records: Iterable[RoundRecord]) -> str:
    return "\n".join(json.dumps(r.to_json(), sort_keys=True) for r in records) + "\n"
