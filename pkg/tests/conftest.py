import os

from hypothesis import HealthCheck, settings

from liquidroute.model import AgentSpec, CompetenceVector, DelegationAction, GraphConfig

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_config(levels, edges, tasks=None):
    """``levels`` maps id -> level on task 1 (or a full dict of task levels)."""
    agents = []
    for a, lv in levels.items():
        vec = lv if isinstance(lv, dict) else {1: lv}
        primary = (tasks or {}).get(a, min(vec) if vec else 1)
        agents.append(AgentSpec(a, primary, CompetenceVector.of(vec)))
    return GraphConfig.build(agents, edges)


def line(levels):
    """Path graph 1-2-...-n with the given task-1 levels."""
    n = len(levels)
    return make_config({i + 1: v for i, v in enumerate(levels)}, [(i, i + 1) for i in range(1, n)])


def act(agent, vote, report, task=1, neighbors=None, extra=None):
    rep = {task: report}
    rep.update(extra or {})
    declared = frozenset(neighbors if neighbors is not None else ({vote} - {agent}))
    return DelegationAction(agent, task, CompetenceVector.of(rep, clamp=True), vote, declared)


# one line per acceptance criterion, echoed again at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
