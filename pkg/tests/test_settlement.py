import pytest
from hypothesis import given, strategies as st

from liquidroute import load_fixture
from liquidroute.ledger import resolve_delegations
from liquidroute.model import CompetenceVector, DiffusionState
from liquidroute.routing import route
from liquidroute.settlement import (
    ChainInvariantError,
    CriticalChain,
    SettlementParams,
    critical_set,
    infeasibility_penalty,
    misreport_penalty,
    order_chain,
    settle_round,
    task_payoff,
)
from liquidroute.simulation import sweep_diffusion

from conftest import act, make_config


def test_lone_guru_critical():
    cfg = make_config({1: 0.6}, [])
    acts = [act(1, 1, 0.6)]
    w = route([1], acts, cfg).winner
    assert critical_set(w, acts, cfg, [1]) == {1}


def five_node():
    """Chain 1 -> 2 -> 3 against a rival pair 4 -> 5."""
    cfg = make_config({a: 0.5 for a in range(1, 6)}, [(1, 2), (2, 3), (3, 4), (4, 5)])
    acts = [act(1, 2, 0.5), act(2, 3, 0.5), act(3, 3, 0.5), act(4, 5, 0.5), act(5, 5, 0.5)]
    return cfg, acts


def test_tie_break_makes_middle_agent_critical():
    cfg, acts = five_node()
    w = route([1], acts, cfg).winner
    assert w.gurus == (3,)
    assert critical_set(w, acts, cfg, [1]) == {2, 3}


def test_d1_critical_includes_node10_and_predecessor():
    from liquidroute.simulation import PinnedPolicy, RelayPolicy, SimulationParameters, SimulationState, run_until_stable

    cfg = load_fixture("d1")
    params = SimulationParameters(iterations=1, replications=1, request=(1, 2), ratchet=False)
    policies = {a: RelayPolicy() for a in cfg.ids}
    policies[10] = PinnedPolicy(0.7)
    state, rec, _ = run_until_stable(SimulationState.start(cfg, params, policies), 20)
    crit = rec.settlement.critical[2]
    forest = rec.outcome.forests[2]
    assert 10 in crit
    assert any(forest.vote_of.get(a) == 10 and a != 10 for a in crit)


def _forest_chain():
    cfg = make_config({a: 0.5 for a in (1, 2, 3)}, [(1, 2), (2, 3)])
    return resolve_delegations([act(1, 2, 0.5), act(2, 3, 0.5), act(3, 3, 0.5)], cfg, 1)


def test_order_chain():
    f = _forest_chain()
    assert order_chain({3}, 1, f).agents == (3,)
    assert order_chain({3, 1, 2}, 1, f).agents == (1, 2, 3)
    with pytest.raises(ChainInvariantError):
        order_chain({1, 3}, 1, f)


def test_payoff_examples():
    chain = CriticalChain(2, (11, 10), (0.7, 0.9))
    assert task_payoff(chain, true_guru_competence=0.9)[10] == pytest.approx(0.2)
    chain = CriticalChain(2, (11, 10), (0.8, 0.9))
    assert task_payoff(chain, true_guru_competence=0.9)[10] == pytest.approx(0.1)


def test_solitary_guru_payoff():
    assert task_payoff(CriticalChain(1, (4,), (0.35,)), base_cost=0.25) == {4: pytest.approx(0.6)}


def test_irrational_order_multiplied():
    """A predecessor reporting above its successor pays alpha times its increment."""
    pay = task_payoff(CriticalChain(1, (1, 2), (0.6, 0.5)), alpha=100, true_guru_competence=0.5)
    assert pay[1] == pytest.approx(-60.0)
    assert pay[2] == pytest.approx(-0.1)


def test_rational_chain_payoffs():
    pay = task_payoff(CriticalChain(1, (1, 2, 3), (0.4, 0.6, 0.9)), true_guru_competence=0.9)
    assert [pay[a] for a in (1, 2, 3)] == pytest.approx([0.4, 0.2, 0.3])
    assert sum(pay.values()) == pytest.approx(0.9)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.floats(0, 5))
def test_telescoping(reports, c):
    reps = sorted(reports)
    chain = CriticalChain(1, tuple(range(1, len(reps) + 1)), tuple(reps))
    pay = task_payoff(chain, base_cost=c, true_guru_competence=reps[-1])
    assert sum(pay.values()) == pytest.approx(c + reps[-1], abs=1e-12)
    assert all(v >= 0 for v in pay.values())


@given(st.lists(st.floats(0, 1), min_size=2, max_size=6))
def test_any_inversion_costs(reports):
    chain = CriticalChain(1, tuple(range(1, len(reports) + 1)), tuple(reports))
    pay = task_payoff(chain, true_guru_competence=reports[-1])
    for i in range(len(reports) - 1):
        if reports[i + 1] < reports[i]:
            prev = reports[i - 1] if i else 0.0
            assert pay[i + 1] == pytest.approx(-100 * (reports[i] - prev))


def _two_nodes():
    return make_config({1: {1: 0.6, 2: 0.3}, 2: {2: 0.7}}, [(1, 2)], tasks={1: 1, 2: 2})


def test_truthful_no_misreport_penalty():
    cfg = _two_nodes()
    assert misreport_penalty(1, [act(1, 1, 0.6, extra={2: 0.3}, neighbors={2})], None, {}, 100, cfg) == 0


def test_strategic_claim_exempt():
    cfg = _two_nodes()
    log = DiffusionState()
    log.send(0, 2, 1, CompetenceVector.of({2: 0.7}))
    a = act(1, 1, 0.6, extra={2: 0.7}, neighbors={2})
    assert misreport_penalty(1, [a], log, {}, 100, cfg) == 0


def test_uncovered_claim_penalized():
    cfg = _two_nodes()
    a = act(1, 1, 0.6, extra={2: 0.7}, neighbors={2})
    assert misreport_penalty(1, [a], DiffusionState(), {}, 100, cfg) == pytest.approx(40)


def test_infeasibility_penalties():
    cfg = make_config({1: {1: 0.5}, 2: {1: 0.5}, 3: {2: 0.5}}, [(1, 2)], tasks={3: 2})
    honest = act(1, 1, 0.5, neighbors={2}, extra={2: 0.5})
    assert infeasibility_penalty(1, [honest], cfg, 100) == 0
    fake = act(1, 1, 0.5, neighbors={2, 3}, extra={2: 0.2, 3: 0.3})
    assert infeasibility_penalty(1, [fake], cfg, 100) == pytest.approx(50)


def test_failed_bridge_penalized():
    """Node 1's only declared edge goes to a node that cannot do task 2."""
    cfg = make_config({1: {1: 0.5}, 2: {1: 0.5}, 3: {2: 0.5}}, [(1, 2), (2, 3)], tasks={3: 2})
    acts = [
        act(1, 1, 0.5, neighbors={2}, extra={2: 0.4}),
        act(2, 2, 0.5, neighbors={1, 3}),
        act(3, 3, 0.5, task=2, neighbors={2}),
    ]
    out = route([1, 2], acts, cfg)
    rep = settle_round(out.winner, acts, cfg, [1, 2], outcome=out)
    assert rep.agents[1].infeasibility_penalty == pytest.approx(40)
    assert rep.agents[2].infeasibility_penalty == 0


def test_no_feasible_path_settlement():
    cfg = make_config({1: {1: 0.5}, 2: {2: 0.5}}, [], tasks={2: 2})
    acts = [act(1, 1, 0.5, neighbors=set()), act(2, 2, 0.5, task=2, neighbors=set())]
    rep = settle_round(None, acts, cfg, [1, 2])
    assert rep.realized == {}
    assert all(v <= 0 for v in rep.totals().values())


def test_d1_round_node10_payoff():
    assert sweep_diffusion(load_fixture("d1"), 10, [0.7])[0].payoff == pytest.approx(0.2)


def test_broken_chain_policy():
    with pytest.raises(ValueError):
        SettlementParams(broken_chain="ignore")
    with pytest.raises(ValueError):
        SettlementParams(alpha=0)
    with pytest.raises(ValueError):
        SettlementParams(scaling=lambda x: 1 - x)
