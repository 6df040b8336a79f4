import pytest

from liquidroute import load_fixture
from liquidroute.settlement import SettlementParams, ordered_multiplier
from liquidroute.strategies import StrategyParameters
from liquidroute.verify import (
    capable_components,
    contiguity_violations,
    domain_routing,
    ic_violations,
    random_single_task_config,
    verify_theorems,
)

from conftest import make_config

COARSE = StrategyParameters(delta=0.05, delta_r=0.05)


def inverted(successor, own, alpha):
    return -ordered_multiplier(successor, own, alpha)


def test_config1_clean():
    rep = verify_theorems(load_fixture("config1"), strategy=COARSE)
    assert rep.ok, rep.lines()
    assert rep.converged_round <= 20


def test_single_agent_clean():
    assert verify_theorems(make_config({1: 0.4}, [])).ok


def test_inverted_payoff_caught():
    """A settlement with the multiplier sign flipped must trip the IC check."""
    viol, checked = ic_violations(load_fixture("config2"), settlement=SettlementParams(multiplier=inverted), strategy=COARSE)
    assert checked > 0 and viol


def test_contiguity_on_fixture():
    viol, checked = contiguity_violations(load_fixture("config3"))
    assert checked > 1 and not viol


def test_random_graphs_ic_clean():
    import numpy as np

    rng = np.random.default_rng(7)
    for _ in range(20):
        viol, _ = ic_violations(random_single_task_config(rng))
        assert not viol


def test_components_sorted():
    cfg = make_config({1: 0.5, 2: 0.5, 3: 0.5, 4: {2: 0.3}}, [(1, 2), (3, 4)], tasks={4: 2})
    assert capable_components(cfg, 1) == [(1, 2), (3,)]


def test_domain_routing_finds_best():
    out = domain_routing(load_fixture("swebench_strong"))
    assert out and all(o.ok for o in out)


def test_isolated_best_agent_is_infeasible():
    cfg = make_config({1: 0.2, 2: 0.3, 3: 0.9}, [(1, 2)])
    (o,) = domain_routing(cfg)
    assert not o.feasible and not o.ok and not o.violation
    assert "3" in o.blocking()
