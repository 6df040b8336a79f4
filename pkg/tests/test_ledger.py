from hypothesis import given, strategies as st

from liquidroute import load_fixture
from liquidroute.ledger import detect_cycles, resolve_delegations
from liquidroute.simulation import sweep_diffusion

from conftest import act, line, make_config


def complete(n, level=0.5):
    return make_config({i: level for i in range(1, n + 1)}, [(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)])


def votes(mapping, level=0.5):
    return [act(a, v, level, neighbors=set(mapping) - {a}) for a, v in mapping.items()]


def test_all_self_votes():
    cfg = complete(4)
    f = resolve_delegations(votes({a: a for a in range(1, 5)}), cfg, 1)
    assert f.gurus == {1, 2, 3, 4}
    assert all(v == 1 for v in f.votes.values())
    assert all(not p for p in f.pool.values())


def test_transitive_chain():
    f = resolve_delegations(votes({1: 2, 2: 3, 3: 3}), complete(3), 1)
    assert f.gurus == {3}
    assert f.pool[3] == {1, 2}
    assert f.votes[3] == 3
    assert f.path_to_guru(1) == [1, 2, 3]


def test_d1_node10_collects_four_votes():
    """Relaying 0.7 from node 10 pulls three voters onto it."""
    row = sweep_diffusion(load_fixture("d1"), 10, [0.7])[0]
    assert row.votes == 4


def test_detect_cycles():
    assert detect_cycles(votes({1: 2, 2: 1})) == {1, 2}
    assert detect_cycles(votes({1: 2, 2: 3, 3: 3})) == set()
    assert detect_cycles(votes({1: 2, 2: 3, 3: 2})) == {1, 2, 3}


def test_cycle_votes_are_lost():
    f = resolve_delegations(votes({1: 2, 2: 3, 3: 2, 4: 4}), complete(4), 1)
    assert f.cyclic_agents == {1, 2, 3}
    assert f.gurus == {4} and f.votes[4] == 1


def test_vote_to_non_neighbor_becomes_self_vote(caplog):
    cfg = line([0.5, 0.5, 0.5])
    f = resolve_delegations([act(1, 3, 0.5, neighbors={3}), act(2, 2, 0.5), act(3, 3, 0.5)], cfg, 1)
    assert 1 in f.gurus and 1 in f.rejected
    assert "rejected" in caplog.text


def test_incapable_target_rejected():
    cfg = make_config({1: {1: 0.5}, 2: {1: 0.0, 2: 0.6}}, [(1, 2)], tasks={2: 2})
    f = resolve_delegations([act(1, 2, 0.5), act(2, 2, 0.0)], cfg, 1)
    assert f.vote_of[1] == 1


@st.composite
def vote_maps(draw):
    n = draw(st.integers(1, 9))
    return {a: draw(st.integers(1, n)) for a in range(1, n + 1)}


@given(vote_maps())
def test_votes_conserved(mapping):
    """Every agent is counted once: in a guru's tally or among the lost."""
    n = len(mapping)
    f = resolve_delegations(votes(mapping), complete(n), 1)
    assert sum(f.votes.values()) + len(f.cyclic_agents) == n
    for g in f.gurus:
        assert f.votes[g] == len(f.pool[g]) + 1
        assert g not in f.pool[g]


@given(vote_maps())
def test_cycles_match_forest(mapping):
    f = resolve_delegations(votes(mapping), complete(len(mapping)), 1)
    assert detect_cycles(votes(mapping)) == set(f.cyclic_agents)


@given(vote_maps())
def test_pools_disjoint(mapping):
    f = resolve_delegations(votes(mapping), complete(len(mapping)), 1)
    seen = set()
    for g in f.gurus:
        assert not (f.members(g) & seen)
        seen |= f.members(g)
