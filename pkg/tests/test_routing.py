import pytest
from hypothesis import given, strategies as st

from liquidroute import load_fixture
from liquidroute.ledger import resolve_delegations
from liquidroute.routing import RoutePath, Segment, build_feasible_paths, representative_delegate, route, select_winning_path
from liquidroute.simulation import sweep_diffusion

from conftest import act, make_config


def two_task(levels, edges):
    return make_config(levels, edges)


def test_singleton_pool_delegate():
    cfg = make_config({1: 0.5}, [])
    acts = [act(1, 1, 0.5)]
    f = resolve_delegations(acts, cfg, 1)
    assert representative_delegate(1, f, acts, [1, 2], 0) == 1


def _pool_case(a_down, b_down):
    cfg = make_config({1: {1: 0.3, 2: 0.1}, 2: {1: 0.3, 2: 0.1}, 3: {1: 0.9}}, [(1, 3), (2, 3)])
    acts = [
        act(1, 3, 0.9, extra={2: a_down}),
        act(2, 3, 0.9, extra={2: b_down}),
        act(3, 3, 0.9, neighbors={1, 2}),
    ]
    return representative_delegate(3, resolve_delegations(acts, cfg, 1), acts, [1, 2], 0)


def test_delegate_largest_downstream():
    assert _pool_case(0.9 / 1, 1.0) == 2
    assert _pool_case(0.8, 0.8) == 1


def test_delegate_sums_all_later_tasks():
    cfg = make_config({1: 0.3, 2: 0.3, 3: 0.9}, [(1, 3), (2, 3)])
    acts = [act(1, 3, 0.9, extra={2: 0.5, 3: 0.4}), act(2, 3, 0.9, extra={2: 0.6, 3: 0.0}), act(3, 3, 0.9, neighbors={1, 2})]
    f = resolve_delegations(acts, cfg, 1)
    assert representative_delegate(3, f, acts, [1, 2, 3], 0) == 1


def test_single_task_paths():
    cfg = make_config({1: 0.5, 2: 0.5, 3: 0.9}, [(1, 3), (2, 3)])
    acts = [act(1, 3, 0.9), act(2, 2, 0.5), act(3, 3, 0.9)]
    out = route([1], acts, cfg)
    assert {p.gurus: p.total_votes for p in out.feasible} == {(2,): 1, (3,): 2}
    assert out.winner.gurus == (3,)


def _bridge_config(bridge=True):
    levels = {
        1: {1: 0.4}, 2: {1: 0.5}, 3: {1: 0.9},
        4: {2: 0.4}, 5: {2: 0.8},
    }
    edges = [(1, 3), (2, 3), (4, 5)] + ([(1, 4)] if bridge else [])
    return make_config(levels, edges)


def _bridge_actions():
    return [
        act(1, 3, 0.9, neighbors={3, 4}, extra={2: 0.8}),
        act(2, 3, 0.9),
        act(3, 3, 0.9, neighbors={1, 2}),
        act(4, 5, 0.8, task=2, neighbors={1, 5}),
        act(5, 5, 0.8, task=2, neighbors={4}),
    ]


def test_two_task_bridge():
    """Guru 3 (3 votes) crosses through delegate 1 into guru 5's pool (2 votes)."""
    cfg = _bridge_config()
    acts = _bridge_actions()
    forests = {t: resolve_delegations(acts, cfg, t) for t in (1, 2)}
    paths = build_feasible_paths([1, 2], forests, acts, cfg)
    assert [(p.gurus, p.total_votes, p.bridges) for p in paths] == [((3, 5), 5, ((1, 4),))]


def test_no_cross_edge_infeasible():
    cfg = _bridge_config(bridge=False)
    acts = _bridge_actions()
    acts[0] = act(1, 3, 0.9, neighbors={3}, extra={2: 0.8})
    out = route([1, 2], acts, cfg)
    assert out.feasible == [] and out.winner is None
    assert out.attempts[0].delegate == 1 and out.attempts[0].target is None


def _path(gurus, votes):
    return RoutePath(tuple(Segment(k + 1, g, frozenset()) for k, g in enumerate(gurus)), (), votes)


def test_select_winner():
    p = _path((1,), 1)
    assert select_winning_path([p]) is p
    assert select_winning_path([_path((2,), 3), _path((1,), 5)]).total_votes == 5
    assert select_winning_path([]) is None


def test_tie_goes_to_smaller_gurus():
    assert select_winning_path([_path((4, 1), 3), _path((2, 9), 3), _path((2, 7), 3)]).gurus == (2, 7)


@pytest.mark.xfail(strict=True, reason="relay dynamics leave node 10 outside every feasible path at 0.6; known mismatch, see decisions ledger")
def test_d1_feasible_not_winning():
    row = sweep_diffusion(load_fixture("d1"), 10, [0.6])[0]
    assert row.feasible and not row.winning


@given(st.lists(st.tuples(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(1, 20)), min_size=1, max_size=8))
def test_winner_has_max_votes(specs):
    paths = [_path(tuple(g), v) for g, v in specs]
    w = select_winning_path(paths)
    assert w.total_votes == max(p.total_votes for p in paths)
    assert all(w.gurus <= p.gurus for p in paths if p.total_votes == w.total_votes)


@given(st.dictionaries(st.integers(1, 6), st.floats(0.05, 1), min_size=1))
def test_complete_graph_single_task_total_votes(levels):
    """On one task every guru yields one path carrying exactly its votes."""
    ids = sorted(levels)
    cfg = make_config(levels, [(a, b) for a in ids for b in ids if a < b])
    top = max(ids, key=lambda a: (levels[a], -a))
    acts = [act(a, top, levels[top], neighbors=set(ids) - {a}) for a in ids]
    out = route([1], acts, cfg)
    assert [(p.gurus, p.total_votes) for p in out.feasible] == [((top,), len(ids))]
