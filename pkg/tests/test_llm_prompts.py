import os
import re
from pathlib import Path

import pytest

from liquidroute import load_fixture
from liquidroute.llm import MemoryEntry, render_delegation_prompt, render_diffusion_prompt, system_prompt
from liquidroute.llm.prompts import EMPTY_MEMORY, NO_SIGNALS
from liquidroute.model import CompetenceVector, DiffusionState
from liquidroute.strategies import make_view

from conftest import make_config

GOLDEN = Path(__file__).parent / "golden"


def golden(name, text):
    path = GOLDEN / name
    if os.environ.get("LIQUIDROUTE_REGEN_GOLDEN"):
        path.write_text(text, encoding="utf-8")
    assert text == path.read_text(encoding="utf-8")


def config1_view(signals=(), agent=2):
    cfg = load_fixture("config1")
    log = DiffusionState()
    for s, r, v in signals:
        log.send(1, s, r, CompetenceVector.of({1: v}))
    return make_view(cfg, log, agent, 1, request=(1,))


def test_round_one_shows_own_level():
    text = render_delegation_prompt(config1_view())
    assert "Your Actual Competence" in text
    assert '{"1": 0.3}' in text


def test_empty_memory_placeholder():
    text = render_delegation_prompt(config1_view())
    assert EMPTY_MEMORY in text
    assert NO_SIGNALS in text


def test_delegation_two_neighbors_golden():
    text = render_delegation_prompt(config1_view([(1, 2, 0.6), (3, 2, 0.5)]))
    assert "Node 1 (Primary Task 1)" in text and "Node 3 (Primary Task 1)" in text
    golden("delegation_two_neighbors.txt", text)


def test_memory_window():
    mem = [MemoryEntry(r, 1, 2, {1: 0.3}, payment=0.0) for r in (1, 2, 3)]
    text = render_delegation_prompt(config1_view(), mem, window=2)
    assert "Iteration 1 " not in text
    assert "Iteration 2 (Task 1): voted for yourself" in text and "Iteration 3" in text


def test_diffusion_golden():
    view = config1_view([(1, 2, 0.6), (3, 2, 0.5)])
    mem = [MemoryEntry(1, 1, 2, {1: 0.3}, payment=0.0, received={1: {1: 0.6}}, diffused={3: {1: 0.35}})]
    text = render_diffusion_prompt(view, 0.3, 1, {1: 0.6}, mem, on_winning_path=True)
    assert "You delegated to Node 1" in text
    assert "Your payment this iteration: 0.3000" in text
    golden("diffusion_two_neighbors.txt", text)


def test_diffusion_no_neighbors_golden():
    cfg = make_config({1: 0.7}, [])
    view = make_view(cfg, DiffusionState(), 1, 1, request=(1,))
    text = render_diffusion_prompt(view, 0.7, 1, {1: 0.7})
    assert "You voted for yourself" in text
    golden("diffusion_no_neighbors.txt", text)


def test_prompt_only_uses_local_information():
    """Levels of agents the node has not heard from never leak into its prompts."""
    cfg = load_fixture("d1")
    view = make_view(cfg, DiffusionState(), 11, cfg.agent(11).primary_task, request=(1, 2))
    own = set(re.findall(r"\d\.\d+", str(cfg.intrinsic(11).as_dict())))
    texts = render_delegation_prompt(view) + render_diffusion_prompt(view, None, 11, cfg.intrinsic(11).as_dict())
    for a in cfg.ids:
        for t, v in cfg.intrinsic(a).items():
            if a != 11 and str(v) not in own:
                assert f'"{t}": {v}' not in texts


def test_system_prompt_loaded():
    assert system_prompt().strip()


@pytest.mark.parametrize("name", ["delegation_two_neighbors.txt", "diffusion_two_neighbors.txt", "diffusion_no_neighbors.txt"])
def test_no_unfilled_fields(name):
    assert not re.search(r"\{[a-z_]+\}", (GOLDEN / name).read_text(encoding="utf-8"))
