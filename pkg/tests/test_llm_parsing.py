import json

import pytest
from hypothesis import given, strategies as st

from liquidroute.llm import ActionParseError, DelegationChoice, DiffusionChoice, parse_action_json
from liquidroute.llm.parsing import json_objects

EXAMPLE = '{"delegate_to": 5, "competence_for_payment": {"1": 0.7}, "reasoning": "Node 5 has the best record"}'

# (reply, expected vote, expected report on task 1)
RECOVERABLE = [
    ("```json\n" + EXAMPLE + "\n```\nThat is my final answer.", 5, 0.7),
    ("Sure! Here you go:\n" + EXAMPLE, 5, 0.7),
    (EXAMPLE + "\n\nLet me know if you need anything else.", 5, 0.7),
    ("```\n" + EXAMPLE + "\n```", 5, 0.7),
    ('{"thinking": "hmm"} then ' + EXAMPLE, 5, 0.7),
    ('{"delegate_to": "5", "competence_for_payment": {"1": "0.7"}}', 5, 0.7),
    ('{"delegate_to": "Node 5", "competence_for_payment": {"1": 0.7}}', 5, 0.7),
    ('{"delegate_to": 5.0, "competence_for_payment": {"1": 0.7}}', 5, 0.7),
    ('{"delegate_to": 5, "competence_for_payment": {"1": 1.4}}', 5, 1.0),
    ('{"delegate_to": 5, "competence_for_payment": {"1": -0.2}}', 5, 0.0),
    ('{"delegate_to": 5,\n  "competence_for_payment": {"1": 0.7},\n  "reasoning": {"why": "nested"}}', 5, 0.7),
    ('{"delegate_to": 3, "competence_for_payment": {1: 0.7}} {"delegate_to": 5, "competence_for_payment": {"1": 0.7}}', 5, 0.7),
    ('{"delegate_to": true, "competence_for_payment": {"1": 0.2}}' + EXAMPLE, 5, 0.7),
    ("<answer>" + EXAMPLE + "</answer>", 5, 0.7),
]

BROKEN = [
    "",
    "   \n",
    "I would delegate to node 5 with 0.7.",
    '{"delegate_to": 5}',
    '{"delegate_to": 5, "competence_for_payment": 0.7}',
    '{"delegate_to": 5, "competence_for_payment": {"1": "high"}}',
]


def test_corpus_size():
    assert len(RECOVERABLE) + len(BROKEN) == 20


def test_paper_style_example():
    c = parse_action_json(EXAMPLE, "delegation")
    assert c.vote == 5 and c.reported == {1: 0.7}
    assert c.to_action(2, 1, frozenset({5})).vote == 5


@pytest.mark.parametrize("reply,vote,level", RECOVERABLE)
def test_recoverable(reply, vote, level):
    c = parse_action_json(reply, "delegation")
    assert (c.vote, c.reported[1]) == (vote, level)


@pytest.mark.parametrize("reply", BROKEN)
def test_broken_falls_back(reply, caplog):
    prior = DelegationChoice(2, {1: 0.3})
    assert parse_action_json(reply, "delegation", fallback=prior) is prior
    assert "fallback" in caplog.text


@pytest.mark.parametrize("reply", BROKEN)
def test_broken_raises_without_fallback(reply):
    with pytest.raises(ActionParseError):
        parse_action_json(reply, "delegation")


def test_diffusion_reply():
    c = parse_action_json('{"should_diffuse": true, "neighbor_updates": {"2": {"1": 0.7}, "5": {"1": 0.5}}}', "diffusion")
    assert {j: v[1] for j, v in c.signals().items()} == {2: 0.7, 5: 0.5}


def test_diffusion_off_ignores_updates():
    c = parse_action_json('{"should_diffuse": "false", "neighbor_updates": {"2": {"1": 0.7}}}', "diffusion")
    assert c.signals() == {}


def test_empty_diffusion_fallback():
    none = DiffusionChoice(False)
    assert parse_action_json(None, "diffusion", fallback=none) is none


def test_unknown_kind():
    with pytest.raises(ValueError):
        parse_action_json(EXAMPLE, "payment")


@given(st.integers(1, 500), st.dictionaries(st.integers(1, 9), st.floats(0, 1), min_size=1), st.text(max_size=40))
def test_roundtrip_any_wrapping(vote, levels, noise):
    """A valid object survives arbitrary brace-free prose on both sides."""
    noise = noise.replace("{", "").replace("}", "")
    body = json.dumps({"delegate_to": vote, "competence_for_payment": {str(k): v for k, v in levels.items()}})
    c = parse_action_json(noise + body + noise, "delegation")
    assert c.vote == vote and c.reported == levels


@given(st.text(max_size=200))
def test_never_crashes(text):
    try:
        parse_action_json(text, "delegation")
    except ActionParseError:
        pass
    assert all(isinstance(o, dict) for o in json_objects(text))
