"""Liquid-delegation routing with diffusion-auction payoffs."""

from __future__ import annotations

import json
from importlib import resources

from .ledger import DelegationForest, LedgerError, detect_cycles, resolve_delegations
from .model import (
    AgentSpec,
    CompetenceVector,
    ConfigError,
    DelegationAction,
    DiffusionState,
    GraphConfig,
    Observation,
    PayoffHistory,
    validate_config,
)
from .routing import RoutePath, build_feasible_paths, representative_delegate, route, select_winning_path
from .settlement import (
    ChainInvariantError,
    SettlementParams,
    SettlementReport,
    critical_set,
    order_chain,
    settle_round,
    task_payoff,
)
from .strategies import StrategyParameters, best_response_delegation, best_response_diffusion, competence_update

__version__ = "0.1.0"

FIXTURES = (
    "d1",
    "config1",
    "config2",
    "config3",
    "mmlu_pro",
    "openllm_v2",
    "swebench_strong",
    "swebench_weak",
    "multi_task",
)


def fixture_path(name: str):
    """Path of a bundled config; ``name`` with or without ``.json``."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in FIXTURES:
        raise KeyError(f"no bundled config named {name!r}")
    return resources.files(__package__).joinpath("configs", f"{stem}.json")


def load_fixture(name: str) -> GraphConfig:
    return GraphConfig.from_dict(json.loads(fixture_path(name).read_text()))
