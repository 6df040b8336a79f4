"""Bridge to external chat-completion agents and divergence benchmarking."""

from .bench import (
    BenchResult,
    Decision,
    DivergenceReport,
    IterationDelta,
    LLMPolicy,
    RecordingPolicy,
    divergence_metrics,
    run_llm_bench,
    run_mock_bench,
)
from .client import API_KEY_ENV, ChatClient, ExternalAgentConfig, TransportError
from .mock import MockEndpoint, ReplayBook
from .parsing import ActionParseError, DelegationChoice, DiffusionChoice, parse_action_json
from .prompts import MemoryEntry, render_delegation_prompt, render_diffusion_prompt, system_prompt
