"""Command-line front end.

Exit codes: 0 ok, 1 usage or runtime failure, 2 invalid config or
parameters, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import FIXTURES, __version__, fixture_path
from .model import ConfigError, GraphConfig
from .settlement import SettlementParams
from .simulation import (
    MetricsSeries,
    METRICS,
    SimulationParameters,
    dump_rounds,
    run_replication,
    run_replications,
    sweep_diffusion,
)
from .strategies import StrategyParameters

log = logging.getLogger("liquidroute.cli")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3
ENDPOINT_ENV = "LIQUIDROUTE_ENDPOINT"


class UsageError(Exception):
    pass


class ConfigParseError(ConfigError):
    """A config file is not valid JSON; the message carries line context."""


# --- config ingestion ------------------------------------------------------------


def resolve_config_path(name: str) -> Path:
    """An existing file, else a bundled fixture of that name."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in FIXTURES and p.parent == Path("."):
        return Path(str(fixture_path(stem)))
    raise FileNotFoundError(f"config {name!r} not found (bundled: {', '.join(FIXTURES)})")


def parse_config_text(text: str, source: str = "<config>") -> GraphConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        context = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigParseError(
            f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {context}\n    {' ' * (exc.colno - 1)}^"
        ) from None
    try:
        return GraphConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | os.PathLike) -> GraphConfig:
    """Read and validate a graph config (JSON, shaped like the bundled fixtures)."""
    p = resolve_config_path(str(path))
    return parse_config_text(p.read_text(encoding="utf-8"), str(path))


# --- manifest --------------------------------------------------------------------


@dataclass
class RunManifest:
    """Everything needed to rerun a command and get the same bytes back."""

    command: str
    argv: list[str]
    parameters: dict
    seed: Optional[int]
    config: Optional[dict]
    config_checksum: Optional[str]
    outputs: list[str] = field(default_factory=list)
    engine_version: str = __version__

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "argv": self.argv,
            "parameters": self.parameters,
            "seed": self.seed,
            "config": self.config,
            "config_checksum": self.config_checksum,
            "outputs": self.outputs,
            "engine_version": self.engine_version,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunManifest":
        return cls(
            data["command"],
            list(data["argv"]),
            dict(data.get("parameters", {})),
            data.get("seed"),
            data.get("config"),
            data.get("config_checksum"),
            list(data.get("outputs", [])),
            data.get("engine_version", __version__),
        )


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Outputs:
    """Collects result files for one run and writes them plus the manifest."""

    def __init__(self, root: Optional[str]):
        self.root = None if root is None else Path(root)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def write(self, manifest: RunManifest) -> list[Path]:
        if self.root is None:
            return []
        self.root.mkdir(parents=True, exist_ok=True)
        manifest.outputs = sorted(self.files) + ["manifest.json"]
        written = []
        for name, text in sorted(self.files.items()):
            path = self.root / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
        path = self.root / "manifest.json"
        path.write_text(_dump(manifest.to_json()), encoding="utf-8")
        written.append(path)
        return written


# --- argument parsing ----------------------------------------------------------------


class Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _add_mechanism(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("mechanism")
    g.add_argument("--alpha", type=float, default=100.0, help="penalty multiplier (default 100)")
    g.add_argument("--base-cost", type=float, default=0.0, help="cost paid to the executing guru")


def _add_strategy(p: argparse.ArgumentParser, delta: float = 0.02, delta_r: float = 0.02) -> None:
    g = p.add_argument_group("strategy")
    g.add_argument("--delta", type=float, default=delta, help=f"diffusion step (default {delta})")
    g.add_argument("--epsilon", type=float, default=0.001, help="equilibrium signalling margin")
    g.add_argument("--delta-r", type=float, default=delta_r, help=f"report ratchet step (default {delta_r})")


def build_parser() -> Parser:
    parser = Parser(prog="liquidroute", description="Delegation routing and settlement experiments.")
    parser.add_argument("--version", action="version", version=f"liquidroute {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log ledger warnings")
    sub = parser.add_subparsers(dest="command", parser_class=Parser, required=True)

    sim = sub.add_parser("simulate", help="run replications and write per-iteration metrics")
    sim.add_argument("--config", help="graph config; omitted means a fresh random graph per replication")
    sim.add_argument("--request", type=_int_list, default=(1, 2), help="task sequence, e.g. 1,2")
    sim.add_argument("--iterations", type=int, default=50)
    sim.add_argument("--replications", type=int, default=100)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--nodes", type=int, default=17, help="agents per random graph")
    sim.add_argument("--edge-prob", type=float, default=0.2)
    sim.add_argument("--workers", type=int, default=1, help="parallel replication processes")
    sim.add_argument("--output", default="results/simulate")
    sim.add_argument("--dump-rounds", action="store_true", help="also write every round as JSON lines")
    _add_mechanism(sim)
    _add_strategy(sim)

    sw = sub.add_parser("sweep-diffusion", help="pin one node's diffused level and tabulate the outcome")
    sw.add_argument("--config", required=True)
    sw.add_argument("--node", type=int, required=True)
    sw.add_argument("--levels", type=_float_list, required=True, help="e.g. 0.4,0.5,0.6")
    sw.add_argument("--request", type=_int_list, default=None)
    sw.add_argument("--output", default=None, help="directory for sweep.csv/json and the manifest")
    _add_mechanism(sw)

    ver = sub.add_parser("verify", help="brute-force incentive, contiguity and deviation checks")
    ver.add_argument("--config", required=True)
    ver.add_argument("--request", type=_int_list, default=None, help="tasks to check (default: all)")
    ver.add_argument("--grid-step", type=float, default=0.01)
    ver.add_argument("--iterations", type=int, default=20, help="round budget for convergence")
    ver.add_argument("--output", default=None)
    _add_mechanism(ver)
    # coarser steps so the small fixtures settle inside the 20-round budget
    _add_strategy(ver, delta=0.05, delta_r=0.05)

    llm = sub.add_parser("llm-bench", help="divergence of external agents from best response")
    llm.add_argument("--config", required=True)
    llm.add_argument("--node", type=int, action="append", help="node handed to the endpoint (repeatable; default 2)")
    llm.add_argument(
        "--endpoint",
        default=None,
        help=f"chat-completion URL, or 'mock' for the built-in replay server (default ${ENDPOINT_ENV})",
    )
    llm.add_argument("--model", default="best-response-replay")
    llm.add_argument("--iterations", type=int, default=20)
    llm.add_argument("--request", type=_int_list, default=None)
    llm.add_argument("--seed", type=int, default=0)
    llm.add_argument("--timeout", type=float, default=60.0)
    llm.add_argument("--memory-window", type=int, default=None, help="iterations of history in prompts (default all)")
    llm.add_argument("--output", default=None)
    _add_mechanism(llm)
    _add_strategy(llm)

    rep = sub.add_parser("replay", help="rerun a command from its manifest")
    rep.add_argument("--manifest", required=True)
    rep.add_argument("--output", default=None, help="override the output directory")
    return parser


# --- commands ------------------------------------------------------------------------


def _settlement(args) -> SettlementParams:
    return SettlementParams(alpha=args.alpha, base_cost=args.base_cost)


def _strategy(args) -> StrategyParameters:
    return StrategyParameters(delta=args.delta, epsilon=args.epsilon, delta_r=args.delta_r)


def _manifest(args, argv, config: Optional[GraphConfig], params: dict, seed=None) -> RunManifest:
    return RunManifest(
        args.command,
        list(argv),
        params,
        seed,
        None if config is None else config.to_dict(),
        None if config is None else config.checksum(),
    )


def _finish(out: Outputs, manifest: RunManifest, stdout) -> None:
    for path in out.write(manifest):
        print(f"wrote {path}", file=stdout)


def command_simulate(args, argv, config: Optional[GraphConfig], stdout) -> int:
    params = SimulationParameters(
        iterations=args.iterations,
        replications=args.replications,
        seed=args.seed,
        strategy=_strategy(args),
        settlement=_settlement(args),
        request=tuple(args.request),
        nodes=args.nodes,
        edge_prob=args.edge_prob,
        workers=args.workers,
    )
    out = Outputs(args.output)
    if args.dump_rounds:
        rows, dumps = [], []
        for r in range(params.replications):
            state = run_replication(params, r, config, keep_records=True)
            rows.append([[m[k] for k in METRICS] for m in state.metrics])
            dumps.append(_tag_replication(dump_rounds(state.records), r))
        series = MetricsSeries(np.asarray(rows, dtype=float))
        out.add("rounds.jsonl", "".join(dumps))
    else:
        series = run_replications(params, config)
    out.add("metrics.csv", series.to_csv())
    out.add("metrics.json", _dump(series.to_json()))
    mean = series.mean
    print(f"{params.replications} replication(s) x {params.iterations} iteration(s)", file=stdout)
    for k, name in enumerate(METRICS):
        print(f"  {name:<22} first {mean[0, k]:.4f}  last {mean[-1, k]:.4f}", file=stdout)
    _finish(out, _manifest(args, argv, config, params.to_json(), params.seed), stdout)
    return EXIT_OK


def _tag_replication(block: str, r: int) -> str:
    lines = []
    for line in block.splitlines():
        obj = json.loads(line)
        obj["replication"] = r
        lines.append(json.dumps(obj, sort_keys=True))
    return "\n".join(lines) + "\n"


def sweep_table(rows) -> str:
    yn = lambda b: "yes" if b else "no"  # noqa: E731
    lines = [f"{'level':>6} {'votes':>6} {'feasible':>9} {'winning':>8} {'payoff':>10}"]
    for r in rows:
        lines.append(f"{r.level:>6.2f} {r.votes:>6d} {yn(r.feasible):>9} {yn(r.winning):>8} {round(r.payoff, 10):>10.4f}")
    return "\n".join(lines)


def command_sweep(args, argv, config: GraphConfig, stdout) -> int:
    if args.node not in config:
        raise ConfigError(f"node {args.node} is not in the config")
    rows = sweep_diffusion(config, args.node, args.levels, args.request, _settlement(args))
    print(sweep_table(rows), file=stdout)
    out = Outputs(args.output)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "votes", "feasible", "winning", "payoff"])
    for r in rows:
        w.writerow([r.level, r.votes, int(r.feasible), int(r.winning), repr(round(r.payoff, 10))])
    out.add("sweep.csv", buf.getvalue())
    out.add("sweep.json", _dump([{**r.to_json(), "payoff": round(r.payoff, 10)} for r in rows]))
    params = {
        "node": args.node,
        "levels": list(args.levels),
        "request": None if args.request is None else list(args.request),
        "alpha": args.alpha,
        "base_cost": args.base_cost,
    }
    _finish(out, _manifest(args, argv, config, params), stdout)
    return EXIT_OK


def command_verify(args, argv, config: GraphConfig, stdout) -> int:
    from .verify import verify_theorems

    report = verify_theorems(
        config,
        grid_step=args.grid_step,
        strategy=_strategy(args),
        settlement=_settlement(args),
        tasks=args.request,
        max_rounds=args.iterations,
    )
    converged = report.converged_round is None or report.converged_round <= args.iterations
    for line in report.lines():
        print(line, file=stdout)
    if not converged:
        print(f"best response did not settle within {args.iterations} rounds", file=stdout)
    ok = report.ok and converged
    print("OK" if ok else "VIOLATIONS FOUND", file=stdout)
    out = Outputs(args.output)
    out.add("verify.json", _dump({**report.to_json(), "converged": converged}))
    params = {
        "grid_step": args.grid_step,
        "iterations": args.iterations,
        "request": None if args.request is None else list(args.request),
        "alpha": args.alpha,
        "base_cost": args.base_cost,
        "delta": args.delta,
        "epsilon": args.epsilon,
        "delta_r": args.delta_r,
    }
    _finish(out, _manifest(args, argv, config, params), stdout)
    return EXIT_OK if ok else EXIT_VERIFY


def command_llm_bench(args, argv, config: GraphConfig, stdout) -> int:
    from .llm.bench import bench_parameters, run_llm_bench, run_mock_bench
    from .llm.client import ExternalAgentConfig

    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise UsageError(f"llm-bench: no endpoint given (use --endpoint or set {ENDPOINT_ENV})")
    nodes = tuple(args.node or (2,))
    for n in nodes:
        if n not in config:
            raise ConfigError(f"node {n} is not in the config")
    kw = dict(seed=args.seed, strategy=_strategy(args), settlement=_settlement(args))
    if args.request:
        kw["request"] = tuple(args.request)
    params = bench_parameters(config, args.iterations, **kw)
    if endpoint == "mock":
        result = run_mock_bench(config, nodes, params, model=args.model)
    else:
        cfg = ExternalAgentConfig(endpoint, args.model, timeout=args.timeout, memory_window=args.memory_window)
        result = run_llm_bench(config, cfg, nodes, params)
    print(f"nodes {list(nodes)}, {params.iterations} iterations, {result.requests} requests, {result.failures} fallbacks", file=stdout)
    for line in result.lines():
        print(line, file=stdout)
    out = Outputs(args.output)
    out.add("llm_bench.json", _dump(result.to_json()))
    manifest_params = {
        **params.to_json(),
        "nodes": list(nodes),
        "endpoint": endpoint,
        "model": args.model,
        "timeout": args.timeout,
        "memory_window": args.memory_window,
    }
    _finish(out, _manifest(args, argv, config, manifest_params, args.seed), stdout)
    return EXIT_OK


COMMANDS = {
    "simulate": command_simulate,
    "sweep-diffusion": command_sweep,
    "verify": command_verify,
    "llm-bench": command_llm_bench,
}


def _run(argv: Sequence[str], stdout, embedded_config: Optional[dict] = None, output: Optional[str] = None) -> int:
    args = build_parser().parse_args(list(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        data = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        manifest = RunManifest.from_json(data)
        return _run(manifest.argv, stdout, manifest.config, args.output or output)
    if output is not None:
        args.output = output
    config = None
    if embedded_config is not None:
        config = GraphConfig.from_dict(embedded_config)
    elif getattr(args, "config", None):
        config = load_config(args.config)
    return COMMANDS[args.command](args, list(argv), config, stdout)


def main(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    stdout = stdout or sys.stdout
    try:
        return _run(argv, stdout)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything else is a runtime failure, still reported
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
