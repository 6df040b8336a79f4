"""Benchmark the built-in best response through the full LLM pipeline against a local replay endpoint."""

import argparse

from liquidroute.cli import load_config
from liquidroute.llm.bench import bench_parameters, run_mock_bench


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default="config1,config2,config3")
    ap.add_argument("--node", type=int, action="append")
    ap.add_argument("--iterations", type=int, default=20)
    args = ap.parse_args()
    for name in args.configs.split(","):
        cfg = load_config(name)
        res = run_mock_bench(cfg, nodes=args.node or (2,), params=bench_parameters(cfg, iterations=args.iterations))
        print(name)
        for line in res.lines():
            print("  " + line)


if __name__ == "__main__":
    main()
