"""Pin one node's diffused level and tabulate votes, feasibility, winning and payoff."""

import argparse

from liquidroute.cli import load_config, sweep_table
from liquidroute.simulation import sweep_diffusion


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="d1", help="fixture name or JSON path")
    ap.add_argument("--node", type=int, default=10)
    ap.add_argument("--levels", default="0.4,0.5,0.6,0.7,0.8")
    args = ap.parse_args()
    cfg = load_config(args.config)
    rows = sweep_diffusion(cfg, args.node, [float(x) for x in args.levels.split(",")])
    print(sweep_table(rows))


if __name__ == "__main__":
    main()
