"""Brute-force IC and contiguity checks over random single-task graphs (up to 8 agents)."""

import argparse
import logging
import time

import numpy as np

from liquidroute.verify import contiguity_violations, ic_violations, quiet_ledger, random_single_task_config


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--graphs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--skip-contiguity", action="store_true", help="the exhaustive profile audit is the slow part")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rng = np.random.default_rng(args.seed)
    graphs = [random_single_task_config(rng) for _ in range(args.graphs)]
    with quiet_ledger():
        t0 = time.perf_counter()
        ic = [ic_violations(g) for g in graphs]
        logging.info(
            "IC: %d violations over %d pairs (%.1fs)",
            sum(len(v) for v, _ in ic), sum(n for _, n in ic), time.perf_counter() - t0,
        )
        for k, (viol, _) in enumerate(ic):
            for v in viol:
                logging.info("  graph %d: %s", k, v)
        if not args.skip_contiguity:
            t0 = time.perf_counter()
            cont = [contiguity_violations(g) for g in graphs]
            logging.info(
                "contiguity: %d violations over %d profiles (%.1fs)",
                sum(len(v) for v, _ in cont), sum(n for _, n in cont), time.perf_counter() - t0,
            )


if __name__ == "__main__":
    main()
