#!/usr/bin/env python3

import logging
import os
from argparse import ArgumentParser

from sls_realization.utils import io
from sls_realization.utils.config import DIR_OUTPUT, WORKERS, config_run
from sls_realization.utils.montecarlo import monte_carlo

# Default parameters
RUNS: int = 50
SNRS = (50.0, 40.0, 30.0, 20.0)
SEED: int = 0


def main(argv=None):
    args = get_args(argv)
    logging.basicConfig(level=logging.WARNING if args["quiet"] else logging.INFO)

    config = config_run(
        "montecarlo",
        runs=args["runs"],
        snrs=tuple(args["snrs"]),
        seed=args["seed"],
        workers=args["workers"],
        output_dir=args["output_dir"],
    )
    runs, table = monte_carlo(config)

    io.write_frame(runs, os.path.join(config.output_dir, "runs.csv"))
    io.write_frame(table, os.path.join(config.output_dir, "table.csv"))
    print(table.to_string(index=False, float_format=lambda x: f"{x:.4f}"))


def get_args(argv=None):
    parser = ArgumentParser(description="Monte-Carlo study over random SISO switched systems.")
    parser.add_argument("-r", "--runs", type=int, default=RUNS, help="Number of random systems.")
    parser.add_argument("--snrs", type=float, nargs="+", default=list(SNRS), help="SNR levels in dB.")
    parser.add_argument("-s", "--seed", type=int, default=SEED, help="Root seed.")
    parser.add_argument("-w", "--workers", type=int, default=WORKERS, help="Worker processes.")
    parser.add_argument("-o", "--output_dir", type=str, default=DIR_OUTPUT, help="Directory for the tables.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only log warnings.")
    return vars(parser.parse_args(argv))


if __name__ == "__main__":
    main()
