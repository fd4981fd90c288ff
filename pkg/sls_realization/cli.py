"""
Command-line entry point, `sls-realize`.

Exit codes: 0 success, 1 usage, 2 malformed input file, 3 failure of a numerical stage.
"""

import logging
import os
import sys
from argparse import ArgumentParser, Namespace
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from sls_realization.pipeline import EstimationReport, build_model, meta_run
from sls_realization.realization.hankel import add_noise
from sls_realization.system.sls_model import SlsModel, generate_markov
from sls_realization.utils import io
from sls_realization.utils.config import LOG_LEVEL, RunConfig, config_run
from sls_realization.utils.errors import FormatError, SlsError, StageError
from sls_realization.utils.montecarlo import monte_carlo
from sls_realization.utils.stage import Stage

logger = logging.getLogger(__name__)

EXIT_OK: int = 0
EXIT_USAGE: int = 1
EXIT_FORMAT: int = 2
EXIT_STAGE: int = 3

MARKOV_FILE: str = "markov.csv"
MODEL_FILE: str = "model.json"
REPORT_FILE: str = "report.json"

STAGE_COMMANDS = {
    "realize": Stage.REALIZE,
    "cluster": Stage.CLUSTER,
    "detect": Stage.DETECT,
    "align": Stage.ALIGN,
    "meta": Stage.ALIGN,
}

## Flags that map one to one onto RunConfig fields
CONFIG_FLAGS = {
    "n": int,
    "m": int,
    "p": int,
    "sigma": int,
    "n_steps": int,
    "model": str,
    "switching": str,
    "dwell_floor": int,
    "epsilon_Z": float,
    "rank_tol": float,
    "detection_tol": float,
    "match_tol": float,
    "ambiguity_tol": float,
    "cond_limit": float,
    "nu": int,
    "radius": float,
    "min_points": int,
    "min_support": int,
    "noise_mode": str,
    "noise_level": float,
    "seed": int,
    "output_dir": str,
    "workers": int,
    "runs": int,
}


class UsageParser(ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_arguments(parser: ArgumentParser):
    group = parser.add_argument_group("configuration")
    group.add_argument("--preset", type=str, help="Named preset: paper (alias example), montecarlo or default.")
    group.add_argument("--experiment", type=str, help="Experiment on top of the preset: noiseless or noisy.")
    group.add_argument("--config", type=str, help="YAML file with RunConfig fields, applied after the preset.")
    group.add_argument(
        "--calibrate",
        action="store_true",
        default=None,
        help="Self-calibrate the tolerances to the noise level of the Markov parameters.",
    )
    group.add_argument("--snr", type=str, help="Comma-separated SNR grid in dB.")
    for name, kind in CONFIG_FLAGS.items():
        group.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind)


def get_parser() -> ArgumentParser:
    parser = UsageParser(prog="sls-realize", description="Realization of switched linear systems.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only.")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    simulate = commands.add_parser("simulate", help="Write a model and its Markov parameters.")
    simulate.add_argument("--band", type=int, help="Largest stored lag, 4n by default.")
    simulate.add_argument("--full", action="store_true", help="Store every lag.")
    _add_config_arguments(simulate)

    for name, stage in STAGE_COMMANDS.items():
        command = commands.add_parser(name, help=f"Run the meta-algorithm up to the {stage.to_str()} stage.")
        command.add_argument("--markov", type=str, required=True, help="Markov parameter file.")
        command.add_argument("--truth", type=str, help="Ground-truth model JSON for the metrics.")
        _add_config_arguments(command)

    montecarlo = commands.add_parser("montecarlo", help="Monte-Carlo study over random SLSs.")
    _add_config_arguments(montecarlo)
    return parser


def build_config(args: Namespace) -> RunConfig:
    config = config_run(args.preset, args.experiment)
    if args.config is not None:
        data = config.to_dict()
        data.update(io.read_yaml(args.config))
        config = RunConfig.from_dict(data)

    overrides: Dict[str, Any] = {
        name: getattr(args, name) for name in CONFIG_FLAGS if getattr(args, name) is not None
    }
    if args.calibrate is not None:
        overrides["calibrate"] = args.calibrate
    if args.snr is not None:
        overrides["snrs"] = tuple(float(snr) for snr in args.snr.split(","))
    if args.command in STAGE_COMMANDS:
        overrides["last_stage"] = STAGE_COMMANDS[args.command]
    return config.update(**overrides) if overrides else config


def configure_logging(args: Namespace):
    level = LOG_LEVEL
    if args.verbose:
        level = "DEBUG"
    elif args.quiet:
        level = "WARNING"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


## ~ Commands


def cmd_simulate(config: RunConfig, band: Optional[int] = None, full: bool = False) -> SlsModel:
    """
    Write the configured model, its (optionally noisy) Markov parameters and the configuration.
    """

    model = build_model(config)
    if full:
        band = None
    elif band is None:
        band = 4 * model.n
    markov = generate_markov(model, band=band)
    if config.is_noisy:
        markov = add_noise(markov, config.noise_mode, config.noise_level, seed=config.seed)

    io.write_model(model, os.path.join(config.output_dir, MODEL_FILE))
    io.write_markov(markov, os.path.join(config.output_dir, MARKOV_FILE))
    config.to_yaml(os.path.join(config.output_dir, "config.yaml"))
    logger.info(
        "Simulated n=%d, m=%d, p=%d, σ=%d over N=%d into %s",
        model.n, model.m, model.p, model.sigma, model.n_steps, config.output_dir,
    )
    return model


def write_artifacts(report: EstimationReport, config: RunConfig, truth: Optional[SlsModel] = None):
    """
    Report JSON plus the CSV tables of every stage the report completed.
    """

    directory = config.output_dir
    io.write_json(report.to_dict(), os.path.join(directory, REPORT_FILE))
    if report.realization is not None:
        io.write_json(report.realization.to_dict(), os.path.join(directory, "realization.json"))
    if report.stationary is not None:
        io.write_frame(report.stationary.to_frame(), os.path.join(directory, "stationary.csv"))
    if report.cluster is not None:
        io.write_frame(report.cluster.to_frame(), os.path.join(directory, "clusters.csv"))
    if report.estimate is not None:
        phi = truth.switching if truth is not None else None
        io.write_frame(report.estimate.to_frame(phi), os.path.join(directory, "phi_hat.csv"))
    if "eps_H" in report.metrics:
        lo, hi = report.window
        frame = pd.DataFrame({"k": np.arange(lo, hi + 1), "eps_H": report.metrics["eps_H"]})
        io.write_frame(frame, os.path.join(directory, "hankel_mismatch.csv"))
    logger.info("Artifacts written to %s", directory)


def cmd_stage(config: RunConfig, markov_file: str, truth_file: Optional[str] = None) -> EstimationReport:
    """
    Run the meta-algorithm up to `config.last_stage` on a Markov file and write its artifacts.
    A failing stage still writes the partial report before the error propagates.
    """

    markov = io.read_markov(markov_file)
    truth = io.read_model(truth_file) if truth_file is not None else None
    try:
        report = meta_run(markov, config, truth=truth)
    except StageError as e:
        if e.report is not None:
            write_artifacts(e.report, config, truth)
        raise
    write_artifacts(report, config, truth)
    if report.metrics:
        summary = {k: v for k, v in report.metrics.items() if k not in ("eps_H", "label_map")}
        print(f"σ̂ = {report.sigma_hat}, switches at {list(report.switches)}")
        for name, value in summary.items():
            print(f"{name}: {value}")
    return report


def cmd_montecarlo(config: RunConfig) -> pd.DataFrame:
    runs, table = monte_carlo(config)
    io.write_frame(runs, os.path.join(config.output_dir, "runs.csv"))
    io.write_frame(table, os.path.join(config.output_dir, "table.csv"))
    print(table.to_string(index=False))
    return table


def main(argv: Optional[List[str]] = None) -> int:
    parser = get_parser()
    args = parser.parse_args(argv)
    configure_logging(args)

    try:
        config = build_config(args)
    except FormatError as e:
        logger.error("%s", e)
        return EXIT_FORMAT
    except OSError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except (ValueError, TypeError) as e:
        parser.print_usage(sys.stderr)
        logger.error("Invalid configuration: %s", e)
        return EXIT_USAGE

    try:
        if args.command == "simulate":
            cmd_simulate(config, band=args.band, full=args.full)
        elif args.command == "montecarlo":
            cmd_montecarlo(config)
        else:
            cmd_stage(config, args.markov, args.truth)
    except FormatError as e:
        logger.error("%s", e)
        return EXIT_FORMAT
    except SlsError as e:
        logger.error("%s", e)
        return EXIT_STAGE
    except OSError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
