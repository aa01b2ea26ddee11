#!/usr/bin/env python3
"""
Spin-Photon Transfer Simulator - Main CLI Interface

Usage:
    python main.py transfer                         # Three-axis transfer fidelities
    python main.py entangle --engine exact          # Spin-frequency correlations
    python main.py echo --trials 20000 --out echo.csv
    python main.py fringe --config data/configs/fringe.cfg
    python main.py transfer --config output/transfer.csv   # Re-run from a CSV header
"""

import argparse
import logging
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from config import Experiment, NoiseProfile, RunConfig, config, load_config, render_config
from errors import ConfigParse, SimulationError
from experiments import RunOutput, run_experiment
from utils.output import write_csv

EXIT_CONFIG = 2
EXIT_PARAMETER = 3
EXIT_IO = 4


def _format_value(value) -> str:
    if isinstance(value, tuple):
        mean, err = value
        return f"{mean:.4f} ± {err:.4f}"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def print_summary(output: RunOutput, path: Path):
    """Print the summary table of a finished run."""
    cfg = output.config
    print("\n" + "=" * 60)
    print(f"📊 {cfg.experiment.value.upper()} ({cfg.engine.value}, "
          f"{cfg.trials} trials, seed {cfg.seed}, {cfg.noise_profile.value} noise)")
    print("=" * 60)
    for key, value in output.summary.items():
        print(f"  {key:<30} {_format_value(value)}")
    print("=" * 60)
    print(f"✓ {len(output.frame)} rows written to {path}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Spin-Photon Transfer Simulator - photon polarization to quantum-dot spin"
    )
    parser.add_argument(
        "experiment",
        choices=[e.value for e in Experiment],
        help="Experiment to run",
    )
    parser.add_argument("--config", "-c", type=str, help="Run configuration (or a previous CSV)")
    parser.add_argument("--seed", type=int, help="Root seed of the random streams")
    parser.add_argument("--trials", "-n", type=int, help="Trials per run or sweep point")
    parser.add_argument(
        "--engine", "-e", choices=["exact", "mc", "montecarlo"], help="Simulation engine"
    )
    parser.add_argument("--out", "-o", type=str, help="Output CSV path")
    parser.add_argument("--workers", "-w", type=int, help="Parallel worker processes")
    parser.add_argument(
        "--noise-profile",
        choices=[p.value for p in NoiseProfile],
        help="Starting point of the noise parameters",
    )
    return parser


def main(argv=None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=config.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )

    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(
            experiment=args.experiment,
            seed=args.seed,
            trials=args.trials,
            engine=args.engine,
            output_path=args.out,
            workers=args.workers,
            noise_profile=args.noise_profile,
        )
    except ConfigParse as e:
        print(f"\n❌ Error reading configuration: {e}\n")
        return EXIT_CONFIG
    except SimulationError as e:
        print(f"\n❌ Error in configuration: {e}\n")
        return EXIT_PARAMETER

    try:
        output = run_experiment(cfg)
    except SimulationError as e:
        print(f"\n❌ Error running {cfg.experiment.value}: {e}\n")
        return EXIT_PARAMETER

    path = cfg.resolved_output_path
    try:
        write_csv(output.frame, path, render_config(output.config))
    except OSError as e:
        print(f"\n❌ Error writing {path}: {e}\n")
        return EXIT_IO

    print_summary(output, path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
