"""
Command-line entry point for the Monte-Carlo experiments.

Examples:
  python -m app.cli sense --preset paper-1ghz --snr -10 0 10 --trials 50 --out results/sense.csv
  python -m app.cli sense --scheme uniform-dft --pc2 --out results/baseline.csv
  python -m app.cli comm --scheme lora-baseline --config experiment.json --out results/ser.csv
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from app import settings
from app.config import PRESETS, load_config, preset
from app.errors import ConfigError, LoRadarError
from app.harness import ExperimentConfig, run_comms_experiment, run_sensing_experiment

logger = logging.getLogger(__name__)

TASKS = {"sense": "sensing", "comm": "comms"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loradar",
        description="Joint sensing and communication simulator for compressed-sampling chirp waveforms",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, help_text in (("sense", "Sensing hit rate and error CDFs"),
                               ("comm", "Communication symbol error rate")):
        sub = subparsers.add_parser(command, help=help_text)
        sub.add_argument("--config", help="JSON config with waveform/scene/experiment sections")
        sub.add_argument("--preset", default="paper-1ghz", choices=sorted(PRESETS),
                         help="Waveform preset the config is applied on top of (default: paper-1ghz)")
        sub.add_argument("--scheme", help="cs or uniform-dft (sense), cs or lora-baseline (comm)")
        sub.add_argument("--snr", type=float, nargs="+", help="SNR grid in dB; 'inf' for noiseless")
        sub.add_argument("--trials", type=int, help="Trials per SNR point (symbols for comm)")
        sub.add_argument("--seed", type=int, help="Run seed")
        sub.add_argument("--out", help=f"CSV output path (default: {settings.OUTPUT_DIR}/<command>.csv)")
        sub.add_argument("--workers", type=int, help="Worker processes (default: LORADAR_WORKERS)")
        sub.add_argument("--no-progress", action="store_true", help="Hide the progress bar")
        sub.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level")
        if command == "sense":
            sub.add_argument("--k", type=int, help="Targets per trial")
            sub.add_argument("--uniform-rate", type=float, help="ADC rate of the uniform baseline in Hz")
            sub.add_argument("--no-pc1", action="store_true", help="Disable segment-phase compensation")
            sub.add_argument("--pc2", action="store_true", help="Compensate velocity phase before angle estimation")
            sub.add_argument("--trace", help="JSONL per-trial trace path")
        else:
            sub.add_argument("--noise-reference", choices=("sample", "signal"),
                             help="SNR per sample or over the chirp bandwidth")
            sub.add_argument("--full-alphabet", action="store_true",
                             help="LoRa baseline decides over all 2^NSF symbols")
            sub.add_argument("--resample-per-symbol", action="store_true",
                             help="Draw a new random sampling set for every symbol")
            sub.add_argument("--iq-dump", help="Write de-chirped I/Q sequences to this file")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    task = TASKS[args.command]
    base = preset(args.preset)
    if args.config:
        params, scene, experiment = load_config(args.config, base=base)
    else:
        params, scene, experiment = base, {}, {}
    if args.seed is not None:
        params = replace(params, seed=args.seed)
    if task == "sensing" and args.k is not None:
        scene = {**scene, "k": args.k}

    overrides = {
        "scheme": args.scheme,
        "snr_grid_db": tuple(args.snr) if args.snr else None,
        "trials": args.trials,
        "output_path": args.out or experiment.get("output_path")
        or str(Path(settings.OUTPUT_DIR) / f"{args.command}.csv"),
    }
    if task == "sensing":
        overrides.update(uniform_rate=args.uniform_rate, trace_path=args.trace,
                         pc1=False if args.no_pc1 else None, pc2=True if args.pc2 else None)
    else:
        overrides.update(noise_reference=args.noise_reference, iq_dump_path=args.iq_dump,
                         full_alphabet=True if args.full_alphabet else None,
                         resample_per_symbol=True if args.resample_per_symbol else None)
    return ExperimentConfig.from_sections(task, params, scene, experiment, **overrides)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level.upper())
    try:
        cfg = config_from_args(args)
        runner = run_sensing_experiment if cfg.task == "sensing" else run_comms_experiment
        runner(cfg, workers=args.workers, progress=not args.no_progress)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return 2
    except (LoRadarError, OSError) as e:
        logger.error(f"Experiment failed: {e}")
        return 1
    logger.info(f"Results written to {cfg.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
