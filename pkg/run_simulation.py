#!/usr/bin/env python3
"""
Agreement-protocol simulator command line

    python run_simulation.py run --scenario registration-sweep --seed 42 --out ./run1
    python run_simulation.py verify-deltas --schedule canonical --layout nested
    python run_simulation.py verify-deltas --trace ./delta_trace.csv

Exit codes: 0 success, 1 delta check failure, 2 invalid configuration,
3 report could not be written. Diagnostics go to stderr; stdout carries the
summary table only.
"""
import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import pandas as pd

from contracts.agreement_contracts import PenaltyPolicy
from contracts.delta_suite import format_delta_report, run_delta_suite
from contracts.layout import LayoutMode
from evm.gas_schedule import PRESETS, load_schedule
from evm.trace import dump_trace_csv, read_trace_csv, recompute_gas
from sim_config import SimulationConfig
from sim_errors import ConfigInvalid, IoFailure
from workload.report_export import ExportFormat, export
from workload.metrics import summary_table
from workload.runner import run_scenario
from workload.scenario import JitterMode, list_presets, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DELTA_FAILURE = 1
EXIT_CONFIG_INVALID = 2
EXIT_IO_FAILURE = 3


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines a run's outputs"""
    schedule: Optional[str]
    scenario: str
    seed: int
    layout: Optional[str]
    out: Path
    format: str
    policy: Optional[str]
    jitter: Optional[str]


def configure_logging(level: str, log_file: Optional[str] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="UTF-8"))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Inter-provider agreement protocol simulator")
    parser.add_argument("--log-level", help="Logging level (default: SIM_LOG_LEVEL or INFO)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run a scenario and write its report")
    run.add_argument("--scenario", default="registration-sweep",
                     help=f"Scenario preset ({', '.join(list_presets())}) or YAML path")
    run.add_argument("--schedule", help=f"Gas schedule preset ({', '.join(PRESETS)}) or YAML path")
    run.add_argument("--layout", choices=[mode.value for mode in LayoutMode], help="Storage layout")
    run.add_argument("--seed", type=int, help="Random seed (default: SIM_DEFAULT_SEED or 42)")
    run.add_argument("--out", help="Output directory (default: SIM_OUTPUT_DIR or ./sim_output)")
    run.add_argument("--format", choices=[fmt.value for fmt in ExportFormat], default="csv",
                     help="Report format")
    run.add_argument("--policy", choices=[policy.value for policy in PenaltyPolicy], help="Penalty policy")
    run.add_argument("--jitter", choices=[mode.value for mode in JitterMode], help="Submit-time jitter")
    run.add_argument("--workers", type=int, help="Parallel simulations (default: SIM_WORKERS or 1)")

    verify = subparsers.add_parser("verify-deltas", help="Check the anchored gas deltas")
    verify.add_argument("--schedule", default="canonical",
                        help=f"Gas schedule preset ({', '.join(PRESETS)}) or YAML path")
    verify.add_argument("--layout", choices=[mode.value for mode in LayoutMode], default=LayoutMode.NESTED.value,
                        help="Storage layout")
    verify.add_argument("--trace", help="Dump every executed transaction's access trace to this CSV")
    return parser


def _manifest(args, settings: SimulationConfig) -> RunManifest:
    return RunManifest(
        schedule=args.schedule,
        scenario=args.scenario,
        seed=settings.default_seed if args.seed is None else args.seed,
        layout=args.layout,
        out=Path(args.out) if args.out else settings.output_dir,
        format=args.format,
        policy=args.policy,
        jitter=args.jitter,
    )


def run(manifest: RunManifest, workers: int = 1) -> int:
    """
    Run a scenario and export its report

    Raises:
        ConfigInvalid: Scenario, schedule or override is invalid
        IoFailure: The report could not be written
    """
    scenario = load_scenario(manifest.scenario).with_overrides(
        seed=manifest.seed,
        schedule=manifest.schedule,
        layout=manifest.layout,
        penalty_policy=manifest.policy,
        jitter=manifest.jitter,
    )
    schedule = load_schedule(scenario.schedule)

    report = run_scenario(scenario, workers=workers, schedule=schedule)
    export(report, manifest.format, manifest.out)

    with pd.option_context("display.max_rows", None, "display.width", 200):
        print(summary_table(report).to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    delays = report.dependent_delays
    if not delays.empty and int(delays["total_pairs"].iloc[0]):
        print(delays.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    return EXIT_OK


def verify_deltas(schedule_name: str = "canonical", layout: str = LayoutMode.NESTED.value,
                  trace_path: Optional[str] = None) -> int:
    """
    Run the delta suite; exit status 1 when any check fails

    With trace_path, every executed transaction is dumped to that CSV and the
    dump is read back and re-priced; a mismatch also fails the run.

    Raises:
        IoFailure: The trace could not be written
    """
    schedule = load_schedule(schedule_name)
    executed = [] if trace_path else None
    checks = run_delta_suite(schedule, layout_mode=LayoutMode(layout), result_log=executed)
    print(format_delta_report(checks))
    passed = all(check.passed for check in checks)

    if trace_path:
        dump_trace_csv(executed, trace_path)
        mismatched = [tx.tx_id for tx in read_trace_csv(trace_path)
                      if recompute_gas(tx.trace, tx.calldata, schedule) != tx.gas_used]
        print(f"trace {trace_path}: {len(executed)} transactions, {len(mismatched)} recomputation mismatches")
        passed = passed and not mismatched
    return EXIT_OK if passed else EXIT_DELTA_FAILURE


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = SimulationConfig(log_level=args.log_level)
        settings.validate_or_raise()
    except ConfigInvalid as e:
        configure_logging("INFO")
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_INVALID

    configure_logging(settings.log_level, settings.log_file)
    settings.log_status()

    try:
        if args.command == "verify-deltas":
            return verify_deltas(args.schedule, args.layout, args.trace)
        workers = settings.workers if args.workers is None else args.workers
        if workers < 1:
            raise ConfigInvalid(f"--workers must be >= 1 (got {workers})")
        return run(_manifest(args, settings), workers=workers)
    except ConfigInvalid as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_INVALID
    except IoFailure as e:
        logger.error(f"Output failure: {e}")
        return EXIT_IO_FAILURE


if __name__ == "__main__":
    sys.exit(main())
