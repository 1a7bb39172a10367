"""
Scenario presets, the workflow runner, metrics and report export.
"""
from .report_export import ExportFormat, export, report_to_json
from .metrics import (
    MetricsReport,
    aggregate_transactions,
    build_report,
    dependency_pairs,
    dependent_delay_stats,
    gas_distribution,
    role_split_stats,
    saturation_stats,
    summary_table,
)
from .runner import IterationResult, WorkflowRun, jitter_offsets, run_iteration, run_scenario
from .scenario import JitterMode, ScenarioConfig, STAGES, list_presets, load_scenario

__all__ = [
    "ExportFormat",
    "export",
    "report_to_json",
    "MetricsReport",
    "aggregate_transactions",
    "build_report",
    "dependency_pairs",
    "dependent_delay_stats",
    "gas_distribution",
    "role_split_stats",
    "saturation_stats",
    "summary_table",
    "IterationResult",
    "WorkflowRun",
    "jitter_offsets",
    "run_iteration",
    "run_scenario",
    "JitterMode",
    "ScenarioConfig",
    "STAGES",
    "list_presets",
    "load_scenario",
]
