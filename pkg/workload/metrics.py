"""
Scenario metrics

Every derived table is computed from the per-transaction and per-block records,
so recomputing it from an exported report gives the same values.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

HIGH_UTILIZATION = 0.8
REGISTRATION_FUNCTIONS = ("register_ad", "onboard_provider")
ALL_FUNCTIONS = "all"

TX_COLUMNS = (
    "batch_size", "iteration", "tx_id", "function", "stage", "round", "role", "service_position",
    "submit_time", "selection_time", "block_number", "block_timestamp", "mempool_time", "latency",
    "gas_estimate", "gas_used", "priority_fee", "gas_price_gwei",
    "block_kb", "block_tx_count", "block_utilization",
    "status", "error", "depends_on", "dependency_block", "included",
)
BLOCK_COLUMNS = (
    "batch_size", "iteration", "slot", "timestamp", "gas_used", "gas_limit", "utilization_pct",
    "tx_count", "background_count", "workflow_count", "byte_size", "block_kb",
)
INTEGER_COLUMNS = ("block_number", "gas_used", "block_tx_count", "depends_on", "dependency_block")

AGGREGATE_COLUMNS = (
    "function", "batch_size", "count", "reverted",
    "latency_mean", "latency_std", "latency_min", "latency_p25", "latency_median", "latency_p95", "latency_max",
    "mempool_mean", "mempool_median", "mempool_p95",
    "gas_used_mean", "gas_used_min", "gas_used_max",
    "gas_price_mean", "gas_price_std", "gas_price_min", "gas_price_max",
    "block_kb_mean", "block_kb_std", "block_kb_min", "block_kb_max",
    "block_tx_count_mean", "block_tx_count_std", "block_tx_count_min", "block_tx_count_max",
)
ROLE_SPLIT_COLUMNS = (
    "batch_size", "role", "count", "latency_mean", "latency_median", "latency_p95",
    "gas_used_mean", "gas_used_min", "gas_used_max",
)
SATURATION_COLUMNS = (
    "function", "batch_size", "iterations", "distinct_blocks", "distinct_blocks_per_iteration",
    "blocks_below_80pct", "blocks_at_or_above_80pct", "pct_below_80", "max_consecutive_high",
)
PAIR_COLUMNS = (
    "batch_size", "iteration", "tx_id", "function", "depends_on", "dependency_block", "block_number", "block_delay",
)
DELAY_COLUMNS = (
    "total_pairs", "delayed_cases", "mean_delay_blocks", "median_delay_blocks", "max_delay_blocks",
    "p90_delay_blocks", "mean_delay_seconds",
)
GAS_DISTRIBUTION_COLUMNS = ("function", "service_position", "gas_used", "count", "percent")


@dataclass
class MetricsReport:
    """Per-tx and per-block records of a scenario plus the tables derived from them"""
    scenario: dict
    transactions: pd.DataFrame
    blocks: pd.DataFrame
    aggregates: pd.DataFrame = field(default_factory=lambda: _empty(AGGREGATE_COLUMNS))
    role_split: pd.DataFrame = field(default_factory=lambda: _empty(ROLE_SPLIT_COLUMNS))
    saturation: pd.DataFrame = field(default_factory=lambda: _empty(SATURATION_COLUMNS))
    dependency_pairs: pd.DataFrame = field(default_factory=lambda: _empty(PAIR_COLUMNS))
    dependent_delays: pd.DataFrame = field(default_factory=lambda: _empty(DELAY_COLUMNS))
    gas_distribution: pd.DataFrame = field(default_factory=lambda: _empty(GAS_DISTRIBUTION_COLUMNS))

    TABLES = ("transactions", "blocks", "aggregates", "role_split", "saturation",
              "dependency_pairs", "dependent_delays", "gas_distribution")

    def tables(self) -> Dict[str, pd.DataFrame]:
        return {name: getattr(self, name) for name in self.TABLES}

    @property
    def included(self) -> pd.DataFrame:
        if self.transactions.empty:
            return self.transactions
        return self.transactions[self.transactions["included"].astype(bool)]


def _empty(columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(columns=list(columns))


def _frame(records: List[dict], columns: Sequence[str]) -> pd.DataFrame:
    if not records:
        return _empty(columns)
    frame = pd.DataFrame.from_records(records, columns=list(columns))
    for column in INTEGER_COLUMNS:
        if column in frame.columns:
            frame[column] = frame[column].astype("Int64")
    return frame


def _values(series: pd.Series) -> np.ndarray:
    return series.dropna().to_numpy(dtype=float)


def _describe(values: np.ndarray, prefix: str, stats: Iterable[str]) -> dict:
    """Named statistics of one column; percentiles use linear interpolation"""
    functions = {
        "mean": np.mean,
        "std": np.std,
        "min": np.min,
        "max": np.max,
        "median": np.median,
        "p25": lambda v: np.percentile(v, 25),
        "p90": lambda v: np.percentile(v, 90),
        "p95": lambda v: np.percentile(v, 95),
    }
    if values.size == 0:
        return {f"{prefix}_{stat}": 0.0 for stat in stats}
    return {f"{prefix}_{stat}": float(functions[stat](values)) for stat in stats}


# ======================================================================
# Derived tables
# ======================================================================

def aggregate_transactions(transactions: pd.DataFrame) -> pd.DataFrame:
    """Latency, mempool, gas, gas price, block size and tx count statistics per (function, batch size)"""
    if transactions.empty:
        return _empty(AGGREGATE_COLUMNS)
    included = transactions[transactions["included"].astype(bool)]

    rows = []
    for (function, batch_size), group in included.groupby(["function", "batch_size"], sort=True):
        row = {
            "function": function,
            "batch_size": int(batch_size),
            "count": int(len(group)),
            "reverted": int((group["status"] == "reverted").sum()),
        }
        row.update(_describe(_values(group["latency"]), "latency",
                             ("mean", "std", "min", "p25", "median", "p95", "max")))
        row.update(_describe(_values(group["mempool_time"]), "mempool", ("mean", "median", "p95")))
        row.update(_describe(_values(group["gas_used"]), "gas_used", ("mean", "min", "max")))
        row.update(_describe(_values(group["gas_price_gwei"]), "gas_price", ("mean", "std", "min", "max")))
        row.update(_describe(_values(group["block_kb"]), "block_kb", ("mean", "std", "min", "max")))
        row.update(_describe(_values(group["block_tx_count"]), "block_tx_count", ("mean", "std", "min", "max")))
        rows.append(row)
    return pd.DataFrame(rows, columns=list(AGGREGATE_COLUMNS)) if rows else _empty(AGGREGATE_COLUMNS)


def role_split_stats(transactions: pd.DataFrame) -> pd.DataFrame:
    """Registration latency and gas split by participant role"""
    if transactions.empty:
        return _empty(ROLE_SPLIT_COLUMNS)
    included = transactions[transactions["included"].astype(bool)
                            & transactions["function"].isin(REGISTRATION_FUNCTIONS)]

    rows = []
    for (batch_size, role), group in included.groupby(["batch_size", "role"], sort=True):
        row = {"batch_size": int(batch_size), "role": role, "count": int(len(group))}
        row.update(_describe(_values(group["latency"]), "latency", ("mean", "median", "p95")))
        row.update(_describe(_values(group["gas_used"]), "gas_used", ("mean", "min", "max")))
        rows.append(row)
    return pd.DataFrame(rows, columns=list(ROLE_SPLIT_COLUMNS)) if rows else _empty(ROLE_SPLIT_COLUMNS)


def dependency_pairs(transactions: pd.DataFrame) -> pd.DataFrame:
    """Included dependent transactions with the block distance to their dependency"""
    if transactions.empty:
        return _empty(PAIR_COLUMNS)
    pairs = transactions[transactions["included"].astype(bool)
                         & transactions["depends_on"].notna()
                         & transactions["dependency_block"].notna()]
    if pairs.empty:
        return _empty(PAIR_COLUMNS)
    pairs = pairs.copy()
    pairs["block_delay"] = (pairs["block_number"] - pairs["dependency_block"]).astype("Int64")
    return pairs[list(PAIR_COLUMNS)].reset_index(drop=True)


def _delay_summary(pairs: pd.DataFrame, slot_interval: float) -> pd.DataFrame:
    delays = _values(pairs["block_delay"]) if not pairs.empty else np.array([])
    delayed = delays[delays > 0]
    row = {"total_pairs": int(delays.size), "delayed_cases": int(delayed.size)}
    stats = _describe(delayed, "delay", ("mean", "median", "max", "p90"))
    row["mean_delay_blocks"] = stats["delay_mean"]
    row["median_delay_blocks"] = stats["delay_median"]
    row["max_delay_blocks"] = stats["delay_max"]
    row["p90_delay_blocks"] = stats["delay_p90"]
    row["mean_delay_seconds"] = stats["delay_mean"] * slot_interval
    return pd.DataFrame([row], columns=list(DELAY_COLUMNS))


def dependent_delay_stats(report: MetricsReport) -> pd.DataFrame:
    """
    Block delay between dependent transactions and their dependencies

    Pairs confirmed with no block delay are counted in total_pairs but not in
    delayed_cases, and the statistics cover delayed cases only.
    """
    slot_interval = float(report.scenario.get("slot_interval", 12.0))
    return _delay_summary(dependency_pairs(report.transactions), slot_interval)


def _max_consecutive(slots_high: Dict[int, bool]) -> int:
    """Longest run of consecutive slot numbers whose blocks are at or above the threshold"""
    best = run = 0
    previous = None
    for slot in sorted(slots_high):
        if slots_high[slot] and previous is not None and slot == previous + 1 and run:
            run += 1
        elif slots_high[slot]:
            run = 1
        else:
            run = 0
        best = max(best, run)
        previous = slot
    return best


def _saturation_row(function: str, batch_size: int, iterations: int, blocks: pd.DataFrame) -> dict:
    high = blocks["utilization_pct"].to_numpy(dtype=float) >= 100 * HIGH_UTILIZATION
    total = int(len(blocks))
    max_run = 0
    for _, run_blocks in blocks.groupby("iteration", sort=True):
        flags = dict(zip(run_blocks["slot"].astype(int),
                         run_blocks["utilization_pct"].to_numpy(dtype=float) >= 100 * HIGH_UTILIZATION))
        max_run = max(max_run, _max_consecutive(flags))
    return {
        "function": function,
        "batch_size": int(batch_size),
        "iterations": iterations,
        "distinct_blocks": total,
        "distinct_blocks_per_iteration": total / iterations if iterations else 0.0,
        "blocks_below_80pct": int((~high).sum()),
        "blocks_at_or_above_80pct": int(high.sum()),
        "pct_below_80": 100.0 * (~high).sum() / total if total else 0.0,
        "max_consecutive_high": max_run,
    }


def saturation_stats(report: MetricsReport) -> pd.DataFrame:
    """
    Block utilization per batch size

    Rows with function 'all' cover every block built in the batch's runs; the
    other rows cover the distinct blocks that included that function.
    """
    blocks = report.blocks
    if blocks.empty:
        return _empty(SATURATION_COLUMNS)
    iterations = int(report.scenario.get("iterations", blocks["iteration"].nunique()))

    rows = []
    included = report.included
    for batch_size, batch_blocks in blocks.groupby("batch_size", sort=True):
        rows.append(_saturation_row(ALL_FUNCTIONS, batch_size, iterations, batch_blocks))
        if included.empty:
            continue
        batch_txs = included[included["batch_size"] == batch_size]
        for function, group in batch_txs.groupby("function", sort=True):
            keys = set(zip(group["iteration"].astype(int), group["block_number"].astype(int)))
            mask = [(int(i), int(s)) in keys for i, s in zip(batch_blocks["iteration"], batch_blocks["slot"])]
            rows.append(_saturation_row(function, batch_size, iterations, batch_blocks[mask]))
    return pd.DataFrame(rows, columns=list(SATURATION_COLUMNS))


def gas_distribution(transactions: pd.DataFrame) -> pd.DataFrame:
    """Frequency of each gas value per (function, service position)"""
    if transactions.empty:
        return _empty(GAS_DISTRIBUTION_COLUMNS)
    included = transactions[transactions["included"].astype(bool)]
    if included.empty:
        return _empty(GAS_DISTRIBUTION_COLUMNS)

    counts = (included.groupby(["function", "service_position", "gas_used"], sort=True)
              .size().rename("count").reset_index())
    totals = counts.groupby(["function", "service_position"])["count"].transform("sum")
    counts["percent"] = 100.0 * counts["count"] / totals
    counts["gas_used"] = counts["gas_used"].astype("Int64")
    return counts[list(GAS_DISTRIBUTION_COLUMNS)].reset_index(drop=True)


# ======================================================================
# Report assembly
# ======================================================================

def build_report(scenario, results: Sequence) -> MetricsReport:
    """
    Merge iteration results (already in batch size, iteration order) into a report

    Args:
        scenario: ScenarioConfig of the run
        results: IterationResult per (batch size, iteration)
    """
    tx_records = [record for result in results for record in result.transactions]
    block_records = [record for result in results for record in result.blocks]
    report = MetricsReport(
        scenario=scenario.to_dict(),
        transactions=_frame(tx_records, TX_COLUMNS),
        blocks=_frame(block_records, BLOCK_COLUMNS),
    )
    report.aggregates = aggregate_transactions(report.transactions)
    report.role_split = role_split_stats(report.transactions)
    report.dependency_pairs = dependency_pairs(report.transactions)
    report.dependent_delays = dependent_delay_stats(report)
    report.saturation = saturation_stats(report)
    report.gas_distribution = gas_distribution(report.transactions)
    return report


def summary_table(report: MetricsReport) -> pd.DataFrame:
    """Compact per-(function, batch size) view printed by the CLI"""
    columns = ["function", "batch_size", "count", "latency_median", "latency_p95",
               "mempool_median", "gas_used_mean", "block_kb_mean"]
    return report.aggregates[columns].reset_index(drop=True)
