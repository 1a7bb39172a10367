#!/usr/bin/env python3
"""
Access-trace oracle and CSV dump

recompute_gas() re-derives a transaction's gas from its trace without trusting the
meter: coldness is replayed from first-touch order and every step is re-priced
with the schedule's cost functions. dump_trace_csv() / read_trace_csv() move
whole transactions (calldata, metered total and steps) through a CSV file so the
recomputation can also run from a dump.
"""
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, List, Union

import pandas as pd
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from sim_errors import IoFailure
from .gas_schedule import GasSchedule, calldata_cost, log_cost, sload_cost, sstore_cost
from .world_state import SlotKey, TraceRecord

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [f.name for f in fields(TraceRecord)]
DUMP_COLUMNS = TRACE_COLUMNS + ["calldata"]
HEX_COLUMNS = ("slot_index", "current", "new")
TX_ROW_KIND = "tx"


@dataclass
class TracedTransaction:
    """A transaction's calldata, metered gas and access trace"""
    tx_id: int
    function: str
    calldata: bytes
    gas_used: int
    trace: List[TraceRecord] = field(default_factory=list)


def recompute_gas(trace: Iterable[TraceRecord], calldata: bytes, schedule: GasSchedule) -> int:
    """
    Recompute one transaction's gas from its access trace

    Args:
        trace: Trace records of a single transaction, in execution order
        calldata: The transaction's calldata
        schedule: Gas schedule to price with

    Returns:
        int: intrinsic + calldata + access costs + log costs + traversal + overhead

    Raises:
        ValueError: When the recorded coldness disagrees with first-touch order
    """
    total = schedule.tx_intrinsic + calldata_cost(calldata, schedule)
    seen = set()

    for record in trace:
        if record.kind in ("sload", "sstore"):
            key = SlotKey(record.contract_id, record.slot_index)
            is_cold = key not in seen
            seen.add(key)
            if is_cold != record.is_cold:
                raise ValueError(f"tx {record.tx_id}: coldness mismatch at {key}")
            if record.kind == "sload":
                total += sload_cost(is_cold, schedule)
            else:
                total += sstore_cost(record.current, record.new, is_cold, schedule)
        elif record.kind == "traverse":
            total += record.levels * schedule.traversal_per_index
        elif record.kind == "log":
            total += log_cost(record.topics, record.data_length, schedule)
        elif record.kind == "overhead":
            total += schedule.overhead(record.label)
        else:
            raise ValueError(f"Unknown trace kind '{record.kind}'")

    return total


def trace_frame(trace: Iterable[TraceRecord]) -> pd.DataFrame:
    """Trace records as a DataFrame with stable columns (slot index as hex text)"""
    rows = [asdict(r) for r in trace]
    df = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    for column in HEX_COLUMNS:
        df[column] = df[column].map(lambda v: f"{int(v):#x}")
    return df


def transactions_frame(transactions: Iterable[TracedTransaction]) -> pd.DataFrame:
    """
    One 'tx' header row per transaction followed by its metered steps

    The header row carries the metered total in `gas`, the function name in
    `label` and the calldata as hex; step rows leave `calldata` empty.
    """
    frames = []
    for tx in transactions:
        header = TraceRecord(tx.tx_id, TX_ROW_KIND, tx.gas_used, label=tx.function)
        frame = trace_frame([header, *tx.trace])
        frame["calldata"] = [tx.calldata.hex()] + [""] * len(tx.trace)
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=DUMP_COLUMNS)
    return pd.concat(frames, ignore_index=True)[DUMP_COLUMNS]


@retry(
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.2, min=0.2, max=2),
    retry=retry_if_exception_type(OSError),
    reraise=True,
)
def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def dump_trace_csv(transactions: Iterable[TracedTransaction], path: Union[str, Path]) -> Path:
    """
    Write the access traces of a sequence of transactions

    Args:
        transactions: Executed transactions (CallResult or TracedTransaction)
        path: Output CSV file

    Returns:
        Path: The written file

    Raises:
        IoFailure: The file could not be written after retries
    """
    path = Path(path)
    transactions = list(transactions)
    try:
        _write_csv(transactions_frame(transactions), path)
    except OSError as e:
        raise IoFailure(f"could not write access trace {path}: {e}") from e
    logger.info(f"Access trace written: {path} ({len(transactions)} transactions)")
    return path


def read_trace_csv(path: Union[str, Path]) -> List[TracedTransaction]:
    """
    Load a file written by dump_trace_csv

    Raises:
        ValueError: A step row appears before any 'tx' header row
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    transactions: List[TracedTransaction] = []
    for row in df.to_dict(orient="records"):
        if row["kind"] == TX_ROW_KIND:
            transactions.append(TracedTransaction(
                tx_id=int(row["tx_id"]),
                function=row["label"],
                calldata=bytes.fromhex(row["calldata"]),
                gas_used=int(row["gas"]),
            ))
            continue
        if not transactions:
            raise ValueError(f"{path}: step row before the first transaction header")
        transactions[-1].trace.append(TraceRecord(
            tx_id=int(row["tx_id"]),
            kind=row["kind"],
            gas=int(row["gas"]),
            contract_id=int(row["contract_id"]),
            slot_index=int(row["slot_index"], 16),
            is_cold=row["is_cold"] == "True",
            current=int(row["current"], 16),
            new=int(row["new"], 16),
            topics=int(row["topics"]),
            data_length=int(row["data_length"]),
            levels=int(row["levels"]),
            label=row["label"],
        ))
    return transactions
