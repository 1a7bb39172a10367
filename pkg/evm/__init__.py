"""
EVM-style gas accounting: cost schedule, zero-default storage and access traces.
"""
from .gas_schedule import GasSchedule, load_schedule, calldata_cost, sstore_cost, sload_cost, log_cost
from .world_state import SlotKey, WorldState, AccessSet, TxMeter, TraceRecord
from .trace import TracedTransaction, recompute_gas, dump_trace_csv, read_trace_csv

__all__ = [
    "GasSchedule",
    "load_schedule",
    "calldata_cost",
    "sstore_cost",
    "sload_cost",
    "log_cost",
    "SlotKey",
    "WorldState",
    "AccessSet",
    "TxMeter",
    "TraceRecord",
    "recompute_gas",
    "dump_trace_csv",
    "read_trace_csv",
    "TracedTransaction",
]
