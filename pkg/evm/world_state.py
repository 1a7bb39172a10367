#!/usr/bin/env python3
"""
Zero-default contract storage with per-transaction cold/warm tracking

A WorldState owns the storage map and account balances. Contract code drives it
through one transaction at a time:

    meter = state.begin_tx(calldata, schedule, tx_id=7)
    value = state.metered_read(key)
    state.metered_write(key, value + 1)
    gas = state.end_tx()            # or state.revert_tx() to roll back

Every metered access is appended to the meter's trace so gas can be recomputed
independently (see evm/trace.py).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from sim_errors import OutOfGas
from .gas_schedule import GasSchedule, calldata_cost, log_cost, sload_cost, sstore_cost

logger = logging.getLogger(__name__)

WORD_MAX = 2 ** 256 - 1


@dataclass(frozen=True, order=True)
class SlotKey:
    """Storage slot address: contract id first, then slot index"""
    contract_id: int
    slot_index: int

    def __post_init__(self):
        if not 0 <= self.slot_index <= WORD_MAX:
            raise ValueError(f"slot_index out of 256-bit range: {self.slot_index}")


@dataclass
class TraceRecord:
    """One metered step of a transaction"""
    tx_id: int
    kind: str                     # sload | sstore | traverse | log | overhead
    gas: int
    contract_id: int = 0
    slot_index: int = 0
    is_cold: bool = False
    current: int = 0
    new: int = 0
    topics: int = 0
    data_length: int = 0
    levels: int = 0
    label: str = ""

    @property
    def slot(self) -> Optional[SlotKey]:
        if self.kind in ("sload", "sstore"):
            return SlotKey(self.contract_id, self.slot_index)
        return None


class AccessSet:
    """Slots touched by the running transaction; a slot is cold until touched"""

    def __init__(self):
        self.touched_slots: set = set()

    def is_cold(self, key: SlotKey) -> bool:
        return key not in self.touched_slots

    def touch(self, key: SlotKey) -> bool:
        """Mark a slot warm. Returns True if it was cold."""
        was_cold = key not in self.touched_slots
        self.touched_slots.add(key)
        return was_cold

    def clear(self) -> None:
        self.touched_slots.clear()

    def __len__(self) -> int:
        return len(self.touched_slots)


@dataclass
class TxMeter:
    """Gas accumulated by one transaction plus its events and access trace"""
    tx_id: int
    calldata: bytes
    gas_used: int
    gas_limit: Optional[int] = None
    events: List[Tuple[str, int, int]] = field(default_factory=list)
    trace: List[TraceRecord] = field(default_factory=list)

    def charge(self, gas: int) -> None:
        """Add gas; raise OutOfGas when the transaction limit is crossed"""
        self.gas_used += gas
        if self.gas_limit is not None and self.gas_used > self.gas_limit:
            self.gas_used = self.gas_limit
            raise OutOfGas(f"tx {self.tx_id} ran out of gas (limit {self.gas_limit})", gas_used=self.gas_limit)


class WorldState:
    """Persistent storage and balances, driven by one transaction at a time"""

    def __init__(self, storage: Optional[Dict[SlotKey, int]] = None, balances: Optional[Dict[bytes, int]] = None):
        self.storage: Dict[SlotKey, int] = {k: v for k, v in (storage or {}).items() if v != 0}
        self.balances: Dict[bytes, int] = dict(balances or {})
        self.access = AccessSet()
        self.schedule: Optional[GasSchedule] = None
        self._meter: Optional[TxMeter] = None
        self._journal: List[Tuple[str, object, int]] = []
        self._next_tx_id = 1

    # ------------------------------------------------------------------
    # Transaction lifecycle
    # ------------------------------------------------------------------

    @property
    def in_tx(self) -> bool:
        return self._meter is not None

    @property
    def meter(self) -> TxMeter:
        if self._meter is None:
            raise RuntimeError("No active transaction")
        return self._meter

    def begin_tx(self, calldata: bytes, schedule: GasSchedule, tx_id: Optional[int] = None,
                 gas_limit: Optional[int] = None) -> TxMeter:
        """
        Open a transaction: intrinsic and calldata gas are charged up front

        Args:
            calldata: Encoded call payload
            schedule: Gas schedule for this transaction
            tx_id: Identifier carried into the trace (auto-assigned when omitted)
            gas_limit: Optional per-transaction gas limit

        Returns:
            TxMeter: Meter for the new transaction
        """
        if self._meter is not None:
            raise RuntimeError(f"Transaction {self._meter.tx_id} is still open")
        if tx_id is None:
            tx_id = self._next_tx_id
        self._next_tx_id = max(self._next_tx_id, tx_id) + 1

        self.schedule = schedule
        self.access.clear()
        self._journal.clear()
        self._meter = TxMeter(
            tx_id=tx_id,
            calldata=bytes(calldata),
            gas_used=schedule.tx_intrinsic + calldata_cost(calldata, schedule),
            gas_limit=gas_limit,
        )
        if gas_limit is not None and self._meter.gas_used > gas_limit:
            self._meter.charge(0)
        return self._meter

    def end_tx(self) -> int:
        """Close the transaction, keep its writes, return the gas used"""
        meter = self.meter
        self._meter = None
        self.access.clear()
        self._journal.clear()
        return meter.gas_used

    def revert_tx(self) -> int:
        """Close the transaction and undo its writes; gas consumed so far is still returned"""
        meter = self.meter
        for kind, target, old in reversed(self._journal):
            if kind == "storage":
                self._set_slot(target, old)
            else:
                self.balances[target] = old
        logger.debug(f"tx {meter.tx_id} reverted ({len(self._journal)} journal entries rolled back)")
        self._meter = None
        self.access.clear()
        self._journal.clear()
        return meter.gas_used

    # ------------------------------------------------------------------
    # Storage access
    # ------------------------------------------------------------------

    def peek(self, key: SlotKey) -> int:
        """Unmetered read; does not warm the slot"""
        return self.storage.get(key, 0)

    def metered_read(self, key: SlotKey) -> int:
        """Read a slot, charging the warm or cold load cost"""
        meter = self.meter
        was_cold = self.access.touch(key)
        value = self.storage.get(key, 0)
        gas = sload_cost(was_cold, self.schedule)
        meter.trace.append(TraceRecord(meter.tx_id, "sload", gas, key.contract_id, key.slot_index,
                                       is_cold=was_cold, current=value, new=value))
        meter.charge(gas)
        return value

    def metered_write(self, key: SlotKey, value: int) -> None:
        """Write a slot, charging noop/set/reset plus the cold surcharge on first touch"""
        if not 0 <= value <= WORD_MAX:
            raise ValueError(f"value out of 256-bit range: {value}")
        meter = self.meter
        was_cold = self.access.touch(key)
        current = self.storage.get(key, 0)
        gas = sstore_cost(current, value, was_cold, self.schedule)
        meter.trace.append(TraceRecord(meter.tx_id, "sstore", gas, key.contract_id, key.slot_index,
                                       is_cold=was_cold, current=current, new=value))
        meter.charge(gas)
        if value != current:
            self._journal.append(("storage", key, current))
            self._set_slot(key, value)

    def traverse(self, levels: int, label: str = "") -> None:
        """Charge index-level traversal performed during validation reads"""
        if levels <= 0:
            return
        meter = self.meter
        gas = levels * self.schedule.traversal_per_index
        meter.trace.append(TraceRecord(meter.tx_id, "traverse", gas, levels=levels, label=label))
        meter.charge(gas)

    def charge_overhead(self, function: str) -> None:
        """Charge the schedule's fixed overhead for a contract function"""
        gas = self.schedule.overhead(function)
        if gas == 0:
            return
        meter = self.meter
        meter.trace.append(TraceRecord(meter.tx_id, "overhead", gas, label=function))
        meter.charge(gas)

    def emit(self, name: str, topic_count: int, data_length: int) -> None:
        """Record an event and charge its log cost"""
        meter = self.meter
        gas = log_cost(topic_count, data_length, self.schedule)
        meter.events.append((name, topic_count, data_length))
        meter.trace.append(TraceRecord(meter.tx_id, "log", gas, topics=topic_count,
                                       data_length=data_length, label=name))
        meter.charge(gas)

    def _set_slot(self, key: SlotKey, value: int) -> None:
        if value == 0:
            self.storage.pop(key, None)
        else:
            self.storage[key] = value

    # ------------------------------------------------------------------
    # Balances
    # ------------------------------------------------------------------

    def balance_of(self, account: bytes) -> int:
        return self.balances.get(account, 0)

    def set_balance(self, account: bytes, amount: int) -> None:
        """Set a balance; journaled when a transaction is open"""
        if amount < 0:
            raise ValueError(f"Balance cannot be negative: {amount}")
        if self._meter is not None:
            self._journal.append(("balance", account, self.balances.get(account, 0)))
        self.balances[account] = amount

    def storage_snapshot(self) -> Dict[SlotKey, int]:
        """Copy of the non-zero storage, in slot order"""
        return dict(sorted(self.storage.items()))
