#!/usr/bin/env python3
"""
The six inter-provider agreement contracts as operations over a WorldState

RegistrationAD, AddService, SelectService, RegisterBreach, CalculatePenalty and
TransferFunds share one WorldState. Every public operation runs as a single
metered transaction:

    contracts = AgreementContracts(WorldState(), load_schedule("canonical"))
    result = contracts.register_ad(provider, Role.PROVIDER)
    result.gas_used                                   # 109604 on a fresh state

Direct calls raise the ContractError after rolling the transaction back.
The chain uses try_execute(), which returns a reverted CallResult instead.

Counter and length slots that are read and immediately rewritten are metered
once, at the write. Role gates are checked against state without metering.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple

from evm.gas_schedule import GasSchedule
from evm.world_state import TraceRecord, WorldState
from sim_errors import (
    ContractError,
    InsufficientBalance,
    InvalidArgument,
    ProviderNotFound,
    RoleViolation,
    ServiceLimitExceeded,
    ServiceNotFound,
    UnregisteredProvider,
    ZeroValue,
)
from .calldata import ContractCall
from . import layout
from .layout import LayoutMode

logger = logging.getLogger(__name__)

MAX_SERVICES_PER_PROVIDER = 5

# Event name -> (topic count, data bytes)
EVENTS = {
    "ServiceSelected": (3, 32),
    "BreachRegistered": (2, 32),
    "PenaltyCalculated": (2, 32),
}


class Role(IntEnum):
    CONSUMER = 0
    PROVIDER = 1


class PenaltyPolicy(str, Enum):
    THRESHOLD = "threshold"
    EVERY_BREACH = "every-breach"


@dataclass(frozen=True)
class ADRecord:
    ad_address: bytes
    registration_time: int
    role: Role


@dataclass(frozen=True)
class ServiceRecord:
    provider: bytes
    service_id: str
    location: str
    cost: int


@dataclass(frozen=True)
class SelectionRecord:
    consumer: bytes
    provider: bytes
    service_index: int


@dataclass
class AgreementState:
    """Logical view of all contract records; independent of the storage layout"""
    ad_count: int = 0
    ads: Dict[bytes, ADRecord] = field(default_factory=dict)
    services: List[ServiceRecord] = field(default_factory=list)
    provider_services: Dict[bytes, List[int]] = field(default_factory=dict)
    selections: List[SelectionRecord] = field(default_factory=list)
    breach_counts: Dict[bytes, int] = field(default_factory=dict)
    penalties: Dict[bytes, int] = field(default_factory=dict)
    balances: Dict[bytes, int] = field(default_factory=dict)


@dataclass
class CallResult:
    """Outcome of one contract transaction"""
    tx_id: int
    function: str
    sender: bytes
    calldata: bytes
    gas_used: int
    status: str = "ok"
    error: Optional[str] = None
    events: List[Tuple[str, int, int]] = field(default_factory=list)
    trace: List[TraceRecord] = field(default_factory=list)
    return_value: Optional[int] = None
    penalty_due: bool = False
    exception: Optional[ContractError] = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class AgreementContracts:
    """
    Registration, service catalogue, selection, breach, penalty and payment contracts

    Args:
        state: World state the contracts read and write
        schedule: Gas schedule used for every transaction
        layout_mode: Nested or flattened provider-service lookup
        fidelity_fee: Penalty per recorded breach
        max_breach: Breach count at which a penalty becomes due
        penalty_policy: THRESHOLD (separate follow-up tx) or EVERY_BREACH (inline)
        max_services: Services a provider may advertise
        result_log: When given, every executed (non dry-run) CallResult is appended to it
    """

    def __init__(self, state: WorldState, schedule: GasSchedule,
                 layout_mode: LayoutMode = LayoutMode.NESTED,
                 fidelity_fee: int = 1, max_breach: int = 3,
                 penalty_policy: PenaltyPolicy = PenaltyPolicy.THRESHOLD,
                 max_services: int = MAX_SERVICES_PER_PROVIDER,
                 result_log: Optional[List[CallResult]] = None):
        if fidelity_fee < 0:
            raise ValueError(f"fidelity_fee must be >= 0 (got {fidelity_fee})")
        if max_breach < 1:
            raise ValueError(f"max_breach must be >= 1 (got {max_breach})")
        self.state = state
        self.schedule = schedule
        self.layout_mode = LayoutMode(layout_mode)
        self.fidelity_fee = fidelity_fee
        self.max_breach = max_breach
        self.penalty_policy = PenaltyPolicy(penalty_policy)
        self.max_services = max_services
        self.result_log = result_log
        self.block_timestamp = 12
        # Off-chain index: accounts seen and string preimages, for snapshots only
        self._accounts: Dict[bytes, None] = {}
        self._preimages: Dict[int, str] = {}

    # ==================================================================
    # Transaction plumbing
    # ==================================================================

    def execute(self, sender: bytes, call: ContractCall, tx_id: Optional[int] = None,
                gas_limit: Optional[int] = None, timestamp: Optional[int] = None) -> CallResult:
        """
        Run one call as a transaction; on failure roll back and re-raise

        Raises:
            ContractError: The operation's precondition failed (gas_used is set on the error)
        """
        result = self.try_execute(sender, call, tx_id=tx_id, gas_limit=gas_limit, timestamp=timestamp)
        if not result.ok:
            raise result.exception
        return result

    def try_execute(self, sender: bytes, call: ContractCall, tx_id: Optional[int] = None,
                    gas_limit: Optional[int] = None, timestamp: Optional[int] = None,
                    dry_run: bool = False) -> CallResult:
        """
        Run one call as a transaction and always return a CallResult

        Args:
            sender: Calling account (20 bytes)
            call: Function and arguments
            tx_id: Identifier used in the trace
            gas_limit: Optional transaction gas limit
            timestamp: Block timestamp seen by the call (defaults to block_timestamp)
            dry_run: Roll the transaction back even when it succeeds

        Returns:
            CallResult: status 'ok' or 'reverted' with the gas consumed
        """
        handler = getattr(self, f"_op_{call.function}")
        calldata = call.calldata()
        if timestamp is not None:
            self.block_timestamp = timestamp

        meter = None
        try:
            meter = self.state.begin_tx(calldata, self.schedule, tx_id=tx_id, gas_limit=gas_limit)
            self._accounts.setdefault(sender, None)
            self.state.charge_overhead(call.function)
            args = call.args + ((call.value,) if call.function == "transfer_funds" else ())
            return_value, penalty_due = handler(sender, *args)
        except ContractError as e:
            meter = meter or self.state.meter
            gas = self.state.revert_tx()
            e.gas_used = gas
            logger.debug(f"tx {meter.tx_id} {call.function} reverted: {type(e).__name__} {e}")
            result = CallResult(meter.tx_id, call.function, sender, calldata, gas, status="reverted",
                                error=type(e).__name__, events=list(meter.events), trace=list(meter.trace),
                                exception=e)
        except Exception:
            if self.state.in_tx:
                self.state.revert_tx()
            raise
        else:
            gas = self.state.revert_tx() if dry_run else self.state.end_tx()
            result = CallResult(meter.tx_id, call.function, sender, calldata, gas,
                                events=list(meter.events), trace=list(meter.trace),
                                return_value=return_value, penalty_due=penalty_due)

        if self.result_log is not None and not dry_run:
            self.result_log.append(result)
        return result

    def estimate_gas(self, sender: bytes, call: ContractCall, timestamp: Optional[int] = None) -> int:
        """Dry-run a call against current state and return its gas (state untouched)"""
        saved = self.block_timestamp
        result = self.try_execute(sender, call, timestamp=timestamp, dry_run=True)
        self.block_timestamp = saved
        return result.gas_used

    # ==================================================================
    # Public operations
    # ==================================================================

    def register_ad(self, sender: bytes, role: Role, **kwargs) -> CallResult:
        return self.execute(sender, ContractCall("register_ad", (int(role),)), **kwargs)

    def add_service(self, provider: bytes, service_id: str, location: str, cost: int, **kwargs) -> CallResult:
        return self.execute(provider, ContractCall("add_service", (service_id, location, cost)), **kwargs)

    def select_service(self, consumer: bytes, provider: bytes, service_index: int, **kwargs) -> CallResult:
        return self.execute(consumer, ContractCall("select_service", (provider, service_index)), **kwargs)

    def select_service_flattened(self, consumer: bytes, provider: bytes, service_index: int, **kwargs) -> CallResult:
        """Selection through the single hashed composite key; requires a flattened layout"""
        if self.layout_mode is not LayoutMode.FLATTENED:
            raise ValueError("select_service_flattened requires LayoutMode.FLATTENED")
        return self.select_service(consumer, provider, service_index, **kwargs)

    def register_breach(self, provider: bytes, num_breaches: int, **kwargs) -> CallResult:
        return self.execute(provider, ContractCall("register_breach", (num_breaches,)), **kwargs)

    def calculate_penalty(self, provider: bytes, sender: Optional[bytes] = None, **kwargs) -> CallResult:
        return self.execute(sender or provider, ContractCall("calculate_penalty", (provider,)), **kwargs)

    def transfer_funds(self, consumer: bytes, provider: bytes, amount: int, **kwargs) -> CallResult:
        return self.execute(consumer, ContractCall("transfer_funds", (provider,), value=amount), **kwargs)

    def onboard_provider(self, provider: bytes, service_id: str, location: str, cost: int, **kwargs) -> CallResult:
        """Register a provider and add its first service in a single transaction"""
        return self.execute(provider, ContractCall("onboard_provider", (service_id, location, cost)), **kwargs)

    # ==================================================================
    # Operation bodies: return (return_value, penalty_due)
    # ==================================================================

    def _op_register_ad(self, sender: bytes, role: int):
        if role not in (Role.CONSUMER, Role.PROVIDER):
            raise InvalidArgument(f"unknown role {role}")
        role = Role(role)
        self._register(sender, role)
        return None, False

    def _register(self, sender: bytes, role: Role) -> None:
        state = self.state
        is_new = state.peek(layout.ad_field_key(sender, 0)) == 0

        state.metered_write(layout.ad_field_key(sender, 0), layout.address_word(sender))
        state.metered_write(layout.ad_field_key(sender, 1), self.block_timestamp)
        state.metered_write(layout.ad_field_key(sender, 2), int(role))

        if is_new:
            count_key = layout.ad_count_key()
            state.metered_write(count_key, state.peek(count_key) + 1)

    def _op_add_service(self, provider: bytes, service_id: str, location: str, cost: int):
        self._require_role(provider, Role.PROVIDER, missing=UnregisteredProvider)
        return self._append_service(provider, service_id, location, cost), False

    def _append_service(self, provider: bytes, service_id: str, location: str, cost: int) -> int:
        state = self.state
        if cost < 0:
            raise InvalidArgument(f"service cost cannot be negative: {cost}")

        provider_length_key = layout.provider_services_length_key(provider)
        provider_length = state.peek(provider_length_key)
        if provider_length >= self.max_services:
            raise ServiceLimitExceeded(f"provider already advertises {provider_length} services")

        # Global array append
        length_key = layout.services_length_key()
        position = state.peek(length_key)
        state.metered_write(length_key, position + 1)

        id_hash = layout.string_hash(service_id)
        location_hash = layout.string_hash(location)
        self._preimages[id_hash] = service_id
        self._preimages[location_hash] = location

        state.metered_write(layout.service_field_key(position, 0), layout.address_word(provider))
        state.metered_write(layout.service_field_key(position, 1), id_hash)
        state.metered_write(layout.service_field_key(position, 2), location_hash)
        state.metered_write(layout.service_field_key(position, 3), cost)

        # Provider list append; elements hold the 1-based global service id
        state.metered_write(provider_length_key, provider_length + 1)
        if self.layout_mode is LayoutMode.NESTED:
            element_key = layout.provider_service_element_key(provider, provider_length)
        else:
            element_key = layout.flat_service_key(provider, provider_length + 1)
        state.metered_write(element_key, position + 1)
        return position + 1

    def _op_onboard_provider(self, provider: bytes, service_id: str, location: str, cost: int):
        self._register(provider, Role.PROVIDER)
        return self._append_service(provider, service_id, location, cost), False

    def _op_select_service(self, consumer: bytes, provider: bytes, service_index: int):
        state = self.state
        self._require_role(consumer, Role.CONSUMER, missing=RoleViolation)

        if self.layout_mode is LayoutMode.NESTED:
            if state.metered_read(layout.ad_field_key(provider, 0)) == 0:
                raise ProviderNotFound("Provider not found")
            count = state.peek(layout.provider_services_length_key(provider))
            if not 1 <= service_index <= count:
                raise ServiceNotFound(f"service index {service_index} outside 1..{count}")
            state.traverse(service_index, label="providerServices")
            global_id = state.peek(layout.provider_service_element_key(provider, service_index - 1))
        else:
            global_id = 0
            if service_index >= 1:
                global_id = state.metered_read(layout.flat_service_key(provider, service_index))
            if global_id == 0:
                if state.peek(layout.ad_field_key(provider, 0)) == 0:
                    raise ProviderNotFound("Provider not found")
                raise ServiceNotFound(f"service index {service_index} not advertised")

        length_key = layout.selections_length_key()
        position = state.peek(length_key)
        state.metered_write(length_key, position + 1)
        state.metered_write(layout.selection_field_key(position, 0), layout.address_word(consumer))
        state.metered_write(layout.selection_field_key(position, 1), layout.address_word(provider))
        state.metered_write(layout.selection_field_key(position, 2), service_index)
        state.emit("ServiceSelected", *EVENTS["ServiceSelected"])
        return global_id, False

    def _op_register_breach(self, provider: bytes, num_breaches: int):
        state = self.state
        if num_breaches < 1:
            raise InvalidArgument(f"num_breaches must be >= 1 (got {num_breaches})")
        self._require_role(provider, Role.PROVIDER, missing=UnregisteredProvider)

        count_key = layout.breach_count_key(provider)
        count = state.peek(count_key) + num_breaches
        state.metered_write(count_key, count)
        state.emit("BreachRegistered", *EVENTS["BreachRegistered"])

        if self.penalty_policy is PenaltyPolicy.EVERY_BREACH:
            self._compute_penalty(provider)
            return count, False
        return count, count >= self.max_breach

    def _op_calculate_penalty(self, sender: bytes, provider: bytes):
        if self.state.peek(layout.ad_field_key(provider, 0)) == 0:
            raise UnregisteredProvider("Provider not registered")
        return self._compute_penalty(provider), False

    def _compute_penalty(self, provider: bytes) -> int:
        state = self.state
        count = state.metered_read(layout.breach_count_key(provider))
        penalty = self.fidelity_fee * count
        state.metered_write(layout.penalty_key(provider), penalty)
        state.emit("PenaltyCalculated", *EVENTS["PenaltyCalculated"])
        return penalty

    def _op_transfer_funds(self, consumer: bytes, provider: bytes, value: int):
        state = self.state
        if value <= 0:
            raise ZeroValue("msg.value must be nonzero")
        if self._role_of(consumer) is not Role.CONSUMER:
            raise RoleViolation("only a consumer may pay")
        if self._role_of(provider) is not Role.PROVIDER:
            raise RoleViolation("recipient is not a provider")
        balance = state.balance_of(consumer)
        if balance < value:
            raise InsufficientBalance(f"balance {balance} < amount {value}")

        state.set_balance(consumer, balance - value)
        state.set_balance(provider, state.balance_of(provider) + value)
        return value, False

    # ==================================================================
    # Role gates and views (unmetered)
    # ==================================================================

    def _role_of(self, account: bytes) -> Optional[Role]:
        if self.state.peek(layout.ad_field_key(account, 0)) == 0:
            return None
        return Role(self.state.peek(layout.ad_field_key(account, 2)))

    def _require_role(self, account: bytes, role: Role, missing) -> None:
        actual = self._role_of(account)
        if actual is None:
            raise missing(f"{account.hex()} is not registered")
        if actual is not role:
            raise RoleViolation(f"{account.hex()} is a {actual.name.lower()}, expected {role.name.lower()}")

    def role_of(self, account: bytes) -> Optional[Role]:
        return self._role_of(account)

    def service_count(self, provider: bytes) -> int:
        return self.state.peek(layout.provider_services_length_key(provider))

    def provider_service_ids(self, provider: bytes) -> List[int]:
        """1-based global service ids advertised by a provider, in list order"""
        ids = []
        for position in range(self.service_count(provider)):
            if self.layout_mode is LayoutMode.NESTED:
                key = layout.provider_service_element_key(provider, position)
            else:
                key = layout.flat_service_key(provider, position + 1)
            ids.append(self.state.peek(key))
        return ids

    def service_cost(self, provider: bytes, service_index: int) -> int:
        global_id = self.provider_service_ids(provider)[service_index - 1]
        return self.state.peek(layout.service_field_key(global_id - 1, 3))

    def breach_count(self, provider: bytes) -> int:
        return self.state.peek(layout.breach_count_key(provider))

    def penalty_of(self, provider: bytes) -> int:
        return self.state.peek(layout.penalty_key(provider))

    def snapshot(self) -> AgreementState:
        """Rebuild every contract record from storage"""
        state = self.state
        snap = AgreementState(ad_count=state.peek(layout.ad_count_key()))

        for account in sorted(self._accounts):
            address_value = state.peek(layout.ad_field_key(account, 0))
            if address_value:
                snap.ads[account] = ADRecord(layout.word_address(address_value),
                                             state.peek(layout.ad_field_key(account, 1)),
                                             Role(state.peek(layout.ad_field_key(account, 2))))
            if self.service_count(account):
                snap.provider_services[account] = self.provider_service_ids(account)
            if self.breach_count(account):
                snap.breach_counts[account] = self.breach_count(account)
            if self.penalty_of(account):
                snap.penalties[account] = self.penalty_of(account)

        for position in range(state.peek(layout.services_length_key())):
            snap.services.append(ServiceRecord(
                provider=layout.word_address(state.peek(layout.service_field_key(position, 0))),
                service_id=self._preimages.get(state.peek(layout.service_field_key(position, 1)), ""),
                location=self._preimages.get(state.peek(layout.service_field_key(position, 2)), ""),
                cost=state.peek(layout.service_field_key(position, 3)),
            ))

        for position in range(state.peek(layout.selections_length_key())):
            snap.selections.append(SelectionRecord(
                consumer=layout.word_address(state.peek(layout.selection_field_key(position, 0))),
                provider=layout.word_address(state.peek(layout.selection_field_key(position, 1))),
                service_index=state.peek(layout.selection_field_key(position, 2)),
            ))

        snap.balances = {a: b for a, b in sorted(state.balances.items()) if b}
        return snap
