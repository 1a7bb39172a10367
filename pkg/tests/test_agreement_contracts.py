#!/usr/bin/env python3
"""
Agreement contract tests: absolute gas totals, error paths, penalty policies,
layouts and the trace oracle

    pytest tests/test_agreement_contracts.py -v
"""
import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from contracts.agreement_contracts import AgreementContracts, PenaltyPolicy, Role
from contracts.calldata import ContractCall
from contracts.delta_suite import run_delta_suite
from contracts.layout import LayoutMode, make_address
from evm.gas_schedule import calldata_cost, load_schedule
from evm.trace import dump_trace_csv, read_trace_csv, recompute_gas
from evm.world_state import WorldState
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


# ============================================================
# Fixtures
# ============================================================

@pytest.fixture
def canonical():
    return load_schedule("canonical")


@pytest.fixture
def calibrated():
    return load_schedule("paper-calibrated")


def make_contracts(schedule, **kwargs):
    return AgreementContracts(WorldState(), schedule, **kwargs)


@pytest.fixture
def contracts(canonical):
    return make_contracts(canonical)


def seeded_market(contracts, providers=2, consumers=2, services=2, balance=0):
    """Registered providers with services and registered consumers"""
    provider_accounts = [make_address(100 + n) for n in range(providers)]
    consumer_accounts = [make_address(200 + n) for n in range(consumers)]
    for account in provider_accounts:
        contracts.register_ad(account, Role.PROVIDER)
        for n in range(services):
            contracts.add_service(account, f"S{n + 1}", "edge", 100)
    for account in consumer_accounts:
        contracts.register_ad(account, Role.CONSUMER)
        if balance:
            contracts.state.set_balance(account, balance)
    return provider_accounts, consumer_accounts


RANDOM_FUNCTIONS = ("register_ad", "add_service", "select_service", "register_breach",
                    "calculate_penalty", "transfer_funds", "onboard_provider")


def random_accounts(count=20):
    return [make_address(n, zero_bytes=n % 3) for n in range(count)]


def random_call(rng, tx_id, accounts):
    """One random (sender, call) pair; arguments are drawn to hit both valid and failing paths"""
    function = RANDOM_FUNCTIONS[int(rng.integers(0, len(RANDOM_FUNCTIONS)))]
    sender = accounts[int(rng.integers(0, len(accounts)))]
    other = accounts[int(rng.integers(0, len(accounts)))]
    if function == "register_ad":
        call = ContractCall(function, (int(rng.integers(0, 2)),))
    elif function in ("add_service", "onboard_provider"):
        call = ContractCall(function, (f"S{tx_id}", "edge", int(rng.integers(0, 500))))
    elif function == "select_service":
        call = ContractCall(function, (other, int(rng.integers(0, 7))))
    elif function == "register_breach":
        call = ContractCall(function, (int(rng.integers(0, 4)),))
    elif function == "calculate_penalty":
        call = ContractCall(function, (other,))
    else:
        call = ContractCall(function, (other,), value=int(rng.integers(0, 300)))
    return sender, call


# ============================================================
# Absolute totals
# ============================================================

class TestCanonicalTotals:
    """Hand-derived totals under the mainnet-era schedule"""

    def test_register_ad(self, contracts):
        first = contracts.register_ad(make_address(1), Role.PROVIDER)
        later = contracts.register_ad(make_address(2), Role.PROVIDER)
        consumer = contracts.register_ad(make_address(3), Role.CONSUMER)
        assert first.gas_used == 109604
        assert later.gas_used == 92504
        assert later.gas_used - consumer.gas_used == 19912
        assert contracts.snapshot().ad_count == 3

    def test_add_service_later(self, contracts):
        provider = make_address(1)
        contracts.register_ad(provider, Role.PROVIDER)
        contracts.add_service(provider, "S1", "edge", 100)
        result = contracts.add_service(provider, "S2", "edge", 100)
        assert calldata_cost(result.calldata, contracts.schedule) == 1092
        assert result.gas_used == 142592
        assert result.return_value == 2

    def test_select_service_later(self, contracts):
        (provider, _), (first, second) = seeded_market(contracts)
        contracts.select_service(first, provider, 1)
        result = contracts.select_service(second, provider, 2)
        assert calldata_cost(result.calldata, contracts.schedule) == 572
        assert result.gas_used == 97108
        assert result.events == [("ServiceSelected", 3, 32)]
        assert result.return_value == 2

    def test_calculate_penalty_first(self, contracts):
        provider = make_address(1)
        contracts.register_ad(provider, Role.PROVIDER)
        contracts.register_breach(provider, 1)
        result = contracts.calculate_penalty(provider)
        assert calldata_cost(result.calldata, contracts.schedule) == 432
        assert result.gas_used == 47113
        assert result.return_value == 1
        assert contracts.penalty_of(provider) == 1

    def test_transfer_funds(self, contracts):
        (provider, _), (consumer, _) = seeded_market(contracts, balance=500)
        result = contracts.transfer_funds(consumer, provider, 100)
        assert result.gas_used == 21432
        assert contracts.state.balance_of(consumer) == 400
        assert contracts.state.balance_of(provider) == 100

    def test_register_breach(self, contracts):
        provider = make_address(1)
        contracts.register_ad(provider, Role.PROVIDER)
        assert contracts.register_breach(provider, 1).gas_used == 44685
        assert contracts.register_breach(provider, 1).gas_used == 27585
        assert contracts.breach_count(provider) == 2


class TestCalibratedTotals:
    """Calibrated preset reproduces the observed totals"""

    def test_totals(self, calibrated):
        contracts = make_contracts(calibrated)
        p1, p2 = make_address(1), make_address(2)
        assert contracts.register_ad(p1, Role.PROVIDER).gas_used == 110839
        assert contracts.register_ad(p2, Role.PROVIDER).gas_used == 93739

        contracts.add_service(p2, "S1", "edge", 100)
        assert contracts.add_service(p2, "S2", "edge", 100).gas_used == 146629

        c1, c2 = make_address(10), make_address(11)
        contracts.register_ad(c1, Role.CONSUMER)
        contracts.register_ad(c2, Role.CONSUMER)
        contracts.select_service(c1, p2, 1)
        assert contracts.select_service(c2, p2, 2).gas_used == 138892

        contracts.register_breach(p1, 1)
        assert contracts.calculate_penalty(p1).gas_used == 49134

        contracts.state.set_balance(c1, 1000)
        assert contracts.transfer_funds(c1, p1, 10).gas_used == 31266


# ============================================================
# Error paths
# ============================================================

class TestErrors:
    """Preconditions revert with the right error and leave state unchanged"""

    def test_add_service_unregistered(self, contracts):
        with pytest.raises(UnregisteredProvider):
            contracts.add_service(make_address(1), "S1", "edge", 100)

    def test_add_service_by_consumer(self, contracts):
        consumer = make_address(1)
        contracts.register_ad(consumer, Role.CONSUMER)
        with pytest.raises(RoleViolation):
            contracts.add_service(consumer, "S1", "edge", 100)

    def test_service_limit(self, contracts):
        (provider, _), _ = seeded_market(contracts, services=5)
        with pytest.raises(ServiceLimitExceeded):
            contracts.add_service(provider, "S6", "edge", 100)
        assert contracts.service_count(provider) == 5

    def test_select_by_provider(self, contracts):
        (provider, other), _ = seeded_market(contracts)
        with pytest.raises(RoleViolation):
            contracts.select_service(other, provider, 1)

    def test_select_unknown_provider(self, contracts):
        _, (consumer, _) = seeded_market(contracts)
        with pytest.raises(ProviderNotFound) as exc_info:
            contracts.select_service(consumer, make_address(999), 1)
        # the provider lookup is one cold read
        assert exc_info.value.gas_used == 21000 + 572 + 2200

    @pytest.mark.parametrize("index", [0, 3, 7])
    def test_select_bad_index(self, contracts, index):
        (provider, _), (consumer, _) = seeded_market(contracts)
        with pytest.raises(ServiceNotFound):
            contracts.select_service(consumer, provider, index)
        assert contracts.snapshot().selections == []

    def test_breach_unregistered(self, contracts):
        with pytest.raises(UnregisteredProvider):
            contracts.register_breach(make_address(5), 1)

    def test_breach_by_consumer(self, contracts):
        consumer = make_address(5)
        contracts.register_ad(consumer, Role.CONSUMER)
        with pytest.raises(RoleViolation):
            contracts.register_breach(consumer, 1)

    def test_breach_zero(self, contracts):
        (provider, _), _ = seeded_market(contracts)
        with pytest.raises(InvalidArgument):
            contracts.register_breach(provider, 0)

    def test_penalty_unregistered(self, contracts):
        with pytest.raises(UnregisteredProvider):
            contracts.calculate_penalty(make_address(77))

    def test_unknown_role(self, contracts):
        with pytest.raises(InvalidArgument):
            contracts.execute(make_address(1), ContractCall("register_ad", (2,)))
        assert contracts.snapshot().ad_count == 0

    def test_transfer_zero_value(self, contracts):
        (provider, _), (consumer, _) = seeded_market(contracts, balance=100)
        with pytest.raises(ZeroValue):
            contracts.transfer_funds(consumer, provider, 0)

    def test_transfer_insufficient_balance(self, contracts):
        (provider, _), (consumer, _) = seeded_market(contracts, balance=50)
        with pytest.raises(InsufficientBalance):
            contracts.transfer_funds(consumer, provider, 51)
        assert contracts.state.balance_of(consumer) == 50
        assert contracts.state.balance_of(provider) == 0

    def test_transfer_roles(self, contracts):
        (provider, _), (consumer, other) = seeded_market(contracts, balance=50)
        with pytest.raises(RoleViolation):
            contracts.transfer_funds(consumer, other, 10)
        with pytest.raises(RoleViolation):
            contracts.transfer_funds(provider, provider, 10)

    def test_try_execute_reports_revert(self, contracts):
        result = contracts.try_execute(make_address(1), ContractCall("register_breach", (1,)))
        assert not result.ok
        assert result.status == "reverted"
        assert result.error == "UnregisteredProvider"
        assert result.gas_used == 21000 + 204
        assert isinstance(result.exception, UnregisteredProvider)
        assert result.exception.gas_used == result.gas_used

    def test_revert_leaves_storage_untouched(self, contracts):
        seeded_market(contracts)
        before = contracts.state.storage_snapshot()
        contracts.try_execute(make_address(200), ContractCall("select_service", (make_address(100), 9)))
        assert contracts.state.storage_snapshot() == before


# ============================================================
# Registration and views
# ============================================================

class TestRegistrationAndViews:
    """Re-registration, estimates and snapshots"""

    def test_reregistration_keeps_count(self, contracts):
        account = make_address(1)
        contracts.register_ad(account, Role.PROVIDER)
        contracts.register_ad(account, Role.CONSUMER)
        assert contracts.snapshot().ad_count == 1
        assert contracts.role_of(account) is Role.CONSUMER

    def test_role_of_unregistered(self, contracts):
        assert contracts.role_of(make_address(1)) is None

    def test_registration_time(self, contracts):
        account = make_address(1)
        contracts.register_ad(account, Role.PROVIDER, timestamp=48)
        assert contracts.snapshot().ads[account].registration_time == 48

    def test_estimate_gas_is_dry(self, contracts):
        account = make_address(1)
        estimate = contracts.estimate_gas(account, ContractCall("register_ad", (1,)))
        assert estimate == 109604
        assert contracts.state.storage == {}
        assert contracts.register_ad(account, Role.PROVIDER).gas_used == estimate

    def test_snapshot(self, contracts):
        (p1, p2), (c1, c2) = seeded_market(contracts, balance=100)
        contracts.select_service(c1, p2, 2)
        contracts.register_breach(p1, 2)
        contracts.transfer_funds(c2, p1, 30)

        snap = contracts.snapshot()
        assert snap.ad_count == 4
        assert snap.ads[p1].role is Role.PROVIDER
        assert snap.ads[c1].ad_address == c1
        assert len(snap.services) == 4
        assert snap.services[2].provider == p2
        assert snap.services[2].service_id == "S1"
        assert snap.services[2].location == "edge"
        assert snap.provider_services[p2] == [3, 4]
        assert snap.selections[0].consumer == c1
        assert snap.selections[0].service_index == 2
        assert snap.breach_counts == {p1: 2}
        assert snap.balances[p1] == 30
        assert contracts.service_cost(p2, 2) == 100


# ============================================================
# Penalty policies
# ============================================================

class TestPenaltyPolicies:
    """Threshold follow-ups and inline penalties"""

    def test_threshold_flags_penalty_due(self, canonical):
        contracts = make_contracts(canonical, max_breach=3)
        (provider, _), _ = seeded_market(contracts)
        flags = [contracts.register_breach(provider, 1).penalty_due for _ in range(4)]
        assert flags == [False, False, True, True]
        assert contracts.penalty_of(provider) == 0

    def test_threshold_penalty_value(self, canonical):
        contracts = make_contracts(canonical, fidelity_fee=5, max_breach=3)
        (provider, _), _ = seeded_market(contracts)
        assert contracts.register_breach(provider, 3).penalty_due
        assert contracts.calculate_penalty(provider).return_value == 15

    def test_every_breach_inline(self, canonical):
        contracts = make_contracts(canonical, penalty_policy=PenaltyPolicy.EVERY_BREACH)
        provider = make_address(1)
        contracts.register_ad(provider, Role.PROVIDER)
        result = contracts.register_breach(provider, 1)
        assert not result.penalty_due
        assert contracts.penalty_of(provider) == 1
        assert [event[0] for event in result.events] == ["BreachRegistered", "PenaltyCalculated"]
        # warm re-read of the count, cold penalty set, penalty event
        assert result.gas_used == 44685 + 100 + 22100 + 1381

    def test_invalid_parameters(self, canonical):
        with pytest.raises(ValueError):
            make_contracts(canonical, max_breach=0)
        with pytest.raises(ValueError):
            make_contracts(canonical, fidelity_fee=-1)


# ============================================================
# Onboarding and layouts
# ============================================================

class TestOnboardingAndLayouts:
    """Merged onboarding and the flattened selection path"""

    def test_onboarding_saves_one_transaction(self, canonical):
        separate = make_contracts(canonical)
        provider = make_address(1)
        split_gas = (separate.register_ad(provider, Role.PROVIDER).gas_used
                     + separate.add_service(provider, "S1", "edge", 100).gas_used)

        merged = make_contracts(canonical)
        result = merged.onboard_provider(provider, "S1", "edge", 100)
        assert result.gas_used < split_gas
        assert merged.role_of(provider) is Role.PROVIDER
        assert merged.service_count(provider) == 1
        assert merged.snapshot().ad_count == 1

    def test_flattened_entry_requires_layout(self, contracts):
        with pytest.raises(ValueError):
            contracts.select_service_flattened(make_address(1), make_address(2), 1)

    def test_flattened_select(self, canonical):
        contracts = make_contracts(canonical, layout_mode=LayoutMode.FLATTENED)
        (provider, _), (first, second) = seeded_market(contracts)
        contracts.select_service_flattened(first, provider, 1)
        result = contracts.select_service_flattened(second, provider, 2)
        assert result.gas_used == 21000 + 572 + 2200 + 5000 + 3 * 22100 + 1756
        assert contracts.provider_service_ids(provider) == [1, 2]

    def test_flattened_errors(self, canonical):
        contracts = make_contracts(canonical, layout_mode=LayoutMode.FLATTENED)
        (provider, _), (consumer, _) = seeded_market(contracts)
        with pytest.raises(ProviderNotFound):
            contracts.select_service_flattened(consumer, make_address(999), 1)
        with pytest.raises(ServiceNotFound):
            contracts.select_service_flattened(consumer, provider, 3)
        with pytest.raises(ServiceNotFound):
            contracts.select_service_flattened(consumer, provider, 0)

    def test_flattened_cost_flat_across_indices(self, canonical):
        contracts = make_contracts(canonical, layout_mode=LayoutMode.FLATTENED)
        (provider, _), (consumer, _) = seeded_market(contracts, services=5)
        contracts.select_service(consumer, provider, 1)
        gases = {contracts.select_service(consumer, provider, k).gas_used for k in range(1, 6)}
        assert len(gases) == 1


# ============================================================
# Calldata pricing properties
# ============================================================

class TestCalldataProperties:
    """Zero/non-zero byte flips move gas by exactly the byte price gap"""

    def test_random_byte_flips(self, canonical):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            payload = bytearray(int(b) for b in rng.integers(0, 256, size=int(rng.integers(1, 200))))
            position = int(rng.integers(0, len(payload)))
            payload[position] = 0
            zeroed = calldata_cost(bytes(payload), canonical)
            payload[position] = int(rng.integers(1, 256))
            assert calldata_cost(bytes(payload), canonical) - zeroed == canonical.byte_flip_delta

    @pytest.mark.parametrize("zero_bytes", [1, 2, 5])
    def test_address_flips_at_execution(self, canonical, zero_bytes):
        contracts = make_contracts(canonical)
        dense = make_address(1)
        sparse = make_address(1, zero_bytes=zero_bytes)
        for account in (dense, sparse):
            contracts.register_ad(account, Role.PROVIDER)
            contracts.register_breach(account, 1)
        gap = contracts.calculate_penalty(dense).gas_used - contracts.calculate_penalty(sparse).gas_used
        assert gap == zero_bytes * canonical.byte_flip_delta

    def test_make_address_shape(self):
        account = make_address(3, zero_bytes=4)
        assert len(account) == 20
        assert account[:4] == bytes(4)
        assert all(account[4:])
        with pytest.raises(ValueError):
            make_address(3, zero_bytes=20)


# ============================================================
# Trace oracle over random traffic
# ============================================================

class TestTraceOracle:
    """Meter and independent recomputation agree on every transaction"""

    @pytest.mark.parametrize("layout_mode", [LayoutMode.NESTED, LayoutMode.FLATTENED])
    def test_random_transactions(self, layout_mode):
        schedule = load_schedule("paper-calibrated")
        contracts = make_contracts(schedule, layout_mode=layout_mode)
        rng = np.random.default_rng(2024)
        accounts = random_accounts()
        for account in accounts[:10]:
            contracts.state.set_balance(account, 10_000)

        outcomes = set()
        for tx_id in range(1, 1001):
            sender, call = random_call(rng, tx_id, accounts)
            function = call.function
            result = contracts.try_execute(sender, call, tx_id=tx_id, timestamp=12 * (1 + tx_id // 10))
            outcomes.add(result.status)
            assert recompute_gas(result.trace, result.calldata, schedule) == result.gas_used, \
                f"tx {tx_id} {function} {result.status}"

        assert outcomes == {"ok", "reverted"}

    def test_recompute_from_csv_dump(self, tmp_path):
        schedule = load_schedule("paper-calibrated")
        executed = []
        contracts = make_contracts(schedule, result_log=executed)
        rng = np.random.default_rng(99)
        accounts = random_accounts()
        for account in accounts[:10]:
            contracts.state.set_balance(account, 10_000)
        for tx_id in range(1, 1001):
            sender, call = random_call(rng, tx_id, accounts)
            contracts.try_execute(sender, call, tx_id=tx_id, timestamp=12 * (1 + tx_id // 10))
        # estimates are dry runs and stay out of the log
        contracts.estimate_gas(accounts[0], ContractCall("register_ad", (1,)))

        path = dump_trace_csv(executed, tmp_path / "trace.csv")
        loaded = read_trace_csv(path)
        assert [tx.tx_id for tx in loaded] == list(range(1, 1001))
        for tx, original in zip(loaded, executed):
            assert tx.gas_used == original.gas_used
            assert recompute_gas(tx.trace, tx.calldata, schedule) == tx.gas_used, f"tx {tx.tx_id} {tx.function}"

    def test_delta_suite_transactions_recompute(self, tmp_path):
        schedule = load_schedule("canonical")
        executed = []
        run_delta_suite(schedule, result_log=executed)
        loaded = read_trace_csv(dump_trace_csv(executed, tmp_path / "delta.csv"))
        assert len(loaded) == len(executed) > 12
        assert all(recompute_gas(tx.trace, tx.calldata, schedule) == tx.gas_used for tx in loaded)


# ============================================================
# Layout equivalence and role gates
# ============================================================

class TestLayoutEquivalence:
    """Nested and flattened layouts differ only in select gas"""

    def test_paired_random_traffic(self, canonical):
        nested = make_contracts(canonical, layout_mode=LayoutMode.NESTED)
        flattened = make_contracts(canonical, layout_mode=LayoutMode.FLATTENED)
        rng = np.random.default_rng(7)
        accounts = random_accounts()
        for account in accounts[:10]:
            nested.state.set_balance(account, 10_000)
            flattened.state.set_balance(account, 10_000)

        selects = 0
        for tx_id in range(1, 1501):
            sender, call = random_call(rng, tx_id, accounts)
            timestamp = 12 * (1 + tx_id // 10)
            a = nested.try_execute(sender, call, tx_id=tx_id, timestamp=timestamp)
            b = flattened.try_execute(sender, call, tx_id=tx_id, timestamp=timestamp)
            assert (a.status, a.error, a.return_value) == (b.status, b.error, b.return_value), \
                f"tx {tx_id} {call.function}"
            if call.function == "select_service" and a.ok:
                selects += 1
                assert b.gas_used <= a.gas_used, f"tx {tx_id} select index {call.args[1]}"

        assert selects > 0
        assert nested.snapshot() == flattened.snapshot()


UNREGISTERED, CONSUMER, PROVIDER = "unregistered", "consumer", "provider"


def expected_error(operation, sender_role, target_role):
    """Error class a role combination must revert with, or None when the call succeeds"""
    if operation in ("add_service", "register_breach"):
        return {UNREGISTERED: UnregisteredProvider, CONSUMER: RoleViolation, PROVIDER: None}[sender_role]
    if operation == "select_service":
        if sender_role != CONSUMER:
            return RoleViolation
        return {UNREGISTERED: ProviderNotFound, CONSUMER: ServiceNotFound, PROVIDER: None}[target_role]
    if operation == "transfer_funds":
        return None if (sender_role, target_role) == (CONSUMER, PROVIDER) else RoleViolation
    return UnregisteredProvider if target_role == UNREGISTERED else None


class TestRoleGates:
    """Every (sender role, operation, target role) combination"""

    @pytest.mark.parametrize("layout_mode", [LayoutMode.NESTED, LayoutMode.FLATTENED])
    @pytest.mark.parametrize("target_role", [UNREGISTERED, CONSUMER, PROVIDER])
    @pytest.mark.parametrize("sender_role", [UNREGISTERED, CONSUMER, PROVIDER])
    @pytest.mark.parametrize("operation", ["add_service", "select_service", "register_breach",
                                           "calculate_penalty", "transfer_funds"])
    def test_role_combination(self, canonical, operation, sender_role, target_role, layout_mode):
        contracts = make_contracts(canonical, layout_mode=layout_mode)
        (p1, p2), (c1, c2) = seeded_market(contracts, balance=100)
        senders = {UNREGISTERED: make_address(999), CONSUMER: c1, PROVIDER: p1}
        targets = {UNREGISTERED: make_address(998), CONSUMER: c2, PROVIDER: p2}
        target = targets[target_role]
        calls = {
            "add_service": ContractCall("add_service", ("S9", "edge", 100)),
            "select_service": ContractCall("select_service", (target, 1)),
            "register_breach": ContractCall("register_breach", (1,)),
            "calculate_penalty": ContractCall("calculate_penalty", (target,)),
            "transfer_funds": ContractCall("transfer_funds", (target,), value=10),
        }
        storage_before = contracts.state.storage_snapshot()
        balances_before = (contracts.state.balance_of(senders[sender_role]), contracts.state.balance_of(target))

        result = contracts.try_execute(senders[sender_role], calls[operation])

        expected = expected_error(operation, sender_role, target_role)
        if expected is None:
            assert result.ok, f"{result.error}"
            return
        assert result.error == expected.__name__
        assert isinstance(result.exception, ContractError)
        assert contracts.state.storage_snapshot() == storage_before
        assert (contracts.state.balance_of(senders[sender_role]),
                contracts.state.balance_of(target)) == balances_before
