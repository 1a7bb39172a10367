#!/usr/bin/env python3
"""
Gas schedule tests

    pytest tests/test_gas_schedule.py -v
"""
import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from evm.gas_schedule import (
    GasSchedule,
    calldata_cost,
    load_schedule,
    log_cost,
    sload_cost,
    sstore_cost,
)
from sim_errors import ConfigInvalid


# ============================================================
# Fixtures
# ============================================================

@pytest.fixture
def canonical():
    return load_schedule("canonical")


@pytest.fixture
def calibrated():
    return load_schedule("paper-calibrated")


# ============================================================
# Presets
# ============================================================

class TestPresets:
    """Shipped presets"""

    def test_canonical_constants(self, canonical):
        """Canonical preset carries the mainnet-era constants"""
        assert canonical.tx_intrinsic == 21000
        assert canonical.calldata_zero_byte == 4
        assert canonical.calldata_nonzero_byte == 16
        assert canonical.sload_warm == 100
        assert canonical.sload_cold == 2100
        assert canonical.sstore_set == 20000
        assert canonical.sstore_reset == 2900
        assert canonical.sstore_noop == 100
        assert canonical.sstore_cold_surcharge == 2100
        assert canonical.traversal_per_index == 140
        assert dict(canonical.per_function_overhead) == {}
        assert canonical.name == "canonical"

    def test_calibrated_only_adds_overheads(self, canonical, calibrated):
        """Calibrated preset differs from canonical only in per-function overheads"""
        base = {k: v for k, v in canonical.to_dict().items() if not k.startswith("overhead.") and k != "name"}
        fitted = {k: v for k, v in calibrated.to_dict().items() if not k.startswith("overhead.") and k != "name"}
        assert base == fitted
        assert calibrated.overhead("register_ad") == 1235
        assert calibrated.overhead("add_service") == 4037
        assert calibrated.overhead("select_service") == 41784
        assert calibrated.overhead("calculate_penalty") == 2021
        assert calibrated.overhead("transfer_funds") == 9834
        assert calibrated.overhead("register_breach") == 0

    def test_derived_deltas(self, canonical):
        """Byte flip and set/reset deltas come from the constants"""
        assert canonical.byte_flip_delta == 12
        assert canonical.set_reset_delta == 17100

    def test_missing_file(self, tmp_path):
        """A path that does not exist is a configuration error"""
        with pytest.raises(ConfigInvalid, match="not found"):
            load_schedule(tmp_path / "nope.yaml")

    def test_load_from_path(self, tmp_path):
        """A custom YAML file overrides defaults and takes its stem as name"""
        path = tmp_path / "tampered.yaml"
        path.write_text("sstore_set: 19000\noverhead.register_ad: 7\n", encoding="UTF-8")
        schedule = load_schedule(path)
        assert schedule.sstore_set == 19000
        assert schedule.sstore_reset == 2900
        assert schedule.overhead("register_ad") == 7
        assert schedule.name == "tampered"

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("sstore_set: [1, 2\n", encoding="UTF-8")
        with pytest.raises(ConfigInvalid):
            load_schedule(path)


# ============================================================
# Validation
# ============================================================

class TestValidation:
    """Schedule invariants"""

    def test_negative_constant(self):
        with pytest.raises(ConfigInvalid, match="must be >= 0"):
            GasSchedule(log_topic=-1)

    def test_calldata_ordering(self):
        with pytest.raises(ConfigInvalid, match="calldata_nonzero_byte"):
            GasSchedule(calldata_zero_byte=16, calldata_nonzero_byte=16)

    def test_sstore_ordering(self):
        with pytest.raises(ConfigInvalid, match="sstore"):
            GasSchedule(sstore_reset=20000)

    def test_unknown_key(self):
        with pytest.raises(ConfigInvalid, match="Unknown gas schedule key"):
            GasSchedule.from_mapping({"sstore_sett": 20000})

    def test_unknown_overhead_function(self):
        with pytest.raises(ConfigInvalid, match="Unknown overhead function"):
            GasSchedule.from_mapping({"overhead.mint": 5})

    def test_non_integer_value(self):
        with pytest.raises(ConfigInvalid, match="must be an integer"):
            GasSchedule.from_mapping({"sload_warm": "100"})
        with pytest.raises(ConfigInvalid, match="must be an integer"):
            GasSchedule.from_mapping({"sload_warm": True})

    def test_with_overrides_revalidates(self, canonical):
        """Overrides produce a new validated schedule and leave the original untouched"""
        tampered = canonical.with_overrides(sstore_set=19000)
        assert tampered.sstore_set == 19000
        assert canonical.sstore_set == 20000
        with pytest.raises(ConfigInvalid):
            canonical.with_overrides(sstore_noop=5000)

    def test_overheads_are_read_only(self, calibrated):
        with pytest.raises(TypeError):
            calibrated.per_function_overhead["register_ad"] = 0


# ============================================================
# Cost functions
# ============================================================

class TestCostFunctions:
    """Pure pricing functions"""

    def test_calldata_cost(self, canonical):
        assert calldata_cost(b"", canonical) == 0
        assert calldata_cost(bytes(32), canonical) == 128
        assert calldata_cost(b"\x01" * 32, canonical) == 512
        assert calldata_cost(b"\x00\x01\x00\xff", canonical) == 2 * 4 + 2 * 16

    @pytest.mark.parametrize("current,new,is_cold,expected", [
        (0, 0, True, 2200),
        (0, 0, False, 100),
        (0, 5, True, 22100),
        (0, 5, False, 20000),
        (5, 6, True, 5000),
        (5, 6, False, 2900),
        (5, 5, True, 2200),
        (5, 0, False, 2900),
    ])
    def test_sstore_cost(self, canonical, current, new, is_cold, expected):
        """noop / set / reset plus the cold surcharge"""
        assert sstore_cost(current, new, is_cold, canonical) == expected

    def test_sload_cost(self, canonical):
        assert sload_cost(True, canonical) == 2200
        assert sload_cost(False, canonical) == 100

    def test_event_costs(self, canonical):
        """The three contract events"""
        assert log_cost(3, 32, canonical) == 1756
        assert log_cost(2, 32, canonical) == 1381
        assert log_cost(0, 0, canonical) == 375

    def test_negative_topics(self, canonical):
        with pytest.raises(ValueError):
            log_cost(-1, 0, canonical)
