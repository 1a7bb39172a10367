#!/usr/bin/env python3
"""
Gas cost schedule and the pure cost functions built on it.

Defaults follow the post-Berlin/London mainnet values. Presets live as flat YAML
mappings under evm/config/ and are loaded through load_schedule().

Usage:
    from evm.gas_schedule import load_schedule, calldata_cost

    schedule = load_schedule("canonical")
    calldata_cost(bytes.fromhex("61d689fa" + "00" * 31 + "01"), schedule)  # 204
"""
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Union

import yaml

from sim_errors import ConfigInvalid

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "config"

# Preset name -> file under evm/config/
PRESETS = {
    "canonical": "canonical.yaml",
    "paper-calibrated": "paper_calibrated.yaml",
}

# Functions that may carry a fixed per-call overhead
OVERHEAD_FUNCTIONS = (
    "register_ad",
    "add_service",
    "select_service",
    "register_breach",
    "calculate_penalty",
    "transfer_funds",
    "onboard_provider",
)

OVERHEAD_PREFIX = "overhead."


@dataclass(frozen=True)
class GasSchedule:
    """Every gas constant the simulator charges. Immutable once built."""

    tx_intrinsic: int = 21000
    calldata_zero_byte: int = 4
    calldata_nonzero_byte: int = 16
    sload_warm: int = 100
    sload_cold: int = 2100
    sstore_set: int = 20000
    sstore_reset: int = 2900
    sstore_noop: int = 100
    sstore_cold_surcharge: int = 2100
    log_base: int = 375
    log_topic: int = 375
    log_data_byte: int = 8
    traversal_per_index: int = 140
    per_function_overhead: Mapping[str, int] = field(default_factory=lambda: MappingProxyType({}))
    name: str = "canonical"

    def __post_init__(self):
        # Freeze whatever mapping was handed in
        object.__setattr__(self, "per_function_overhead", MappingProxyType(dict(self.per_function_overhead)))
        self.validate_or_raise()

    def validate_or_raise(self) -> None:
        """
        Check the schedule invariants

        Raises:
            ConfigInvalid: When a constant is negative or an ordering invariant is broken
        """
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, int) and value < 0:
                raise ConfigInvalid(f"Gas constant '{f.name}' must be >= 0 (got {value})")

        for function, gas in self.per_function_overhead.items():
            if function not in OVERHEAD_FUNCTIONS:
                raise ConfigInvalid(f"Unknown overhead function '{function}'")
            if not isinstance(gas, int) or gas < 0:
                raise ConfigInvalid(f"Overhead for '{function}' must be a non-negative integer (got {gas!r})")

        if self.calldata_nonzero_byte <= self.calldata_zero_byte:
            raise ConfigInvalid("calldata_nonzero_byte must exceed calldata_zero_byte")
        if not self.sstore_set > self.sstore_reset > self.sstore_noop:
            raise ConfigInvalid("sstore costs must satisfy sstore_set > sstore_reset > sstore_noop")
        if self.sload_cold <= 0 or self.sload_warm <= 0:
            raise ConfigInvalid("sload_cold and sload_warm must be positive")

    def overhead(self, function: str) -> int:
        """Return the fixed overhead for a contract function (0 when unset)"""
        return self.per_function_overhead.get(function, 0)

    def with_overrides(self, **overrides) -> "GasSchedule":
        """Return a copy with some constants replaced (validated again)"""
        return replace(self, **overrides)

    @property
    def byte_flip_delta(self) -> int:
        """Gas difference between a non-zero and a zero calldata byte"""
        return self.calldata_nonzero_byte - self.calldata_zero_byte

    @property
    def set_reset_delta(self) -> int:
        """Gas difference between a first write and an update of the same coldness"""
        return self.sstore_set - self.sstore_reset

    def to_dict(self) -> dict:
        """Flat mapping in the preset file format"""
        result = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "per_function_overhead"}
        for function in sorted(self.per_function_overhead):
            result[f"{OVERHEAD_PREFIX}{function}"] = self.per_function_overhead[function]
        return result

    @classmethod
    def from_mapping(cls, data: Mapping, name: str = "custom") -> "GasSchedule":
        """
        Build a schedule from a flat mapping

        Args:
            data: Flat key-value mapping; overheads use 'overhead.<function>' keys
            name: Label used when the mapping has no 'name' key

        Returns:
            GasSchedule: Validated schedule

        Raises:
            ConfigInvalid: On unknown keys or invalid values
        """
        if not isinstance(data, Mapping):
            raise ConfigInvalid("Gas schedule must be a flat key-value mapping")

        known = {f.name for f in fields(cls)} - {"per_function_overhead"}
        kwargs = {"name": name}
        overheads = {}

        for key, value in data.items():
            key = str(key)
            if key.startswith(OVERHEAD_PREFIX):
                overheads[key[len(OVERHEAD_PREFIX):]] = value
            elif key in known:
                if key != "name" and (isinstance(value, bool) or not isinstance(value, int)):
                    raise ConfigInvalid(f"Gas constant '{key}' must be an integer (got {value!r})")
                kwargs[key] = value
            else:
                raise ConfigInvalid(f"Unknown gas schedule key '{key}'")

        return cls(per_function_overhead=overheads, **kwargs)


def load_schedule(name_or_path: Union[str, Path] = "canonical") -> GasSchedule:
    """
    Load a gas schedule preset by name or from a YAML file

    Args:
        name_or_path: 'canonical', 'paper-calibrated' or a path to a flat YAML file

    Returns:
        GasSchedule: Validated schedule

    Raises:
        ConfigInvalid: When the file is missing or its contents are invalid
    """
    key = str(name_or_path)
    path = CONFIG_DIR / PRESETS[key] if key in PRESETS else Path(key)

    if not path.is_file():
        raise ConfigInvalid(f"Gas schedule file not found: {path}")

    try:
        with open(path, encoding="UTF-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigInvalid(f"Cannot parse gas schedule {path}: {e}") from e

    schedule = GasSchedule.from_mapping(data, name=key if key in PRESETS else path.stem)
    logger.debug(f"Gas schedule loaded: {schedule.name} ({path})")
    return schedule


def calldata_cost(data: bytes, schedule: GasSchedule) -> int:
    """Gas for a calldata payload: zero and non-zero bytes priced separately"""
    zero_bytes = data.count(0)
    return zero_bytes * schedule.calldata_zero_byte + (len(data) - zero_bytes) * schedule.calldata_nonzero_byte


def sstore_cost(current: int, new: int, is_cold: bool, schedule: GasSchedule) -> int:
    """
    Gas for one storage write under the simplified (current, new) rule

    Args:
        current: Word currently stored
        new: Word being written
        is_cold: First touch of the slot in this transaction
        schedule: Gas schedule

    Returns:
        int: noop/set/reset base plus the cold surcharge when applicable
    """
    if new == current:
        base = schedule.sstore_noop
    elif current == 0:
        base = schedule.sstore_set
    else:
        base = schedule.sstore_reset
    return base + (schedule.sstore_cold_surcharge if is_cold else 0)


def sload_cost(is_cold: bool, schedule: GasSchedule) -> int:
    """Gas for one storage read"""
    return schedule.sload_warm + (schedule.sload_cold if is_cold else 0)


def log_cost(topic_count: int, data_length: int, schedule: GasSchedule) -> int:
    """Gas for one emitted event"""
    if topic_count < 0:
        raise ValueError(f"topic_count must be >= 0 (got {topic_count})")
    return schedule.log_base + topic_count * schedule.log_topic + data_length * schedule.log_data_byte
