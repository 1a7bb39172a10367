"""
Transaction, receipt and block records plus the chain and ambient-load settings
"""
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import yaml

from contracts.calldata import ContractCall
from sim_errors import ConfigInvalid

CONFIG_DIR = Path(__file__).parent / "config"
BACKGROUND_PRESETS_FILE = CONFIG_DIR / "background.yaml"

ENVELOPE_BYTES = 110
DEFAULT_GAS_LIMIT = 30_000_000
DEFAULT_SLOT_INTERVAL = 12
OPTIONAL_KEYS = ("max_fill", "fee_bar_gwei")


@dataclass
class Transaction:
    """
    One pending transaction

    Workflow transactions carry a ContractCall and are executed against the world
    state. Ambient transactions have call=None; they consume gas_estimate and
    calldata_len bytes without touching contract state.
    """
    tx_id: int
    sender: Optional[bytes]
    call: Optional[ContractCall]
    priority_fee: float
    gas_estimate: int
    submit_time: float
    depends_on: Optional[int] = None
    gas_price_gwei: float = 0.0
    calldata_len: int = 0
    is_background: bool = False
    labels: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.submit_time < 0:
            raise ValueError(f"submit_time must be >= 0 (got {self.submit_time})")
        if self.gas_estimate < 0:
            raise ValueError(f"gas_estimate must be >= 0 (got {self.gas_estimate})")
        if self.call is not None and not self.calldata_len:
            self.calldata_len = len(self.call.calldata())

    @property
    def function(self) -> str:
        return self.call.function if self.call is not None else "background"

    @property
    def byte_size(self) -> int:
        return ENVELOPE_BYTES + self.calldata_len


@dataclass
class Receipt:
    """Inclusion record of a workflow transaction"""
    tx_id: int
    function: str
    block_number: int
    block_timestamp: float
    submit_time: float
    selection_time: float
    gas_used: int
    priority_fee: float
    gas_price_gwei: float
    status: str = "ok"
    error: Optional[str] = None
    return_value: Optional[int] = None
    penalty_due: bool = False
    depends_on: Optional[int] = None

    @property
    def mempool_time(self) -> float:
        return self.selection_time - self.submit_time

    @property
    def latency(self) -> float:
        return self.block_timestamp - self.submit_time


@dataclass
class Block:
    slot_number: int
    timestamp: float
    gas_limit: int
    transactions: List[int] = field(default_factory=list)
    gas_used: int = 0
    byte_size: int = 0
    background_count: int = 0

    @property
    def tx_count(self) -> int:
        return len(self.transactions)

    @property
    def utilization(self) -> float:
        return self.gas_used / self.gas_limit if self.gas_limit else 0.0


def _lognormal_mu(mean: float, sigma: float) -> float:
    """Location parameter of a log-normal with the given arithmetic mean"""
    return math.log(mean) - sigma ** 2 / 2


@dataclass(frozen=True)
class BackgroundLoad:
    """
    Ambient traffic competing with the workflow for block space

    Arrival counts are Poisson(arrival_rate) per slot; gas and calldata size are
    log-normal with the given arithmetic means; the priority fee is
    fee_floor_gwei plus a log-normal premium with median fee_median_gwei.
    max_fill, when set, truncates a slot's arrivals once their gas would exceed
    max_fill x gas_limit.

    fee_bar_gwei, when set, is the validators' inclusion bar: transactions
    tipping below it (workflow and ambient alike) share at most below_bar_gas
    of each block.
    """
    arrival_rate: float = 0.0
    gas_mean: float = 175_000.0
    gas_sigma: float = 0.5
    calldata_mean: float = 900.0
    calldata_sigma: float = 0.6
    fee_floor_gwei: float = 0.0
    fee_median_gwei: float = 1.5
    fee_sigma: float = 0.5
    max_fill: Optional[float] = None
    fee_bar_gwei: Optional[float] = None
    below_bar_gas: float = 0.0
    name: str = "custom"

    def validate_or_raise(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "name" or value is None:
                continue
            if value < 0:
                raise ConfigInvalid(f"background '{self.name}': {f.name} must be >= 0 (got {value})")
        if self.arrival_rate > 0 and (self.gas_mean <= 0 or self.fee_median_gwei <= 0):
            raise ConfigInvalid(f"background '{self.name}': gas_mean and fee_median_gwei must be > 0")
        if self.max_fill is not None and not 0 < self.max_fill <= 1:
            raise ConfigInvalid(f"background '{self.name}': max_fill must be in (0, 1] (got {self.max_fill})")

    @property
    def gas_mu(self) -> float:
        return _lognormal_mu(self.gas_mean, self.gas_sigma)

    @property
    def calldata_mu(self) -> float:
        return _lognormal_mu(self.calldata_mean, self.calldata_sigma)

    @property
    def fee_mu(self) -> float:
        return math.log(self.fee_median_gwei)

    def scaled(self, arrival_rate: float) -> "BackgroundLoad":
        """Same load shape at a different arrival rate"""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values["arrival_rate"] = arrival_rate
        return BackgroundLoad(**values)

    @classmethod
    def from_mapping(cls, data: Mapping, name: str = "custom") -> "BackgroundLoad":
        known = {f.name for f in fields(cls)} - {"name"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigInvalid(f"background '{name}': unknown keys {unknown}")
        missing = sorted(key for key, value in data.items() if value is None and key not in OPTIONAL_KEYS)
        if missing:
            raise ConfigInvalid(f"background '{name}': empty values for {missing}")
        try:
            values = {key: (None if value is None else float(value)) for key, value in data.items()}
        except (TypeError, ValueError) as e:
            raise ConfigInvalid(f"background '{name}': non-numeric value ({e})")
        load = cls(name=name, **values)
        load.validate_or_raise()
        return load


def load_background(name_or_mapping: Union[str, Mapping, None]) -> BackgroundLoad:
    """
    Resolve a background preset name (or an inline mapping) to a BackgroundLoad

    Raises:
        ConfigInvalid: Unknown preset name or invalid parameters
    """
    if name_or_mapping is None:
        return BackgroundLoad(name="none")
    if isinstance(name_or_mapping, Mapping):
        return BackgroundLoad.from_mapping(name_or_mapping)

    with open(BACKGROUND_PRESETS_FILE, encoding="UTF-8") as f:
        presets = yaml.safe_load(f) or {}
    if name_or_mapping not in presets:
        raise ConfigInvalid(f"unknown background preset '{name_or_mapping}' (known: {sorted(presets)})")
    return BackgroundLoad.from_mapping(presets[name_or_mapping] or {}, name=name_or_mapping)


@dataclass(frozen=True)
class ChainConfig:
    """
    Args:
        slot_interval: Seconds between blocks
        gas_limit: Block gas limit
        background: Ambient traffic model
        strict_order: Stop packing at the first transaction that does not fit
        build_lead: Seconds between the mempool snapshot and the block timestamp
        followup_delay: Seconds between a receipt and its follow-up submission
        seed: Root seed for ambient traffic
        iteration: Iteration index mixed into the ambient traffic seed
    """
    slot_interval: float = DEFAULT_SLOT_INTERVAL
    gas_limit: int = DEFAULT_GAS_LIMIT
    background: BackgroundLoad = field(default_factory=lambda: BackgroundLoad(name="none"))
    strict_order: bool = False
    build_lead: float = 0.0
    followup_delay: float = 0.0
    seed: int = 42
    iteration: int = 0

    def validate_or_raise(self) -> None:
        if self.slot_interval <= 0:
            raise ConfigInvalid(f"slot_interval must be > 0 (got {self.slot_interval})")
        if self.gas_limit <= 0:
            raise ConfigInvalid(f"gas_limit must be > 0 (got {self.gas_limit})")
        if not 0 <= self.build_lead < self.slot_interval:
            raise ConfigInvalid(f"build_lead must be in [0, slot_interval) (got {self.build_lead})")
        if self.followup_delay < 0:
            raise ConfigInvalid(f"followup_delay must be >= 0 (got {self.followup_delay})")
        self.background.validate_or_raise()
