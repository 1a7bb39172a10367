"""
Scenario configuration and presets

A scenario is a flat YAML mapping. Presets live under workload/config/ and are
addressed by file stem ("registration-sweep"); any other value is read as a path.
"""
import logging
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Tuple, Union

import yaml

from chain.transactions import (
    DEFAULT_GAS_LIMIT,
    DEFAULT_SLOT_INTERVAL,
    BackgroundLoad,
    ChainConfig,
    load_background,
)
from contracts.agreement_contracts import MAX_SERVICES_PER_PROVIDER, PenaltyPolicy
from contracts.layout import LayoutMode
from sim_errors import ConfigInvalid

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "config"

STAGES = ("register", "add_service", "select", "breach", "penalty", "transfer")

# stage -> stages that must also be enabled
STAGE_REQUIRES = {
    "register": (),
    "add_service": ("register",),
    "select": ("add_service",),
    "breach": ("register",),
    "penalty": ("breach",),
    "transfer": ("select",),
}


class JitterMode(str, Enum):
    UNIFORM = "uniform"
    BURST = "burst"
    STAGGERED = "staggered"


@dataclass(frozen=True)
class ScenarioConfig:
    """
    One experiment: a batch-size sweep of the agreement workflow

    A batch of N participants holds round(N x role_split) providers and the rest
    consumers. Each (batch size, iteration) runs on a fresh chain.
    """
    name: str = "custom"
    batch_sizes: Tuple[int, ...] = (2, 16, 30, 44, 58, 72, 86, 100)
    iterations: int = 10
    stages: Tuple[str, ...] = STAGES
    role_split: float = 0.5
    services_per_provider: int = 1
    breaches_per_provider: int = 3
    service_cost: int = 100
    layout: LayoutMode = LayoutMode.NESTED
    penalty_policy: PenaltyPolicy = PenaltyPolicy.THRESHOLD
    fidelity_fee: int = 1
    max_breach: int = 3
    schedule: str = "canonical"

    # fees
    priority_fee_gwei: float = 1.0
    urgent_bump_gwei: float = 0.0
    urgent_functions: Tuple[str, ...] = ("calculate_penalty",)

    # submission
    jitter: JitterMode = JitterMode.UNIFORM
    stagger_window: float = 60.0
    merge_onboarding: bool = False
    throttle_utilization: Optional[float] = None
    throttle_window: int = 3
    throttle_max_wait: int = 10

    # settlement
    settlement: bool = False
    initial_balance: int = 1_000

    # chain
    background: str = "sepolia-baseline"
    background_rate: Optional[float] = None
    slot_interval: float = DEFAULT_SLOT_INTERVAL
    gas_limit: int = DEFAULT_GAS_LIMIT
    build_lead: float = 0.0
    followup_delay: float = 0.0
    strict_order: bool = False
    max_slots: int = 500

    seed: int = 42

    def validate_or_raise(self) -> None:
        """
        Raises:
            ConfigInvalid: Any field out of range or inconsistent
        """
        if not self.batch_sizes:
            raise ConfigInvalid(f"scenario '{self.name}': batch_sizes is empty")
        if any(size < 1 for size in self.batch_sizes):
            raise ConfigInvalid(f"scenario '{self.name}': batch sizes must be >= 1 (got {list(self.batch_sizes)})")
        if len(set(self.batch_sizes)) != len(self.batch_sizes):
            raise ConfigInvalid(f"scenario '{self.name}': duplicate batch sizes {list(self.batch_sizes)}")
        if self.iterations < 1:
            raise ConfigInvalid(f"scenario '{self.name}': iterations must be >= 1")
        if not 0 <= self.role_split <= 1:
            raise ConfigInvalid(f"scenario '{self.name}': role_split must be in [0, 1] (got {self.role_split})")
        if not 1 <= self.services_per_provider <= MAX_SERVICES_PER_PROVIDER:
            raise ConfigInvalid(f"scenario '{self.name}': services_per_provider must be in "
                                f"[1, {MAX_SERVICES_PER_PROVIDER}] (got {self.services_per_provider})")
        if self.breaches_per_provider < 1:
            raise ConfigInvalid(f"scenario '{self.name}': breaches_per_provider must be >= 1")
        if self.service_cost < 0 or self.initial_balance < 0 or self.fidelity_fee < 0:
            raise ConfigInvalid(f"scenario '{self.name}': costs and balances must be >= 0")
        if self.max_breach < 1:
            raise ConfigInvalid(f"scenario '{self.name}': max_breach must be >= 1")
        if self.priority_fee_gwei < 0 or self.urgent_bump_gwei < 0:
            raise ConfigInvalid(f"scenario '{self.name}': fees must be >= 0")
        if self.stagger_window <= 0:
            raise ConfigInvalid(f"scenario '{self.name}': stagger_window must be > 0")
        if self.throttle_utilization is not None and not 0 < self.throttle_utilization <= 1:
            raise ConfigInvalid(f"scenario '{self.name}': throttle_utilization must be in (0, 1]")
        if self.throttle_window < 1 or self.throttle_max_wait < 0:
            raise ConfigInvalid(f"scenario '{self.name}': throttle_window >= 1 and throttle_max_wait >= 0 required")
        if self.max_slots < 1:
            raise ConfigInvalid(f"scenario '{self.name}': max_slots must be >= 1")
        if self.background_rate is not None and self.background_rate < 0:
            raise ConfigInvalid(f"scenario '{self.name}': background_rate must be >= 0")

        unknown = [stage for stage in self.stages if stage not in STAGES]
        if unknown or not self.stages:
            raise ConfigInvalid(f"scenario '{self.name}': unknown or empty stages {unknown} (known: {list(STAGES)})")
        for stage in self.stages:
            missing = [req for req in STAGE_REQUIRES[stage] if req not in self.stages]
            if missing:
                raise ConfigInvalid(f"scenario '{self.name}': stage '{stage}' requires {missing}")
        if "select" in self.stages:
            for size in self.batch_sizes:
                providers, consumers = self.split(size)
                if not providers or not consumers:
                    raise ConfigInvalid(f"scenario '{self.name}': batch {size} needs at least one provider "
                                        f"and one consumer to select (role_split {self.role_split})")

        self.chain_config().validate_or_raise()

    def split(self, batch_size: int) -> Tuple[int, int]:
        """(providers, consumers) in a batch"""
        providers = int(round(batch_size * self.role_split))
        return providers, batch_size - providers

    def background_load(self) -> BackgroundLoad:
        load = load_background(self.background)
        if self.background_rate is not None:
            load = load.scaled(self.background_rate)
        return load

    def chain_config(self, iteration: int = 0) -> ChainConfig:
        return ChainConfig(
            slot_interval=self.slot_interval,
            gas_limit=self.gas_limit,
            background=self.background_load(),
            strict_order=self.strict_order,
            build_lead=self.build_lead,
            followup_delay=self.followup_delay,
            seed=self.seed,
            iteration=iteration,
        )

    def fee_for(self, function: str) -> float:
        bump = self.urgent_bump_gwei if function in self.urgent_functions else 0.0
        return self.priority_fee_gwei + bump

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        """Copy with CLI-style overrides applied (None values are ignored)"""
        overrides = {key: value for key, value in overrides.items() if value is not None}
        scenario = replace(self, **_coerce(overrides, self.name))
        scenario.validate_or_raise()
        return scenario

    def to_dict(self) -> dict:
        values = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            values[f.name] = value
        return values

    @classmethod
    def from_mapping(cls, data: Mapping, name: str = "custom") -> "ScenarioConfig":
        """
        Raises:
            ConfigInvalid: Unknown keys or values of the wrong type
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigInvalid(f"scenario '{name}': unknown keys {unknown}")
        values = dict(data)
        values.setdefault("name", name)
        scenario = cls(**_coerce(values, name))
        scenario.validate_or_raise()
        return scenario


def _coerce(values: dict, name: str) -> dict:
    """Convert YAML scalars and lists to the dataclass field types"""
    try:
        out = dict(values)
        for key in ("batch_sizes", "stages", "urgent_functions"):
            if key in out:
                raw = out[key]
                items = [raw] if isinstance(raw, (str, int)) else list(raw)
                out[key] = tuple(int(item) for item in items) if key == "batch_sizes" else tuple(str(i) for i in items)
        if "layout" in out:
            out["layout"] = LayoutMode(out["layout"])
        if "penalty_policy" in out:
            out["penalty_policy"] = PenaltyPolicy(out["penalty_policy"])
        if "jitter" in out:
            out["jitter"] = JitterMode(out["jitter"])
        for key in ("iterations", "services_per_provider", "breaches_per_provider", "service_cost",
                    "fidelity_fee", "max_breach", "throttle_window", "throttle_max_wait",
                    "initial_balance", "gas_limit", "max_slots", "seed"):
            if key in out:
                out[key] = int(out[key])
        for key in ("role_split", "priority_fee_gwei", "urgent_bump_gwei", "stagger_window",
                    "slot_interval", "build_lead", "followup_delay"):
            if key in out:
                out[key] = float(out[key])
        for key in ("throttle_utilization", "background_rate"):
            if out.get(key) is not None:
                out[key] = float(out[key])
        for key in ("merge_onboarding", "settlement", "strict_order"):
            if key in out and not isinstance(out[key], bool):
                raise ValueError(f"{key} must be true or false")
        return out
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(f"scenario '{name}': {e}")


def list_presets() -> Tuple[str, ...]:
    return tuple(sorted(path.stem for path in CONFIG_DIR.glob("*.yaml")))


def load_scenario(name_or_path: Union[str, Path]) -> ScenarioConfig:
    """
    Load a scenario preset by name, or a scenario YAML file by path

    Raises:
        ConfigInvalid: Missing file, malformed YAML or invalid values
    """
    path = CONFIG_DIR / f"{name_or_path}.yaml"
    if not path.exists():
        path = Path(name_or_path)
    if not path.is_file():
        raise ConfigInvalid(f"scenario not found: '{name_or_path}' "
                            f"(presets: {', '.join(list_presets())}; or give a YAML path)")

    try:
        with open(path, encoding="UTF-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigInvalid(f"scenario file {path} is not valid YAML: {e}")
    except OSError as e:
        raise ConfigInvalid(f"scenario file {path} could not be read: {e}")
    if not isinstance(data, Mapping):
        raise ConfigInvalid(f"scenario file {path} must hold a flat mapping")

    scenario = ScenarioConfig.from_mapping(data, name=path.stem)
    logger.info(f"Scenario '{scenario.name}' loaded from {path}")
    return scenario
