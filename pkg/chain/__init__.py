"""
Slot-based chain: mempool, fee-priority block builder and ambient traffic.
"""
from .background import AmbientArrival, BackgroundGenerator, draw_market_level
from .chain_sim import Chain
from .transactions import (
    Block,
    BackgroundLoad,
    ChainConfig,
    DEFAULT_GAS_LIMIT,
    DEFAULT_SLOT_INTERVAL,
    ENVELOPE_BYTES,
    Receipt,
    Transaction,
    load_background,
)

__all__ = [
    "AmbientArrival",
    "BackgroundGenerator",
    "draw_market_level",
    "Chain",
    "Block",
    "BackgroundLoad",
    "ChainConfig",
    "DEFAULT_GAS_LIMIT",
    "DEFAULT_SLOT_INTERVAL",
    "ENVELOPE_BYTES",
    "Receipt",
    "Transaction",
    "load_background",
]
