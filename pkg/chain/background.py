"""
Seeded ambient traffic

Every (seed, iteration, slot) owns its own SeedSequence, spawned into one
generator per attribute. Runs that differ only in workload therefore see the
same ambient traffic, and raising the arrival rate only appends arrivals.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.stats import poisson

from .transactions import BackgroundLoad

logger = logging.getLogger(__name__)

STREAM_BACKGROUND = 1
STREAM_MARKET = 2
MIN_TX_GAS = 21_000


@dataclass(frozen=True)
class AmbientArrival:
    gas: int
    calldata_len: int
    priority_fee: float
    offset: float


def _slot_generators(seed: int, iteration: int, stream: int, slot: int, count: int) -> List[np.random.Generator]:
    sequence = np.random.SeedSequence([seed, iteration, stream, slot])
    return [np.random.default_rng(child) for child in sequence.spawn(count)]


class BackgroundGenerator:
    """
    Draws one slot's ambient arrivals

    Args:
        load: Ambient traffic model
        gas_limit: Block gas limit (upper clip for per-tx gas and base of max_fill)
        seed: Root seed
        iteration: Iteration index
    """

    def __init__(self, load: BackgroundLoad, gas_limit: int, seed: int, iteration: int = 0):
        self.load = load
        self.gas_limit = gas_limit
        self.seed = seed
        self.iteration = iteration

    @property
    def expected_fill(self) -> float:
        """Mean ambient gas per slot as a fraction of the gas limit, before max_fill"""
        return self.load.arrival_rate * self.load.gas_mean / self.gas_limit

    def draw(self, slot: int, window: float) -> List[AmbientArrival]:
        """
        Ambient arrivals for a slot, in arrival order

        Args:
            slot: Slot number
            window: Submit offsets are uniform over [0, window)
        """
        load = self.load
        if load.arrival_rate <= 0:
            return []

        count_rng, gas_rng, size_rng, fee_rng, time_rng = _slot_generators(
            self.seed, self.iteration, STREAM_BACKGROUND, slot, 5)

        count = max(0, int(poisson.ppf(count_rng.random(), load.arrival_rate)))
        if count == 0:
            return []

        gas = np.clip(np.rint(gas_rng.lognormal(load.gas_mu, load.gas_sigma, count)),
                      MIN_TX_GAS, self.gas_limit).astype(np.int64)
        if load.max_fill is not None:
            # cumulative gas is monotone, so the admitted arrivals are a prefix
            admitted = int(np.count_nonzero(np.cumsum(gas) <= load.max_fill * self.gas_limit))
            if admitted < count:
                logger.debug(f"slot {slot}: ambient arrivals capped {count} -> {admitted}")
            count = admitted
            gas = gas[:count]

        sizes = np.rint(size_rng.lognormal(load.calldata_mu, load.calldata_sigma, count)).astype(np.int64)
        fees = load.fee_floor_gwei + fee_rng.lognormal(load.fee_mu, load.fee_sigma, count)
        offsets = time_rng.random(count) * window

        return [AmbientArrival(int(g), int(s), float(f), float(o))
                for g, s, f, o in zip(gas, sizes, fees, offsets)]


def draw_market_level(load: BackgroundLoad, seed: int, iteration: int) -> float:
    """Gas price level (Gwei) of one iteration, drawn from the ambient fee distribution"""
    (rng,) = _slot_generators(seed, iteration, STREAM_MARKET, 0, 1)
    return float(load.fee_floor_gwei + rng.lognormal(load.fee_mu, load.fee_sigma))
