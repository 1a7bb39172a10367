#!/usr/bin/env python3
"""
Discrete-slot proof-of-stake chain

A single proposer builds one block per slot from a fee-ordered mempool and
executes the included workflow transactions against the agreement contracts:

    chain = Chain(ChainConfig(background=load_background("sepolia-baseline")), contracts)
    tx = chain.submit_call(provider, ContractCall("register_ad", (1,)), priority_fee=1.0)
    chain.advance(1)
    chain.receipts[tx.tx_id].latency

Ordering is (-priority_fee, submit_time, tx_id). A transaction that does not fit
the remaining gas is skipped and packing continues, unless strict_order is set.
When the ambient preset sets a fee bar, transactions tipping below it only fill
the preset's below_bar_gas share of each block.
"""
import logging
from typing import Callable, Dict, List, Optional

from contracts.agreement_contracts import AgreementContracts
from contracts.calldata import ContractCall
from sim_errors import TxTooLarge
from .background import BackgroundGenerator
from .transactions import Block, ChainConfig, Receipt, Transaction

logger = logging.getLogger(__name__)

ReceiptHook = Callable[["Chain", Receipt, Transaction], None]


def _priority(tx: Transaction):
    return -tx.priority_fee, tx.submit_time, tx.tx_id


class Chain:
    """
    Mempool, block builder and receipt store for one independent simulation

    Args:
        config: Slot interval, gas limit, ambient load and packing policy
        contracts: Contracts that workflow transactions execute against
    """

    def __init__(self, config: ChainConfig, contracts: AgreementContracts):
        config.validate_or_raise()
        self.config = config
        self.contracts = contracts
        self.current_slot = 0
        self.blocks: List[Block] = []
        self.receipts: Dict[int, Receipt] = {}
        self.transactions: Dict[int, Transaction] = {}
        self.background_submitted = 0
        self.background_included = 0

        self._mempool: Dict[int, Transaction] = {}
        self._next_tx_id = 1
        self._hooks: List[ReceiptHook] = []
        self._background = BackgroundGenerator(config.background, config.gas_limit,
                                               config.seed, config.iteration)

    @property
    def now(self) -> float:
        """Timestamp of the last built slot (0 before the first block)"""
        return self.current_slot * self.config.slot_interval

    def add_receipt_hook(self, hook: ReceiptHook) -> None:
        """Call hook(chain, receipt, tx) for every workflow receipt, after its block is built"""
        self._hooks.append(hook)

    # ==================================================================
    # Submission
    # ==================================================================

    def next_tx_id(self) -> int:
        tx_id = self._next_tx_id
        self._next_tx_id += 1
        return tx_id

    def submit(self, tx: Transaction) -> None:
        """
        Place a transaction in the mempool

        Raises:
            TxTooLarge: gas_estimate exceeds the block gas limit
        """
        if tx.gas_estimate > self.config.gas_limit:
            raise TxTooLarge(f"tx {tx.tx_id} gas estimate {tx.gas_estimate:,} exceeds "
                             f"block gas limit {self.config.gas_limit:,}")
        if tx.tx_id in self._mempool or tx.tx_id in self.transactions:
            raise ValueError(f"tx {tx.tx_id} already submitted")
        self._next_tx_id = max(self._next_tx_id, tx.tx_id + 1)
        self._mempool[tx.tx_id] = tx
        if tx.is_background:
            self.background_submitted += 1
        else:
            self.transactions[tx.tx_id] = tx
            logger.debug(f"submit tx {tx.tx_id} {tx.function} fee={tx.priority_fee:.3f} "
                         f"gas~{tx.gas_estimate} t={tx.submit_time:.3f}")

    def submit_call(self, sender: bytes, call: ContractCall, priority_fee: float,
                    submit_time: Optional[float] = None, depends_on: Optional[int] = None,
                    gas_price_gwei: float = 0.0, labels: Optional[dict] = None) -> Transaction:
        """Estimate gas by dry run against current state, then submit"""
        submit_time = self.now if submit_time is None else submit_time
        # priced as if included in the next block
        estimate = self.contracts.estimate_gas(sender, call, timestamp=int(self.now + self.config.slot_interval))
        tx = Transaction(
            tx_id=self.next_tx_id(),
            sender=sender,
            call=call,
            priority_fee=priority_fee,
            gas_estimate=estimate,
            submit_time=submit_time,
            depends_on=depends_on,
            gas_price_gwei=gas_price_gwei,
            labels=dict(labels or {}),
        )
        self.submit(tx)
        return tx

    def pending(self, include_background: bool = False) -> List[Transaction]:
        """Mempool snapshot in packing order"""
        txs = [tx for tx in self._mempool.values() if include_background or not tx.is_background]
        return sorted(txs, key=_priority)

    def is_eligible(self, tx: Transaction, selection_time: float) -> bool:
        if tx.submit_time > selection_time:
            return False
        return tx.depends_on is None or tx.depends_on in self.receipts

    # ==================================================================
    # Block building
    # ==================================================================

    def build_block(self, slot: int) -> Block:
        """
        Pack and execute one block from the current mempool

        Raises:
            ValueError: slot is not after the last built slot
        """
        if slot <= self.current_slot:
            raise ValueError(f"slot {slot} already built (current slot {self.current_slot})")

        config = self.config
        timestamp = slot * config.slot_interval
        selection_time = timestamp - config.build_lead
        block = Block(slot_number=slot, timestamp=timestamp, gas_limit=config.gas_limit)

        candidates = [tx for tx in self.pending(include_background=True) if self.is_eligible(tx, selection_time)]
        included: List[Receipt] = []
        fee_bar = config.background.fee_bar_gwei
        below_bar_used = 0
        for tx in candidates:
            below_bar = fee_bar is not None and tx.priority_fee < fee_bar
            if (tx.gas_estimate > config.gas_limit - block.gas_used
                    or below_bar and tx.gas_estimate > config.background.below_bar_gas - below_bar_used):
                if config.strict_order:
                    break
                continue

            del self._mempool[tx.tx_id]
            if tx.is_background:
                gas_used = tx.gas_estimate
                self.background_included += 1
            else:
                receipt = self._execute(tx, slot, timestamp, selection_time)
                gas_used = receipt.gas_used
                self.receipts[tx.tx_id] = receipt
                included.append(receipt)

            if below_bar:
                below_bar_used += gas_used
            block.transactions.append(tx.tx_id)
            block.gas_used += gas_used
            block.byte_size += tx.byte_size
            block.background_count += int(tx.is_background)

        self.blocks.append(block)
        self.current_slot = slot
        logger.debug(f"block {slot}: {block.tx_count} txs ({len(included)} workflow), "
                     f"{block.utilization:.1%} gas, {block.byte_size / 1000:.1f} KB, "
                     f"{len(self._mempool)} pending")

        for receipt in included:
            tx = self.transactions[receipt.tx_id]
            for hook in self._hooks:
                hook(self, receipt, tx)
        return block

    def _execute(self, tx: Transaction, slot: int, timestamp: float, selection_time: float) -> Receipt:
        receipt = Receipt(
            tx_id=tx.tx_id,
            function=tx.function,
            block_number=slot,
            block_timestamp=timestamp,
            submit_time=tx.submit_time,
            selection_time=selection_time,
            gas_used=tx.gas_estimate,
            priority_fee=tx.priority_fee,
            gas_price_gwei=tx.gas_price_gwei,
            depends_on=tx.depends_on,
        )
        if tx.call is None:
            return receipt

        result = self.contracts.try_execute(tx.sender, tx.call, tx_id=tx.tx_id,
                                            gas_limit=tx.gas_estimate, timestamp=int(timestamp))
        receipt.gas_used = result.gas_used
        receipt.status = result.status
        receipt.error = result.error
        receipt.return_value = result.return_value
        receipt.penalty_due = result.penalty_due
        if not result.ok:
            logger.debug(f"tx {tx.tx_id} {tx.function} reverted in block {slot}: {result.error}")
        return receipt

    def advance(self, slots: int = 1) -> List[Block]:
        """Draw ambient arrivals and build a block for each of the next slots"""
        if slots < 1:
            raise ValueError(f"slots must be >= 1 (got {slots})")
        built = []
        for _ in range(slots):
            slot = self.current_slot + 1
            self._submit_background(slot)
            built.append(self.build_block(slot))
        return built

    def _submit_background(self, slot: int) -> None:
        config = self.config
        window = config.slot_interval - config.build_lead
        start = (slot - 1) * config.slot_interval
        for arrival in self._background.draw(slot, window):
            self.submit(Transaction(
                tx_id=self.next_tx_id(),
                sender=None,
                call=None,
                priority_fee=arrival.priority_fee,
                gas_estimate=arrival.gas,
                submit_time=start + arrival.offset,
                gas_price_gwei=arrival.priority_fee,
                calldata_len=arrival.calldata_len,
                is_background=True,
            ))

    # ==================================================================
    # Views
    # ==================================================================

    def recent_utilization(self, window: int) -> List[float]:
        return [block.utilization for block in self.blocks[-window:]]

    def workflow_pending(self) -> int:
        return len(self.pending())
