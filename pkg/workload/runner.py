#!/usr/bin/env python3
"""
Workflow runner

Each (batch size, iteration) pair runs the agreement workflow on its own chain:

    register -> add_service rounds -> select -> breach rounds -> penalty follow-ups -> transfer

A stage submits one round of transactions at the current chain time (plus
jitter) and waits for all of them to be confirmed before the next round.
Penalties are follow-ups: a breach receipt that crosses the breach threshold
triggers a calculate_penalty submission that depends on that breach.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from chain.background import draw_market_level
from chain.chain_sim import Chain
from chain.transactions import Receipt, Transaction
from contracts.agreement_contracts import AgreementContracts, PenaltyPolicy, Role
from contracts.calldata import ContractCall
from contracts.layout import make_address
from evm.gas_schedule import GasSchedule, load_schedule
from evm.world_state import WorldState
from .metrics import MetricsReport, build_report
from .scenario import STAGES, JitterMode, ScenarioConfig

logger = logging.getLogger(__name__)

STREAM_WORKLOAD = 3
PROVIDER_SEED_BASE = 1_000_000
CONSUMER_SEED_BASE = 2_000_000
SERVICE_LOCATION = "edge"


@dataclass
class IterationResult:
    batch_size: int
    iteration: int
    transactions: List[dict] = field(default_factory=list)
    blocks: List[dict] = field(default_factory=list)
    pending: int = 0
    completed: bool = True


def jitter_offsets(mode: JitterMode, count: int, slot_interval: float, stagger_window: float,
                   rng: np.random.Generator) -> List[float]:
    """
    Submit offsets for one round

    uniform draws each offset independently from [0, slot_interval).
    staggered places the k-th of N offsets at the grid midpoint
    (k + 0.5) x stagger_window / N; a seeded permutation assigns grid points to
    transactions. burst submits everything at offset 0.
    """
    if count == 0:
        return []
    if mode is JitterMode.BURST:
        return [0.0] * count
    if mode is JitterMode.UNIFORM:
        return [float(offset) for offset in rng.uniform(0.0, slot_interval, count)]
    grid = (np.arange(count) + 0.5) * stagger_window / count
    return [float(grid[k]) for k in rng.permutation(count)]


class WorkflowRun:
    """
    One (batch size, iteration) of a scenario on a fresh chain

    Args:
        scenario: Experiment settings
        schedule: Gas schedule shared by all runs
        batch_size: Participants in the batch
        iteration: Iteration index (selects the ambient traffic and jitter streams)
    """

    def __init__(self, scenario: ScenarioConfig, schedule: GasSchedule, batch_size: int, iteration: int):
        self.scenario = scenario
        self.batch_size = batch_size
        self.iteration = iteration
        self.contracts = AgreementContracts(
            WorldState(), schedule,
            layout_mode=scenario.layout,
            fidelity_fee=scenario.fidelity_fee,
            max_breach=scenario.max_breach,
            penalty_policy=scenario.penalty_policy,
        )
        self.chain = Chain(scenario.chain_config(iteration), self.contracts)
        self.rng = np.random.default_rng(
            np.random.SeedSequence([scenario.seed, iteration, STREAM_WORKLOAD, batch_size]))
        self.market_gwei = draw_market_level(self.chain.config.background, scenario.seed, iteration)

        provider_count, consumer_count = scenario.split(batch_size)
        self.providers = [make_address(PROVIDER_SEED_BASE + i) for i in range(provider_count)]
        self.consumers = [make_address(CONSUMER_SEED_BASE + i) for i in range(consumer_count)]
        self.selections: Dict[bytes, Tuple[bytes, int]] = {}
        self.followups: List[int] = []
        self.stalled = False

        if "transfer" in scenario.stages:
            for consumer in self.consumers:
                self.contracts.state.set_balance(consumer, scenario.initial_balance)
        if "penalty" in scenario.stages and scenario.penalty_policy is PenaltyPolicy.THRESHOLD:
            self.chain.add_receipt_hook(self._on_receipt)

    @property
    def merged_onboarding(self) -> bool:
        return self.scenario.merge_onboarding and "add_service" in self.scenario.stages

    def run(self) -> IterationResult:
        for stage in STAGES:
            if stage in self.scenario.stages and not self.stalled:
                getattr(self, f"_stage_{stage}")()
        return self._collect()

    # ==================================================================
    # Stages
    # ==================================================================

    def _stage_register(self) -> None:
        scenario = self.scenario
        items = []
        for i, provider in enumerate(self.providers):
            if self.merged_onboarding:
                call = ContractCall("onboard_provider", ("S1", SERVICE_LOCATION, scenario.service_cost))
                items.append((provider, call, {"role": "provider", "service_position": 1, "account": i}))
            else:
                call = ContractCall("register_ad", (int(Role.PROVIDER),))
                items.append((provider, call, {"role": "provider", "account": i}))
        for i, consumer in enumerate(self.consumers):
            call = ContractCall("register_ad", (int(Role.CONSUMER),))
            items.append((consumer, call, {"role": "consumer", "account": i}))
        self._submit_round("register", 1, items)

    def _stage_add_service(self) -> None:
        scenario = self.scenario
        first = 2 if self.merged_onboarding else 1
        for position in range(first, scenario.services_per_provider + 1):
            call_args = (f"S{position}", SERVICE_LOCATION, scenario.service_cost)
            items = [(provider, ContractCall("add_service", call_args),
                      {"role": "provider", "service_position": position, "account": i})
                     for i, provider in enumerate(self.providers)]
            if not self._submit_round("add_service", position, items):
                return

    def _stage_select(self) -> None:
        items = []
        chosen = {}
        for i, consumer in enumerate(self.consumers):
            provider = self.providers[int(self.rng.integers(len(self.providers)))]
            index = int(self.rng.integers(1, self.scenario.services_per_provider + 1))
            chosen[consumer] = (provider, index)
            items.append((consumer, ContractCall("select_service", (provider, index)),
                          {"role": "consumer", "service_position": index, "account": i}))
        tx_ids = self._submit_round("select", 1, items)
        for tx_id in tx_ids or ():
            receipt = self.chain.receipts[tx_id]
            if receipt.status == "ok":
                consumer = self.chain.transactions[tx_id].sender
                self.selections[consumer] = chosen[consumer]

    def _stage_breach(self) -> None:
        for round_number in range(1, self.scenario.breaches_per_provider + 1):
            items = [(provider, ContractCall("register_breach", (1,)), {"role": "provider", "account": i})
                     for i, provider in enumerate(self.providers)]
            if not self._submit_round("breach", round_number, items):
                return

    def _stage_penalty(self) -> None:
        if self.followups:
            self._await(self.followups, "penalty")

    def _stage_transfer(self) -> None:
        scenario = self.scenario
        items = []
        for i, consumer in enumerate(self.consumers):
            if consumer not in self.selections:
                continue
            provider, index = self.selections[consumer]
            amount = self.contracts.service_cost(provider, index)
            if scenario.settlement:
                amount -= self.contracts.penalty_of(provider)
            if amount <= 0:
                logger.debug(f"consumer {i}: nothing to settle (amount {amount})")
                continue
            items.append((consumer, ContractCall("transfer_funds", (provider,), value=amount),
                          {"role": "consumer", "account": i}))
        if items:
            self._submit_round("transfer", 1, items)

    def _on_receipt(self, chain: Chain, receipt: Receipt, tx: Transaction) -> None:
        if receipt.function != "register_breach" or not receipt.penalty_due or receipt.status != "ok":
            return
        call = ContractCall("calculate_penalty", (tx.sender,))
        fee = self.scenario.fee_for(call.function)
        followup = chain.submit_call(
            tx.sender, call, fee,
            submit_time=receipt.block_timestamp + chain.config.followup_delay,
            depends_on=receipt.tx_id,
            gas_price_gwei=self.market_gwei + fee,
            labels={"stage": "penalty", "round": tx.labels.get("round", 1),
                    "role": "provider", "account": tx.labels.get("account")},
        )
        self.followups.append(followup.tx_id)

    # ==================================================================
    # Submission and confirmation
    # ==================================================================

    def _submit_round(self, stage: str, round_number: int, items: Sequence) -> Optional[List[int]]:
        """Submit one round with jitter and wait for every receipt; None when the run stalls"""
        scenario = self.scenario
        urgent = any(call.function in scenario.urgent_functions for _, call, _ in items)
        if not urgent:
            self._throttle()

        start = self.chain.now
        offsets = jitter_offsets(scenario.jitter, len(items), scenario.slot_interval,
                                 scenario.stagger_window, self.rng)
        tx_ids = []
        for (sender, call, labels), offset in zip(items, offsets):
            fee = scenario.fee_for(call.function)
            tx = self.chain.submit_call(
                sender, call, fee,
                submit_time=start + offset,
                gas_price_gwei=self.market_gwei + fee,
                labels={"stage": stage, "round": round_number, **labels},
            )
            tx_ids.append(tx.tx_id)
        return tx_ids if self._await(tx_ids, stage) else None

    def _await(self, tx_ids: Sequence[int], stage: str) -> bool:
        chain = self.chain
        # followups may be appended while waiting, so re-read the list each slot
        while any(tx_id not in chain.receipts for tx_id in tx_ids):
            if chain.current_slot >= self.scenario.max_slots:
                logger.warning(f"batch {self.batch_size} iteration {self.iteration}: stage '{stage}' "
                               f"not confirmed within {self.scenario.max_slots} slots; "
                               f"{chain.workflow_pending()} workflow txs left pending")
                self.stalled = True
                return False
            chain.advance(1)
        return True

    def _throttle(self) -> None:
        scenario = self.scenario
        if scenario.throttle_utilization is None:
            return
        waited = 0
        while waited < scenario.throttle_max_wait:
            recent = self.chain.recent_utilization(scenario.throttle_window)
            if len(recent) < scenario.throttle_window or min(recent) < scenario.throttle_utilization:
                break
            self.chain.advance(1)
            waited += 1
        if waited:
            logger.debug(f"batch {self.batch_size} iteration {self.iteration}: throttled {waited} slots")

    # ==================================================================
    # Records
    # ==================================================================

    def _collect(self) -> IterationResult:
        chain = self.chain
        blocks = {block.slot_number: block for block in chain.blocks}
        result = IterationResult(self.batch_size, self.iteration, pending=chain.workflow_pending(),
                                 completed=not self.stalled)

        for block in chain.blocks:
            result.blocks.append({
                "batch_size": self.batch_size,
                "iteration": self.iteration,
                "slot": block.slot_number,
                "timestamp": block.timestamp,
                "gas_used": block.gas_used,
                "gas_limit": block.gas_limit,
                "utilization_pct": 100.0 * block.utilization,
                "tx_count": block.tx_count,
                "background_count": block.background_count,
                "workflow_count": block.tx_count - block.background_count,
                "byte_size": block.byte_size,
                "block_kb": block.byte_size / 1000,
            })

        for tx_id, tx in sorted(chain.transactions.items()):
            receipt = chain.receipts.get(tx_id)
            block = blocks.get(receipt.block_number) if receipt else None
            dependency = chain.receipts.get(tx.depends_on) if tx.depends_on is not None else None
            result.transactions.append({
                "batch_size": self.batch_size,
                "iteration": self.iteration,
                "tx_id": tx_id,
                "function": tx.function,
                "stage": tx.labels.get("stage", ""),
                "round": tx.labels.get("round", 1),
                "role": tx.labels.get("role", ""),
                "service_position": tx.labels.get("service_position", 0),
                "submit_time": tx.submit_time,
                "selection_time": receipt.selection_time if receipt else None,
                "block_number": receipt.block_number if receipt else None,
                "block_timestamp": receipt.block_timestamp if receipt else None,
                "mempool_time": receipt.mempool_time if receipt else None,
                "latency": receipt.latency if receipt else None,
                "gas_estimate": tx.gas_estimate,
                "gas_used": receipt.gas_used if receipt else None,
                "priority_fee": tx.priority_fee,
                "gas_price_gwei": tx.gas_price_gwei,
                "block_kb": block.byte_size / 1000 if block else None,
                "block_tx_count": block.tx_count if block else None,
                "block_utilization": block.utilization if block else None,
                "status": receipt.status if receipt else "pending",
                "error": (receipt.error or "") if receipt else "",
                "depends_on": tx.depends_on,
                "dependency_block": dependency.block_number if dependency else None,
                "included": receipt is not None,
            })

        logger.debug(f"batch {self.batch_size} iteration {self.iteration}: {len(chain.blocks)} blocks, "
                     f"{len(chain.receipts)} receipts, {result.pending} pending")
        return result


def run_iteration(scenario: ScenarioConfig, schedule: GasSchedule, batch_size: int, iteration: int) -> IterationResult:
    return WorkflowRun(scenario, schedule, batch_size, iteration).run()


def run_scenario(scenario: ScenarioConfig, workers: int = 1, schedule: Optional[GasSchedule] = None) -> MetricsReport:
    """
    Run every (batch size, iteration) of a scenario and aggregate the results

    Runs are independent; with workers > 1 they execute on a thread pool and are
    merged in (batch size, iteration) order, so the report does not depend on
    the worker count.

    Raises:
        ConfigInvalid: The scenario or its schedule/background preset is invalid
    """
    scenario.validate_or_raise()
    schedule = schedule or load_schedule(scenario.schedule)
    tasks = [(batch_size, iteration)
             for batch_size in scenario.batch_sizes
             for iteration in range(scenario.iterations)]
    logger.info(f"Scenario '{scenario.name}': {len(scenario.batch_sizes)} batch sizes x "
                f"{scenario.iterations} iterations, background '{scenario.background}', "
                f"layout {scenario.layout.value}, policy {scenario.penalty_policy.value}, workers {workers}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda task: run_iteration(scenario, schedule, *task), tasks))
    else:
        results = [run_iteration(scenario, schedule, *task) for task in tasks]

    stalled = sum(1 for result in results if not result.completed)
    if stalled:
        logger.warning(f"Scenario '{scenario.name}': {stalled} of {len(results)} runs did not complete")
    report = build_report(scenario, results)
    logger.info(f"Scenario '{scenario.name}' finished: {len(report.transactions)} workflow txs, "
                f"{len(report.blocks)} blocks")
    return report
