"""End-to-end Monte Carlo runs: outcomes -> traces -> correlation sums.

Shots are split into ``n_batches`` contiguous shards; every shard is one
error-bar batch and is simulated by a single worker in blocks of
``block_size`` shots. Random numbers are keyed by the first shot index of
each block (outcomes and chain noise on separate tags), so a run depends
only on its plan and seed, never on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .chain import ChainParams, ShotBlock, synthesize_block
from .correlator import CorrelationAccumulator, CorrelationResult, CorrelatorConfig, merge_all
from .emission import PreparedState, PulseTrainSpec, TemporalMode, emission_envelope, sample_mode_outcomes
from .errors import ValidationError
from .qubit import DecayRates
from .rng import CHAIN_NOISE, OUTCOMES, KeyedStream

#: emitted wavepacket: T1 = 60 ns sampled at 5 ns over 600 ns, starting 50 ns into the record
DEFAULT_T1 = 60e-9
DEFAULT_MODE_DURATION = 600e-9
DEFAULT_ORIGIN = 50e-9


def default_mode(t1: float = DEFAULT_T1, duration: float = DEFAULT_MODE_DURATION,
                 dt: float = 5e-9, origin: float = DEFAULT_ORIGIN) -> TemporalMode:
    return emission_envelope(DecayRates.from_t1(t1), duration, dt, origin=origin)


@dataclass(frozen=True)
class SimulationPlan:
    state: PreparedState
    mode: TemporalMode
    spec: PulseTrainSpec
    chain: ChainParams
    shots: int
    seed: int = 0
    n_batches: int = 64
    block_size: int = 500
    substream: int = 0
    window: int = 3
    gate: int | None = 1
    prefilter: bool = True
    compensation: str = "full"
    time_resolved: bool = True

    def __post_init__(self):
        if self.shots < 1:
            raise ValidationError("shots must be >= 1")
        if self.n_batches < 1 or self.shots % self.n_batches:
            raise ValidationError(f"shots ({self.shots}) must be divisible by batches ({self.n_batches})")
        if self.block_size < 1:
            raise ValidationError("block_size must be >= 1")

    @property
    def batch_size(self) -> int:
        return self.shots // self.n_batches

    def correlator_config(self) -> CorrelatorConfig:
        return CorrelatorConfig.for_train(
            self.mode, self.spec, self.chain, window=self.window, gate=self.gate,
            prefilter=self.prefilter, compensation=self.compensation,
            n_batches=self.n_batches, batch_size=self.batch_size,
            time_resolved=self.time_resolved,
        )

    def with_(self, **changes) -> "SimulationPlan":
        return replace(self, **changes)


def simulate_block(plan: SimulationPlan, start: int, count: int) -> ShotBlock:
    """Shots ``start .. start + count - 1`` of a plan."""
    ks = KeyedStream(plan.seed)
    rng_o = ks.generator(start, OUTCOMES, plan.substream)
    rng_n = ks.generator(start, CHAIN_NOISE, plan.substream)
    alpha, beta = sample_mode_outcomes(plan.state, (count, plan.spec.n_pulses), rng_o)
    return synthesize_block(alpha, beta, plan.mode, plan.spec, plan.chain, rng_n, shot_start=start)


def shard_blocks(plan: SimulationPlan, shard: int):
    """Yield the blocks of one shard in order."""
    lo = shard * plan.batch_size
    hi = lo + plan.batch_size
    for start in range(lo, hi, plan.block_size):
        yield simulate_block(plan, start, min(plan.block_size, hi - start))


def run_shard(plan: SimulationPlan, shard: int,
              template: CorrelationAccumulator | None = None) -> CorrelationAccumulator:
    acc = template.empty_like() if template is not None else CorrelationAccumulator(plan.correlator_config())
    for blk in shard_blocks(plan, shard):
        acc.accumulate_block(blk)
    return acc


def _run_shards_task(args):
    plan, shards = args
    template = CorrelationAccumulator(plan.correlator_config())
    return [run_shard(plan, s, template) for s in shards]


def resolve_workers(workers: int | None) -> int:
    """Worker count, overridden by the PHOTONSTAT_THREADS environment variable."""
    env = os.environ.get("PHOTONSTAT_THREADS")
    if env:
        try:
            workers = int(env)
        except ValueError as exc:
            raise ValidationError(f"PHOTONSTAT_THREADS={env!r} is not an integer") from exc
    workers = 1 if workers is None else int(workers)
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    return workers


def accumulate_plan(plan: SimulationPlan, workers: int = 1) -> CorrelationAccumulator:
    """Simulate and correlate every shard, merged in shard order."""
    shards = range(plan.n_batches)
    if workers <= 1:
        template = CorrelationAccumulator(plan.correlator_config())
        accs = [run_shard(plan, s, template) for s in shards]
    else:
        chunks = [c.tolist() for c in np.array_split(np.arange(plan.n_batches), workers) if c.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            accs = [a for part in pool.map(_run_shards_task, [(plan, c) for c in chunks]) for a in part]
    return merge_all(accs)


def simulate_correlation(plan: SimulationPlan, workers: int = 1) -> CorrelationResult:
    return accumulate_plan(plan, workers).finalize()


def iter_plan_blocks(plan: SimulationPlan):
    """All blocks of a plan in shot order (used for archiving)."""
    for s in range(plan.n_batches):
        yield from shard_blocks(plan, s)


def count_blocks(plan: SimulationPlan) -> int:
    return plan.n_batches * int(np.ceil(plan.batch_size / plan.block_size))
