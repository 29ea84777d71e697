"""Batch Monte Carlo driver.

Runs macro-cycles (MOT load + optical pumping + protocol rounds),
aggregates per-round outcomes into a :class:`CountsLedger`, and provides
the deterministic stream-splitting contract that makes sharded runs merge
bitwise-identically with monolithic ones.

Stream contract
---------------
The whole simulation is keyed by ``config.rng_seed`` through a Philox
counter-based generator.  Round ``r`` (global index, counted from the
start of the run) consumes exactly ``draws_per_round(n_modes)`` uniforms
taken from the key's stream starting at 128-bit counter
``r * draws_per_round // 4``.  Because the per-round draw count is padded
to a multiple of four (one Philox block = four 64-bit words), any
partition of [0, n_rounds) into shards consumes exactly the same words
for each round, so ``merge(run_batch(shard_1), run_batch(shard_2), ...)``
equals the monolithic ``run_batch`` field for field.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelBudget, pair_number_probs, signal_click_probs
from .controller import RoundOutcome, _idler_click_probs, draws_per_round, \
    registration_cap, run_round
from .model import LinkConfig, config_to_dict
from .schedule import ModeSchedule, build_schedule


class LedgerMergeError(ValueError):
    pass


@dataclass
class CountsLedger:
    """Aggregated counters of a batch of rounds.

    S/C/R0/I are the estimator counters: total signal clicks, read-out
    coincidences, rounds with zero signal clicks, and idler clicks from
    the no-signal random read-outs.  ``herald_histogram`` counts every
    herald arrival per time bin (cap overflow is tallied separately in
    ``unregistered_heralds``), so it sums to S.
    """

    n_rounds: int = 0
    signal_clicks_S: int = 0
    coincidences_C: int = 0
    nosig_rounds_R0: int = 0
    nosig_idler_clicks_I: int = 0
    herald_histogram: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    coincidences_per_mode: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    registered_heralds: int = 0
    unregistered_heralds: int = 0
    readouts: int = 0
    resolve_faults: int = 0
    wall_clock_s: float = 0.0
    round_duration_s: float = 0.0
    config_hash: str = ""
    seed: int = 0
    start_round: int = 0

    def to_dict(self) -> dict:
        d = {
            "n_rounds": self.n_rounds,
            "signal_clicks_S": self.signal_clicks_S,
            "coincidences_C": self.coincidences_C,
            "nosig_rounds_R0": self.nosig_rounds_R0,
            "nosig_idler_clicks_I": self.nosig_idler_clicks_I,
            "herald_histogram": self.herald_histogram.tolist(),
            "coincidences_per_mode": self.coincidences_per_mode.tolist(),
            "registered_heralds": self.registered_heralds,
            "unregistered_heralds": self.unregistered_heralds,
            "readouts": self.readouts,
            "resolve_faults": self.resolve_faults,
            "wall_clock_s": self.wall_clock_s,
            "round_duration_s": self.round_duration_s,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "start_round": self.start_round,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CountsLedger":
        d = dict(d)
        d["herald_histogram"] = np.asarray(d["herald_histogram"], dtype=np.int64)
        d["coincidences_per_mode"] = np.asarray(d["coincidences_per_mode"], dtype=np.int64)
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CountsLedger":
        return cls.from_dict(json.loads(text))


def config_hash(config: LinkConfig) -> str:
    payload = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def round_generator(seed: int, round_index: int, draws: int) -> np.random.Generator:
    """Generator positioned at round ``round_index``'s block of the master
    stream; ``draws`` must be the padded per-round draw count."""
    assert draws % 4 == 0
    bitgen = np.random.Philox(key=seed & ((1 << 64) - 1),
                              counter=round_index * (draws // 4))
    return np.random.Generator(bitgen)


def wall_clock_s(config: LinkConfig, n_rounds: int, round_duration_s: float) -> float:
    """Simulated laboratory time: whole macro-cycles of MOT load plus
    rounds_per_cycle pumped rounds."""
    cycles = math.ceil(n_rounds / config.rounds_per_cycle)
    return cycles * (config.mot_load_time_s
                     + config.rounds_per_cycle * (config.pump_time_s + round_duration_s))


def ledger_from_outcomes(config: LinkConfig, schedule: ModeSchedule,
                         outcomes: list[RoundOutcome], seed: int,
                         start_round: int = 0) -> CountsLedger:
    """Aggregate per-round outcomes; used by tests to pin the equivalence
    of the event-level path and the vectorized batch path."""
    n = schedule.n_used
    led = CountsLedger(
        herald_histogram=np.zeros(n, dtype=np.int64),
        coincidences_per_mode=np.zeros(n, dtype=np.int64),
        round_duration_s=schedule.round_duration_s,
        config_hash=config_hash(config),
        seed=seed,
        start_round=start_round,
    )
    for out in outcomes:
        led.n_rounds += 1
        led.signal_clicks_S += len(out.signal_clicks)
        for b in out.signal_clicks:
            led.herald_histogram[b] += 1
        led.registered_heralds += len(out.registered)
        led.unregistered_heralds += len(out.herald_events) - len(out.registered)
        led.readouts += len(out.readout_orders)
        led.coincidences_C += len(out.idler_clicks)
        for b in out.idler_clicks:
            led.coincidences_per_mode[b] += 1
        led.resolve_faults += len(out.faults)
        if out.nosig_readout is not None:
            led.nosig_rounds_R0 += 1
            led.nosig_idler_clicks_I += int(out.nosig_readout[1])
    led.wall_clock_s = wall_clock_s(config, led.n_rounds, led.round_duration_s)
    return led


def run_batch(config: LinkConfig, n_rounds: int, start_round: int = 0,
              chunk_rounds: int = 20000) -> CountsLedger:
    """Simulate ``n_rounds`` protocol rounds; deterministic given
    (config.rng_seed, start_round)."""
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    schedule = build_schedule(config)
    n = schedule.n_used
    seed = config.rng_seed

    if config.herald_jitter_s > 0.0:
        # Jitter can reorder or mis-resolve heralds; take the event-level path.
        draws = draws_per_round(n, jitter=True)
        outcomes = [run_round(config, schedule, round_generator(seed, r, draws))
                    for r in range(start_round, start_round + n_rounds)]
        return ledger_from_outcomes(config, schedule, outcomes, seed, start_round)

    draws = draws_per_round(n)
    p0, p1, _ = pair_number_probs(config.chi)
    p_click = signal_click_probs(ChannelBudget.from_config(config), config.noise_click_prob)
    p_i_spin = _idler_click_probs(config, schedule)
    n_i = config.idler_noise_prob
    cap = registration_cap(config, n)

    led = CountsLedger(
        n_rounds=n_rounds,
        herald_histogram=np.zeros(n, dtype=np.int64),
        coincidences_per_mode=np.zeros(n, dtype=np.int64),
        round_duration_s=schedule.round_duration_s,
        config_hash=config_hash(config),
        seed=seed,
        start_round=start_round,
    )

    done = 0
    while done < n_rounds:
        count = min(chunk_rounds, n_rounds - done)
        rng = round_generator(seed, start_round + done, draws)
        u = rng.random((count, draws))
        u_pair, u_sig, u_idler = u[:, :n], u[:, n:2 * n], u[:, 2 * n:3 * n]
        u_pick = u[:, 3 * n]

        n_pairs = (u_pair >= p0).astype(np.int8) + (u_pair >= p0 + p1).astype(np.int8)
        clicks = u_sig < p_click[n_pairs]
        spin = n_pairs >= 1

        led.signal_clicks_S += int(clicks.sum())
        led.herald_histogram += clicks.sum(axis=0)

        registered = clicks & (np.cumsum(clicks, axis=1) <= cap)
        n_reg = int(registered.sum())
        led.registered_heralds += n_reg
        led.unregistered_heralds += int(clicks.sum()) - n_reg
        led.readouts += n_reg

        idler_p = np.where(spin, p_i_spin[None, :], n_i)
        idler = u_idler < idler_p
        coinc = registered & idler
        led.coincidences_C += int(coinc.sum())
        led.coincidences_per_mode += coinc.sum(axis=0)

        nosig = ~clicks.any(axis=1)
        led.nosig_rounds_R0 += int(nosig.sum())
        if nosig.any():
            picks = np.minimum((u_pick[nosig] * n).astype(np.int64), n - 1)
            led.nosig_idler_clicks_I += int(idler[nosig, picks].sum())

        done += count

    led.wall_clock_s = wall_clock_s(config, n_rounds, led.round_duration_s)
    return led


def merge(*ledgers: CountsLedger) -> CountsLedger:
    """Field-wise sum of ledgers from identical configs (associative and
    commutative)."""
    if not ledgers:
        raise LedgerMergeError("nothing to merge")
    first = ledgers[0]
    out = CountsLedger(
        herald_histogram=np.zeros_like(first.herald_histogram),
        coincidences_per_mode=np.zeros_like(first.coincidences_per_mode),
        round_duration_s=first.round_duration_s,
        config_hash=first.config_hash,
        seed=first.seed,
        start_round=min(l.start_round for l in ledgers),
    )
    for led in ledgers:
        if led.config_hash != first.config_hash:
            raise LedgerMergeError(
                f"config hash mismatch: {led.config_hash} != {first.config_hash}")
        out.n_rounds += led.n_rounds
        out.signal_clicks_S += led.signal_clicks_S
        out.coincidences_C += led.coincidences_C
        out.nosig_rounds_R0 += led.nosig_rounds_R0
        out.nosig_idler_clicks_I += led.nosig_idler_clicks_I
        out.herald_histogram = out.herald_histogram + led.herald_histogram
        out.coincidences_per_mode = out.coincidences_per_mode + led.coincidences_per_mode
        out.registered_heralds += led.registered_heralds
        out.unregistered_heralds += led.unregistered_heralds
        out.readouts += led.readouts
        out.resolve_faults += led.resolve_faults
        out.wall_clock_s += led.wall_clock_s
    return out
