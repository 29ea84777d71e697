"""Feedforward state machine for one protocol round.

Mirrors the control-unit logic: heralds arriving during the heralding
stage are resolved to a mode from their arrival time, registered up to
the per-round cap, and turned into read-out orders according to the
active policy.  ``run_round`` executes one complete round against the
channel model.

Random-number contract (shared with the batch engine, which replays the
same layout vectorized): one round consumes exactly
``draws_per_round(n)`` uniforms --

    [0,   n)  pair-number draws, one per mode in emission order
    [n,  2n)  signal-click draws
    [2n, 3n)  idler-click draws (consumed by mode index when read out)
    [3n]      no-signal random mode selection
    [3n+1, 4n+1)  herald jitter draws, only when jitter is enabled

padded up to a multiple of four so rounds align with the Philox counter
(see ``engine.round_generator``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import idler_click_prob, pair_number_probs, retrieval_efficiency, \
    signal_click_probs, ChannelBudget
from .model import LinkConfig, ModeId
from .schedule import ModeSchedule


class ResolveError(ValueError):
    """Herald arrival that cannot be attributed to a mode."""


@dataclass(frozen=True)
class HeraldEvent:
    arrival_time_s: float
    mode: ModeId


@dataclass(frozen=True)
class ReadoutOrder:
    mode: ModeId
    read_time_s: float
    storage_time_s: float


@dataclass
class RoundOutcome:
    """Complete ledger of one round."""

    n_pairs: np.ndarray                      # per-mode pair numbers
    signal_clicks: list[int]                 # bins with a detector click
    herald_events: list[HeraldEvent]         # every herald arrival
    registered: list[HeraldEvent]            # the ones accepted under the cap
    readout_orders: list[ReadoutOrder]
    idler_clicks: list[int]                  # bins among read-outs whose idler clicked
    nosig_readout: tuple[int, bool] | None   # (bin, idler clicked) on no-signal rounds
    faults: list[str] = field(default_factory=list)


def draws_per_round(n_modes: int, jitter: bool = False) -> int:
    base = 3 * n_modes + 1 + (n_modes if jitter else 0)
    return -(-base // 4) * 4


def resolve_mode(schedule: ModeSchedule, arrival_time_s: float) -> ModeId:
    """Invert the herald-time map: nearest expected herald within half the
    local bin gap; anything else is a protocol fault."""
    times = schedule.herald_time_s
    lo, hi = schedule.herald_window_s
    half = 0.5 * schedule.bin_width_s
    if arrival_time_s < lo - half or arrival_time_s > hi + half:
        raise ResolveError(
            f"herald arrival {arrival_time_s} outside heralding window [{lo}, {hi}]")
    idx = int(np.argmin(np.abs(times - arrival_time_s)))
    gaps = []
    if idx > 0:
        gaps.append(times[idx] - times[idx - 1])
    if idx < len(times) - 1:
        gaps.append(times[idx + 1] - times[idx])
    tol = 0.5 * min(gaps) if gaps else half
    if abs(times[idx] - arrival_time_s) > tol + 1e-15:
        raise ResolveError(
            f"herald arrival {arrival_time_s} ambiguous: nearest mode {idx} "
            f"is {abs(times[idx] - arrival_time_s):.3e} s away (tolerance {tol:.3e})")
    return ModeId.from_bin(idx, schedule.angles_per_cell)


def registration_cap(config: LinkConfig, n_modes: int) -> int:
    if config.first_only:
        return 1
    if config.herald_cap is None:
        return n_modes
    return min(config.herald_cap, n_modes)


def register_heralds(events: list[HeraldEvent], config: LinkConfig,
                     schedule: ModeSchedule) -> list[ReadoutOrder]:
    """Turn arrival-ordered herald events into read-out orders.

    Registration stops at the cap (or after the first event in
    first-only mode); excess events stay in the outcome record but
    produce no order.
    """
    cap = registration_cap(config, schedule.n_used)
    orders = []
    for event in events[:cap]:
        if config.readout_policy == "immediate":
            read = event.arrival_time_s + config.feedforward_latency_s
        else:
            read = schedule.scheduled_read_time_s
        orders.append(ReadoutOrder(
            mode=event.mode,
            read_time_s=read,
            storage_time_s=read - float(schedule.emission_time_s[event.mode.bin_index]),
        ))
    return orders


def _idler_click_probs(config: LinkConfig, schedule: ModeSchedule) -> np.ndarray:
    """Per-mode idler click probability (spin wave present) under the
    active policy's storage times."""
    storages = schedule.storage_for_policy(config.readout_policy)
    taus = np.asarray(config.coherence_times()[:schedule.n_used])
    eta = np.array([
        retrieval_efficiency(float(t), config.retrieval_efficiency_0, float(tau),
                             config.decay_shape)
        for t, tau in zip(storages, taus)
    ])
    return 1.0 - (1.0 - config.idler_noise_prob) * (1.0 - eta)


def run_round(config: LinkConfig, schedule: ModeSchedule,
              rng: np.random.Generator) -> RoundOutcome:
    """Execute one full protocol round and return its outcome ledger."""
    n = schedule.n_used
    jitter = config.herald_jitter_s > 0.0
    u = rng.random(draws_per_round(n, jitter))
    u_pair, u_sig, u_idler = u[: n], u[n: 2 * n], u[2 * n: 3 * n]
    u_pick = u[3 * n]

    p0, p1, _ = pair_number_probs(config.chi)
    n_pairs = ((u_pair >= p0).astype(np.int8) + (u_pair >= p0 + p1).astype(np.int8))

    budget = ChannelBudget.from_config(config)
    p_click = signal_click_probs(budget, config.noise_click_prob)
    clicks = u_sig < p_click[n_pairs]
    click_bins = [int(b) for b in np.nonzero(clicks)[0]]

    faults: list[str] = []
    events: list[HeraldEvent] = []
    for b in click_bins:
        arrival = float(schedule.herald_time_s[b])
        if jitter:
            arrival += (2.0 * u[3 * n + 1 + b] - 1.0) * config.herald_jitter_s
        try:
            mode = resolve_mode(schedule, arrival)
        except ResolveError as exc:
            faults.append(str(exc))
            continue
        events.append(HeraldEvent(arrival_time_s=arrival, mode=mode))
    events.sort(key=lambda e: e.arrival_time_s)

    orders = register_heralds(events, config, schedule)
    cap = registration_cap(config, n)
    registered = events[:cap]

    p_i_spin = _idler_click_probs(config, schedule)
    n_i = config.idler_noise_prob
    idler_clicks = []
    for order in orders:
        b = order.mode.bin_index
        p = p_i_spin[b] if n_pairs[b] >= 1 else n_i
        if u_idler[b] < p:
            idler_clicks.append(b)

    nosig_readout = None
    if not click_bins:
        b = min(int(u_pick * n), n - 1)
        p = p_i_spin[b] if n_pairs[b] >= 1 else n_i
        nosig_readout = (b, bool(u_idler[b] < p))

    return RoundOutcome(
        n_pairs=n_pairs,
        signal_clicks=click_bins,
        herald_events=events,
        registered=registered,
        readout_orders=orders,
        idler_clicks=idler_clicks,
        nosig_readout=nosig_readout,
        faults=faults,
    )
