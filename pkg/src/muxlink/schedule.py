"""Deterministic event timeline for one protocol round.

Builds per-mode emission / detection / herald timestamps, the heralding
window, and the policy-dependent read-out times.  Everything here is a
pure function of the config; schedules are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GRID_SIZE, LinkConfig, ModeId


@dataclass
class ModeSchedule:
    """Timeline of one round for ``n_used`` modes (times in seconds,
    t = 0 at the first cell excitation)."""

    n_used: int
    angles_per_cell: int
    emission_time_s: np.ndarray     # per-mode signal-bin entry into the long fiber
    detect_time_s: np.ndarray       # emission + L/c
    herald_time_s: np.ndarray       # emission + herald delay (2L/c, or L/c without return fiber)
    herald_window_s: tuple[float, float]
    herald_stage_end_s: float       # end of the heralding stage (round protocol end)
    scheduled_read_time_s: float    # policy-B fixed read-out timestamp
    feedforward_latency_s: float
    round_duration_s: float
    cells: list[tuple[int, int]]    # grid coordinates of the excited cells, excitation order
    bin_width_s: float

    def storage_policy_a_s(self) -> np.ndarray:
        """Per-mode storage for immediate read-out: herald delay + feedforward,
        identical for every mode."""
        return (self.herald_time_s - self.emission_time_s) + self.feedforward_latency_s

    def storage_policy_b_s(self) -> np.ndarray:
        return self.scheduled_read_time_s - self.emission_time_s

    def storage_for_policy(self, policy: str) -> np.ndarray:
        if policy == "immediate":
            return self.storage_policy_a_s()
        if policy == "scheduled":
            return self.storage_policy_b_s()
        raise ValueError(f"unknown readout policy {policy!r}")


class ScheduleError(ValueError):
    pass


def cell_selection(config: LinkConfig, n_used_modes: int) -> list[tuple[int, int]]:
    """Grid coordinates (col, row) of the cells excited for ``n_used_modes``.

    Cells are consumed along a diagonal band of the 10x10 grid running
    lower-left to upper-right, central cells first.  The order is the
    documented constant below; its load-bearing properties are (i)
    cell_selection(n1) is a prefix of cell_selection(n2) for n1 <= n2 and
    (ii) the first 70 cells are exactly the band |row - col| <= 4.
    """
    _check_n_used(config, n_used_modes)
    n_cells = n_used_modes // config.angles_per_cell
    center = (GRID_SIZE - 1) / 2.0  # 4.5 on the 10x10 grid
    cells = [(x, y) for x in range(GRID_SIZE) for y in range(GRID_SIZE)]
    cells.sort(key=lambda c: (
        abs(c[1] - c[0]),                         # distance from the main diagonal
        abs(c[0] + c[1] - int(2 * center)),       # distance from the grid center along it
        c[0] + c[1],
        c[1] - c[0],
    ))
    return cells[:n_cells]


def _check_n_used(config: LinkConfig, n_used_modes: int) -> None:
    total = config.total_modes()
    if not (1 <= n_used_modes <= total):
        raise ScheduleError(f"n_used_modes must be in [1, {total}], got {n_used_modes}")
    if n_used_modes % config.angles_per_cell != 0:
        raise ScheduleError(
            f"n_used_modes = {n_used_modes} is not a multiple of angles_per_cell "
            f"= {config.angles_per_cell}; cells are excited whole")


def build_schedule(config: LinkConfig, n_used_modes: int | None = None) -> ModeSchedule:
    if n_used_modes is None:
        n_used_modes = config.used_modes()
    _check_n_used(config, n_used_modes)

    n = n_used_modes
    a = config.angles_per_cell
    bins = np.arange(n)
    emission = (bins // a) * config.cell_switch_time_s + (bins % a) * config.intra_cell_bin_gap_s

    one_way = config.fiber_length_m / config.fiber_light_speed_mps
    herald_delay = config.herald_delay_s()
    detect = emission + one_way
    herald = emission + herald_delay

    bin_width = config.intra_cell_bin_gap_s
    window = (herald_delay, herald_delay + float(emission[-1]) + bin_width)

    # The heralding stage shrinks with the number of used modes (its length
    # is (n/total) of the full fiber round trip) but never ends before the
    # last herald can arrive.
    round_trip = 2.0 * one_way
    stage_end = herald_delay + max((n / config.total_modes()) * round_trip, window[1] - herald_delay)

    if config.scheduled_read_time_s is not None:
        scheduled_read = config.scheduled_read_time_s
    else:
        scheduled_read = stage_end + config.feedforward_latency_s

    if config.readout_policy == "scheduled":
        min_read = window[1] + config.feedforward_latency_s
        if scheduled_read < min_read - 1e-15:
            raise ScheduleError(
                f"scheduled_read_time_s = {scheduled_read} precedes feedforward completion "
                f"for late heralds (needs >= {min_read})")

    round_duration = max(stage_end, scheduled_read - config.feedforward_latency_s,
                         float(emission[-1]) + bin_width)

    return ModeSchedule(
        n_used=n,
        angles_per_cell=a,
        emission_time_s=emission,
        detect_time_s=detect,
        herald_time_s=herald,
        herald_window_s=window,
        herald_stage_end_s=stage_end,
        scheduled_read_time_s=scheduled_read,
        feedforward_latency_s=config.feedforward_latency_s,
        round_duration_s=round_duration,
        cells=cell_selection(config, n),
        bin_width_s=bin_width,
    )


def storage_time(schedule: ModeSchedule, mode: ModeId, herald_receipt_s: float,
                 policy: str) -> float:
    """Storage time of ``mode`` when its herald is received at
    ``herald_receipt_s`` and read out under ``policy``."""
    emission = float(schedule.emission_time_s[mode.bin_index])
    expected = float(schedule.herald_time_s[mode.bin_index])
    if herald_receipt_s < expected - 1e-15:
        raise ScheduleError(
            f"herald receipt {herald_receipt_s} precedes the mode's herald time {expected}")
    if policy == "immediate":
        return herald_receipt_s + schedule.feedforward_latency_s - emission
    if policy == "scheduled":
        read = schedule.scheduled_read_time_s
        if read < herald_receipt_s + schedule.feedforward_latency_s - 1e-15:
            raise ScheduleError(
                f"scheduled read at {read} precedes feedforward completion "
                f"({herald_receipt_s + schedule.feedforward_latency_s})")
        return read - emission
    raise ValueError(f"unknown readout policy {policy!r}")


def dump_rows(schedule: ModeSchedule) -> list[dict]:
    """Timeline rows for the ``schedule dump`` CLI subcommand (times in ns)."""
    storage_a = schedule.storage_policy_a_s()
    storage_b = schedule.storage_policy_b_s()
    rows = []
    for m in range(schedule.n_used):
        rows.append({
            "bin_index": m,
            "cell": m // schedule.angles_per_cell,
            "angle": m % schedule.angles_per_cell,
            "emission_ns": schedule.emission_time_s[m] * 1e9,
            "detect_ns": schedule.detect_time_s[m] * 1e9,
            "herald_ns": schedule.herald_time_s[m] * 1e9,
            "storage_policyA_ns": storage_a[m] * 1e9,
            "storage_policyB_ns": storage_b[m] * 1e9,
        })
    return rows
