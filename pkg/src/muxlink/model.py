"""Configuration and core value types shared by every other module.

All times are seconds, lengths are meters, probabilities are plain
fractions.  The default :class:`LinkConfig` is the calibrated 12 km /
280-mode operating point (fixed-storage read-out, p-bar = 0.167%); see
``muxlink.scenarios`` for the other presets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, asdict


GRID_SIZE = 10  # memory array is a 10 x 10 cell grid

# Calibrated operating point for the default (12 km telecom) scenario.
# These are fitted so that the simulator reproduces the anchor
# p-bar = 0.167%, g = 2.67 at 130 us storage; they are calibration
# outputs, not independent predictions.  Values frozen from
# oracle.calibrate (see tests/test_oracle.py for the consistency check).
DEFAULT_SIGNAL_PATH_EFFICIENCY = 0.0102
DEFAULT_CHI = 0.24923666936838235
DEFAULT_RETRIEVAL_EFFICIENCY_0 = 0.028033393721656065
DEFAULT_IDLER_NOISE_PROB = 0.0035541885028554194


class ConfigError(ValueError):
    """Raised when a configuration file or override is unusable."""


@dataclass(frozen=True)
class ModeId:
    """One time-bin mode: (cell, angle) and its flat bin index."""

    cell_index: int
    angle_index: int
    bin_index: int

    @classmethod
    def from_bin(cls, bin_index: int, angles_per_cell: int) -> "ModeId":
        return cls(
            cell_index=bin_index // angles_per_cell,
            angle_index=bin_index % angles_per_cell,
            bin_index=bin_index,
        )

    @classmethod
    def from_cell_angle(cls, cell_index: int, angle_index: int, angles_per_cell: int) -> "ModeId":
        return cls(
            cell_index=cell_index,
            angle_index=angle_index,
            bin_index=cell_index * angles_per_cell + angle_index,
        )


@dataclass
class LinkConfig:
    """All physical and protocol parameters of one half-link scenario."""

    fiber_length_m: float = 12000.0
    fiber_light_speed_mps: float = 2.0e8          # chosen so 2L/c = 120 us at 12 km
    n_cells: int = 70
    angles_per_cell: int = 4
    cell_switch_time_s: float = 1.7e-6
    intra_cell_bin_gap_s: float = 400e-9
    inter_cell_bin_gap_s: float = 500e-9
    feedforward_latency_s: float = 10e-6
    chi: float = DEFAULT_CHI                      # pair-excitation parameter per mode per trial
    signal_path_efficiency: float = DEFAULT_SIGNAL_PATH_EFFICIENCY
    fiber_attenuation_db_per_km: float = 0.2
    noise_click_prob: float = 0.0                 # per-time-bin false signal click
    retrieval_efficiency_0: float = DEFAULT_RETRIEVAL_EFFICIENCY_0
    idler_noise_prob: float = DEFAULT_IDLER_NOISE_PROB
    coherence_time_s: float | list[float] = 235e-6
    decay_shape: str = "exponential"              # exponential | gaussian
    readout_policy: str = "immediate"             # immediate (policy A) | scheduled (policy B)
    herald_cap: int | None = 3                    # None = unlimited registrations per round
    first_only: bool = False                      # terminate heralding after the first TTL
    mot_load_time_s: float = 22e-3
    pump_time_s: float = 60e-6
    rounds_per_cycle: int = 10
    rng_seed: int = 2024
    # Protocol-shape extensions (all optional; defaults reproduce the
    # standard full protocol):
    n_used_modes: int | None = None               # None = all n_cells * angles_per_cell
    herald_return_fiber: bool = True              # False: herald skips the second fiber (L/c delay only)
    scheduled_read_time_s: float | None = None    # None = 2L/c + (n/total) 2L/c + feedforward
    herald_jitter_s: float = 0.0                  # uniform +- jitter on herald arrival
    allow_gap_mismatch: bool = False              # skip the cell-period consistency check

    def total_modes(self) -> int:
        return self.n_cells * self.angles_per_cell

    def used_modes(self) -> int:
        return self.total_modes() if self.n_used_modes is None else self.n_used_modes

    def coherence_times(self) -> list[float]:
        """Per-mode coherence time list of length total_modes()."""
        if isinstance(self.coherence_time_s, list):
            return list(self.coherence_time_s)
        return [float(self.coherence_time_s)] * self.total_modes()

    def herald_delay_s(self) -> float:
        """Emission-to-herald-receipt delay: fiber round trip, or one way
        when the heralding TTL does not travel back through a fiber."""
        one_way = self.fiber_length_m / self.fiber_light_speed_mps
        return 2.0 * one_way if self.herald_return_fiber else one_way

    def fiber_transmission(self) -> float:
        return 10.0 ** (-self.fiber_attenuation_db_per_km * self.fiber_length_m / 1000.0 / 10.0)

    def replace(self, **overrides) -> "LinkConfig":
        data = asdict(self)
        unknown = set(overrides) - set(data)
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        data.update(overrides)
        return LinkConfig(**data)


@dataclass
class ValidationResult:
    ok: bool
    violations: list[str] = field(default_factory=list)


def validate(config: LinkConfig) -> ValidationResult:
    """Check physical consistency of a scenario; never mutates config."""
    v: list[str] = []

    def nonneg(name, value):
        if value < 0:
            v.append(f"{name} must be non-negative, got {value}")

    def prob(name, value):
        if not (0.0 <= value <= 1.0):
            v.append(f"{name} must be a probability in [0, 1], got {value}")

    nonneg("fiber_length_m", config.fiber_length_m)
    if config.fiber_light_speed_mps <= 0:
        v.append("fiber_light_speed_mps must be positive")
    for name in ("cell_switch_time_s", "intra_cell_bin_gap_s", "inter_cell_bin_gap_s",
                 "feedforward_latency_s", "mot_load_time_s", "pump_time_s",
                 "herald_jitter_s"):
        nonneg(name, getattr(config, name))
    for name in ("signal_path_efficiency", "noise_click_prob",
                 "retrieval_efficiency_0", "idler_noise_prob"):
        prob(name, getattr(config, name))
    nonneg("fiber_attenuation_db_per_km", config.fiber_attenuation_db_per_km)

    if not (0.0 <= config.chi < 0.5):
        v.append(f"chi < 0.5 required (truncated-thermal validity), got {config.chi}")

    if config.n_cells < 1:
        v.append("n_cells must be >= 1")
    if config.n_cells > GRID_SIZE * GRID_SIZE:
        v.append(f"n_cells must fit the {GRID_SIZE}x{GRID_SIZE} grid")
    if config.angles_per_cell < 1:
        v.append("angles_per_cell must be >= 1")
    if config.rounds_per_cycle < 1:
        v.append("rounds_per_cycle must be >= 1")
    if config.herald_cap is not None and config.herald_cap < 1:
        v.append("herald_cap must be >= 1 or null")

    taus = config.coherence_times() if isinstance(config.coherence_time_s, list) else None
    if taus is not None and len(taus) != config.total_modes():
        v.append(f"per-mode coherence_time_s list must have length {config.total_modes()}, "
                 f"got {len(taus)}")
    for tau in (taus if taus is not None else [float(config.coherence_time_s)]):
        if tau <= 0:
            v.append("coherence_time_s entries must be positive")
            break

    if config.decay_shape not in ("exponential", "gaussian"):
        v.append(f"decay_shape must be exponential or gaussian, got {config.decay_shape!r}")
    if config.readout_policy not in ("immediate", "scheduled"):
        v.append(f"readout_policy must be immediate or scheduled, got {config.readout_policy!r}")

    # The bin train of one cell plus the inter-cell gap must tile the cell
    # switching period, otherwise emission times drift off the write-beam
    # schedule (with defaults: 3*400 ns + 500 ns = 1.7 us).
    if config.n_cells > 1 and not config.allow_gap_mismatch:
        period = ((config.angles_per_cell - 1) * config.intra_cell_bin_gap_s
                  + config.inter_cell_bin_gap_s)
        if not math.isclose(period, config.cell_switch_time_s, rel_tol=1e-9, abs_tol=1e-15):
            v.append(
                f"(angles_per_cell-1)*intra_cell_bin_gap_s + inter_cell_bin_gap_s = {period} "
                f"must equal cell_switch_time_s = {config.cell_switch_time_s} "
                f"(set allow_gap_mismatch to override)")

    if config.n_used_modes is not None:
        n = config.n_used_modes
        if not (1 <= n <= config.total_modes()):
            v.append(f"n_used_modes must be in [1, {config.total_modes()}], got {n}")
        elif n % config.angles_per_cell != 0:
            v.append(f"n_used_modes must be a multiple of angles_per_cell "
                     f"({config.angles_per_cell}); cells are excited whole")

    if config.scheduled_read_time_s is not None and config.scheduled_read_time_s < 0:
        v.append("scheduled_read_time_s must be non-negative")

    return ValidationResult(ok=not v, violations=v)


def total_modes(config: LinkConfig) -> int:
    return config.total_modes()


_FIELD_NAMES = {f.name for f in fields(LinkConfig)}


def config_from_dict(data: dict) -> LinkConfig:
    """Build a config from a parsed JSON object; unknown keys are a hard
    error so a typo cannot silently fall back to a default."""
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    config = LinkConfig(**data)
    result = validate(config)
    if not result.ok:
        raise ConfigError("invalid config: " + "; ".join(result.violations))
    return config


def load_config(path) -> LinkConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return config_from_dict(data)


def config_to_dict(config: LinkConfig) -> dict:
    return asdict(config)


def save_config(config: LinkConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
