"""Scenario presets reproducing the measured operating points.

Each preset is an immutable constant documented against the figure or
supplemental section it reproduces.  The chi / retrieval / idler-noise
values are the frozen output of ``oracle.calibrate`` run against the
three measured anchors (see tests/test_oracle.py, which re-derives them);
the signal-path efficiencies are fixed calibration inputs chosen per
detection chain.  None of these are blind predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LinkConfig
from .oracle import invert_pbar

# Shared memory parameter (one physical memory serves every scenario).
CALIBRATED_ETA0 = 0.028033393721656065

# 12 km telecom link, 280 modes, fixed 130 us storage; anchor
# p_bar = 0.167%, g = 2.67 +- 0.15.
FIG3_CHI = 0.24923666936838235
FIG3_IDLER_NOISE = 0.0035541885028554194
FIG3_PATH_EFFICIENCY = 0.0102

# Local excitation of the full 10x10 array (400 modes, no long fiber),
# read at the end of the 170 us scan; anchor p = 0.17%, g = 14.8 +- 1.7.
LOCAL400_CHI = 0.054128137972182695
LOCAL400_IDLER_NOISE = 0.0003248287582871556
LOCAL400_PATH_EFFICIENCY = 0.030

# 1 km fiber at 795 nm (4.0 dB/km, no wavelength conversion), 12 modes,
# herald returned directly; anchor p_bar = 0.1%, g = 17.1 +- 1.6,
# mean retrieval efficiency 2.6%.
ONEKM_CHI = 0.04817857501351423
ONEKM_IDLER_NOISE = 0.0003136150439500536
ONEKM_PATH_EFFICIENCY = 0.050

# Sweep grids.  The chi grids bracket the measured p_bar range
# (0.04 permille to 1.7 permille, 6 log-spaced points); the mode-number
# grids use whole cells.
SWEEP_PBAR_RANGE = (4e-5, 1.7e-3)
SWEEP_PBAR_POINTS = 6
N_GRID = (4, 40, 80, 160, 280)
FIG3C_PBAR = 0.42e-3
FIG4C_PBAR = 0.43e-3

ANCHORS = {
    "fig3": {"p_bar": 0.00167, "g": 2.67, "g_sigma": 0.15},
    "local400": {"p_bar": 0.0017, "g": 14.8, "g_sigma": 1.7},
    "onekm": {"p_bar": 0.001, "g": 17.1, "g_sigma": 1.6, "retrieval_efficiency": 0.026},
}


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    base_config: LinkConfig
    sweep_axis: str | None = None          # "chi" or "n_used_modes"
    sweep_values: tuple = ()


def fig3_base_config(**overrides) -> LinkConfig:
    cfg = LinkConfig(
        readout_policy="immediate",
        chi=FIG3_CHI,
        signal_path_efficiency=FIG3_PATH_EFFICIENCY,
        retrieval_efficiency_0=CALIBRATED_ETA0,
        idler_noise_prob=FIG3_IDLER_NOISE,
    )
    return cfg.replace(**overrides) if overrides else cfg


def local400_config(**overrides) -> LinkConfig:
    # The read-out time is pre-programmed at the end of the scan, so no
    # separate feedforward latency applies.
    cfg = LinkConfig(
        fiber_length_m=0.0,
        fiber_attenuation_db_per_km=0.0,
        n_cells=100,
        readout_policy="scheduled",
        feedforward_latency_s=0.0,
        scheduled_read_time_s=170e-6,
        chi=LOCAL400_CHI,
        signal_path_efficiency=LOCAL400_PATH_EFFICIENCY,
        retrieval_efficiency_0=CALIBRATED_ETA0,
        idler_noise_prob=LOCAL400_IDLER_NOISE,
    )
    return cfg.replace(**overrides) if overrides else cfg


def onekm_config(**overrides) -> LinkConfig:
    # Heralds skip the return fiber; modes are read together once the
    # detection window closes and the feedforward has settled.
    cfg = LinkConfig(
        fiber_length_m=1000.0,
        fiber_attenuation_db_per_km=4.0,
        n_cells=3,
        readout_policy="scheduled",
        herald_return_fiber=False,
        scheduled_read_time_s=20e-6,
        chi=ONEKM_CHI,
        signal_path_efficiency=ONEKM_PATH_EFFICIENCY,
        retrieval_efficiency_0=CALIBRATED_ETA0,
        idler_noise_prob=ONEKM_IDLER_NOISE,
    )
    return cfg.replace(**overrides) if overrides else cfg


def sweep_chi_values(config: LinkConfig) -> tuple[float, ...]:
    pbars = np.geomspace(*SWEEP_PBAR_RANGE, SWEEP_PBAR_POINTS)
    return tuple(invert_pbar(float(p), config) for p in pbars)


def get_scenario(name: str) -> Scenario:
    if name == "fig3b":
        base = fig3_base_config()
        return Scenario(
            name, "g and p_total vs mean success probability, 280 modes, fixed storage",
            base, sweep_axis="chi", sweep_values=sweep_chi_values(base))
    if name == "fig3c":
        base = fig3_base_config(chi=invert_pbar(FIG3C_PBAR, fig3_base_config()))
        return Scenario(
            name, "p_total vs mode number at p_bar = 0.042%, fixed storage",
            base, sweep_axis="n_used_modes", sweep_values=N_GRID)
    if name == "fig4b":
        base = fig3_base_config(readout_policy="scheduled")
        return Scenario(
            name, "g and p_total vs mean success probability, 280 modes, scheduled read-out",
            base, sweep_axis="chi", sweep_values=sweep_chi_values(base))
    if name == "fig4c":
        base = fig3_base_config(readout_policy="scheduled")
        base = base.replace(chi=invert_pbar(FIG4C_PBAR, base))
        return Scenario(
            name, "p_total vs mode number at p_bar = 0.043%, scheduled read-out",
            base, sweep_axis="n_used_modes", sweep_values=N_GRID)
    if name == "local400":
        return Scenario(
            name, "400 modes excited locally, read at the end of the 170 us scan",
            local400_config())
    if name == "onekm":
        return Scenario(
            name, "12 modes over 1 km at 795 nm, herald returned directly",
            onekm_config())
    if name == "custom":
        return Scenario(name, "user-supplied config", LinkConfig())
    raise KeyError(f"unknown scenario {name!r}; valid: {', '.join(SCENARIO_NAMES)}")


SCENARIO_NAMES = ("fig3b", "fig3c", "fig4b", "fig4c", "local400", "onekm", "custom")
