"""Stochastic photonic model: pair generation, signal detection, memory
retrieval with time-dependent decoherence.

Pair numbers follow truncated thermal (two-mode-squeezed) statistics,
P(n) proportional to (1 - chi) * chi**n for n in {0, 1, 2}, renormalized.
This keeps the small-excitation correlation signature g ~ 1 + 1/chi while
staying cheap to sample; the truncation error is O(chi^3).

Noise is two independent, memoryless Bernoulli floors: a per-time-bin
false signal click and a per-read-out false idler click.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LinkConfig


@dataclass(frozen=True)
class PairSample:
    n_pairs: int
    spin_wave_present: bool


@dataclass(frozen=True)
class ChannelBudget:
    """Detection budget of the signal path."""

    fiber_transmission: float
    signal_detect_prob_per_photon: float

    @classmethod
    def from_config(cls, config: LinkConfig) -> "ChannelBudget":
        trans = config.fiber_transmission()
        return cls(fiber_transmission=trans,
                   signal_detect_prob_per_photon=config.signal_path_efficiency * trans)


def pair_number_probs(chi: float) -> tuple[float, float, float]:
    """(P0, P1, P2) of the truncated thermal distribution."""
    if not (0.0 <= chi < 0.5):
        raise ValueError(f"chi must satisfy 0 <= chi < 0.5, got {chi}")
    z = 1.0 + chi + chi * chi
    return 1.0 / z, chi / z, chi * chi / z


def sample_write(chi: float, rng: np.random.Generator) -> PairSample:
    """Draw the photon-pair number for one write trial of one mode."""
    n = int(sample_pair_numbers(chi, rng.random()))
    return PairSample(n_pairs=n, spin_wave_present=n >= 1)


def sample_pair_numbers(chi: float, uniforms) -> np.ndarray:
    """Vectorized inverse-CDF pair sampling; ``uniforms`` in [0, 1)."""
    p0, p1, _ = pair_number_probs(chi)
    u = np.asarray(uniforms)
    return (u >= p0).astype(np.int8) + (u >= p0 + p1).astype(np.int8)


def signal_click_probs(budget: ChannelBudget, noise_click_prob: float) -> np.ndarray:
    """Click probability of the signal detector indexed by pair number:
    1 - (1 - noise) * (1 - q)**n."""
    q = budget.signal_detect_prob_per_photon
    keep = 1.0 - noise_click_prob
    return np.array([1.0 - keep * (1.0 - q) ** n for n in range(3)])


def detect_signal(pair: PairSample, budget: ChannelBudget, noise_click_prob: float,
                  rng: np.random.Generator) -> bool:
    p = signal_click_probs(budget, noise_click_prob)[pair.n_pairs]
    return bool(rng.random() < p)


def retrieval_efficiency(t_storage: float, eta0: float, tau: float, shape: str):
    """Memory retrieval efficiency after ``t_storage`` seconds.

    exponential: eta0 * exp(-t/tau);  gaussian: eta0 * exp(-(t/tau)^2).
    Accepts scalars or arrays for ``t_storage``.
    """
    t = np.asarray(t_storage, dtype=float)
    if np.any(t < 0):
        raise ValueError("storage time must be non-negative")
    if not (0.0 < eta0 <= 1.0):
        raise ValueError(f"eta0 must be in (0, 1], got {eta0}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if shape == "exponential":
        out = eta0 * np.exp(-t / tau)
    elif shape == "gaussian":
        out = eta0 * np.exp(-((t / tau) ** 2))
    else:
        raise ValueError(f"unknown decay shape {shape!r}")
    return float(out) if np.isscalar(t_storage) else out


def idler_click_prob(spin_wave_present: bool, t_storage: float, config: LinkConfig,
                     tau: float | None = None) -> float:
    """1 - (1 - idler_noise) * (1 - eta(t))**[spin present]."""
    if tau is None:
        tau = float(np.mean(config.coherence_times()))
    keep = 1.0 - config.idler_noise_prob
    if not spin_wave_present:
        return 1.0 - keep
    eta = retrieval_efficiency(t_storage, config.retrieval_efficiency_0, tau,
                               config.decay_shape)
    return 1.0 - keep * (1.0 - eta)


def sample_readout(spin_wave_present: bool, t_storage: float, config: LinkConfig,
                   rng: np.random.Generator) -> bool:
    """Draw the idler click of one read-out."""
    return bool(rng.random() < idler_click_prob(spin_wave_present, t_storage, config))


def mean_pairs(chi: float) -> float:
    p0, p1, p2 = pair_number_probs(chi)
    return p1 + 2.0 * p2


def signal_snr(chi: float, budget: ChannelBudget, noise_click_prob: float) -> float:
    """Photon-click to noise-click ratio of the signal stream.

    Increases monotonically with the excitation parameter at fixed noise.
    """
    if noise_click_prob <= 0:
        return math.inf
    q = budget.signal_detect_prob_per_photon
    p0, p1, p2 = pair_number_probs(chi)
    e_no_click = p0 + p1 * (1.0 - q) + p2 * (1.0 - q) ** 2
    return (1.0 - e_no_click) / noise_click_prob
