"""Figures of merit derived from a counts ledger: success probabilities,
cross-correlation with Poisson error, rates, duty cycle, and the quantum
link efficiency."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .engine import CountsLedger
from .model import LinkConfig


REPORT_FIELDS = ["policy", "N_modes", "chi", "p_bar", "p_total", "p_total_err",
                 "g", "g_err", "rate_hz", "rate_avg_hz", "duty", "eta_link"]


class InsufficientCounts(RuntimeError):
    """Ledger lacks the counts needed for an estimate; carries the partials."""

    def __init__(self, message: str, counts: dict):
        super().__init__(message)
        self.counts = counts


@dataclass
class LinkReport:
    policy: str
    n_modes: int
    chi: float
    p_bar: float
    p_total: float
    p_total_err: float
    g_value: float
    g_sigma: float
    rate_in_protocol_hz: float
    rate_averaged_hz: float
    duty_cycle: float
    expected_corr_within_tcoh: float
    eta_link: float

    def csv_row(self) -> list:
        return [self.policy, self.n_modes, self.chi, self.p_bar, self.p_total,
                self.p_total_err, self.g_value, self.g_sigma,
                self.rate_in_protocol_hz, self.rate_averaged_hz, self.duty_cycle,
                self.eta_link]


def estimate_g(ledger: CountsLedger) -> tuple[float, float]:
    """Counting estimator g = C*R0 / (S*I) with the Poisson error
    g * sqrt(1/C + 1/S + 1/I + 1/R0)."""
    c, s = ledger.coincidences_C, ledger.signal_clicks_S
    i, r0 = ledger.nosig_idler_clicks_I, ledger.nosig_rounds_R0
    if s == 0 or i == 0:
        raise InsufficientCounts(
            f"cannot estimate g from S={s}, I={i} (need both positive)",
            counts={"C": c, "S": s, "I": i, "R0": r0})
    g = (c * r0) / (s * i)
    if c == 0:
        # zero coincidences: report the one-count scale as the uncertainty
        return 0.0, (r0 / (s * i)) * math.sqrt(1.0 + 1.0 / s + 1.0 / i + 1.0 / r0)
    sigma = g * math.sqrt(1.0 / c + 1.0 / s + 1.0 / i + 1.0 / r0)
    return g, sigma


def rates(ledger: CountsLedger, config: LinkConfig) -> tuple[float, float, float]:
    """(in-protocol rate, wall-clock-averaged rate, duty cycle)."""
    if ledger.n_rounds == 0:
        raise InsufficientCounts("empty ledger", counts={})
    in_protocol = ledger.signal_clicks_S / (ledger.n_rounds * ledger.round_duration_s)
    averaged = ledger.signal_clicks_S / ledger.wall_clock_s
    duty = (ledger.n_rounds * ledger.round_duration_s) / ledger.wall_clock_s
    return in_protocol, averaged, duty


def mean_coherence_time(config: LinkConfig) -> float:
    return float(np.mean(config.coherence_times()))


def link_efficiency(config: LinkConfig, rate_in_protocol_hz: float) -> float:
    """Quantum link efficiency: twice the expected number of heralded
    correlations generated within the memory coherence time."""
    if rate_in_protocol_hz < 0:
        raise ValueError("rate must be non-negative")
    return 2.0 * rate_in_protocol_hz * mean_coherence_time(config)


def link_efficiency_product_form(config: LinkConfig, p_bar: float,
                                 n_modes: int) -> float:
    """Equivalent product form (c / 2L) * T_coh * p_bar * N; agrees with
    2 * rate * T_coh when the round lasts two fiber round trips."""
    c_over_2l = config.fiber_light_speed_mps / (2.0 * config.fiber_length_m)
    return c_over_2l * mean_coherence_time(config) * p_bar * n_modes


def build_report(ledger: CountsLedger, config: LinkConfig) -> LinkReport:
    n_modes = len(ledger.herald_histogram)
    p_total = ledger.signal_clicks_S / ledger.n_rounds
    p_bar = p_total / n_modes
    # binomial error on the empirical per-round click count
    p_total_err = math.sqrt(max(p_bar * (1.0 - p_bar), 0.0) * n_modes / ledger.n_rounds)
    try:
        g, g_sigma = estimate_g(ledger)
    except InsufficientCounts:
        g, g_sigma = math.nan, math.nan
    rate, rate_avg, duty = rates(ledger, config)
    corr = rate * mean_coherence_time(config)
    return LinkReport(
        policy=config.readout_policy,
        n_modes=n_modes,
        chi=config.chi,
        p_bar=p_bar,
        p_total=p_total,
        p_total_err=p_total_err,
        g_value=g,
        g_sigma=g_sigma,
        rate_in_protocol_hz=rate,
        rate_averaged_hz=rate_avg,
        duty_cycle=duty,
        expected_corr_within_tcoh=corr,
        eta_link=2.0 * corr,
    )


def write_report_csv(path, reports: list[LinkReport], extra_fields: dict | None = None,
                     footer: str | None = None) -> None:
    """One CSV row per report; optional extra columns (same for all rows)
    and a trailing comment footer (linear-fit summaries etc.)."""
    extra = extra_fields or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(extra.keys()) + REPORT_FIELDS)
        for i, rep in enumerate(reports):
            lead = [v[i] if isinstance(v, (list, np.ndarray)) else v
                    for v in extra.values()]
            writer.writerow(lead + rep.csv_row())
        if footer:
            fh.write(f"# {footer}\n")


def _exp_decay(t, amplitude, tau, floor):
    return amplitude * np.exp(-t / tau) + floor


def _gauss_decay(t, amplitude, tau, floor):
    return amplitude * np.exp(-((t / tau) ** 2)) + floor


def fit_coherence(decay_points: list[tuple[float, float]],
                  shape: str = "exponential") -> tuple[float, float]:
    """Least-squares fit of a decay curve a*exp(-t/tau) + floor (or the
    gaussian analog); returns (tau, asymptotic standard error of tau)."""
    if len(decay_points) < 3:
        raise ValueError("need at least 3 decay points")
    t = np.array([p[0] for p in decay_points], dtype=float)
    y = np.array([p[1] for p in decay_points], dtype=float)
    if len(np.unique(t)) != len(t):
        raise ValueError("decay point times must be distinct")
    model = {"exponential": _exp_decay, "gaussian": _gauss_decay}.get(shape)
    if model is None:
        raise ValueError(f"unknown decay shape {shape!r}")
    span = float(t.max() - t.min()) or 1.0
    p0 = [max(y.max() - y.min(), 1e-12), span, max(y.min(), 0.0)]
    try:
        popt, pcov = curve_fit(model, t, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise RuntimeError(f"coherence fit did not converge: {exc}") from exc
    tau = float(popt[1])
    tau_err = float(np.sqrt(pcov[1][1])) if np.all(np.isfinite(pcov)) else math.inf
    if tau <= 0 or not math.isfinite(tau):
        residual = float(np.sum((model(t, *popt) - y) ** 2))
        raise RuntimeError(f"coherence fit landed on tau = {tau} (residual {residual:g})")
    return tau, tau_err


def linear_fit(x, y) -> tuple[float, float, float]:
    """Ordinary least squares y = slope*x + intercept; returns
    (slope, intercept, r_squared)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
