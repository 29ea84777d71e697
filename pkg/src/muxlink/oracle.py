"""Closed-form expectations for every Monte Carlo observable.

Marginalizes the truncated-thermal pair number and the two Bernoulli
noise floors analytically, giving exact per-mode probabilities for any
(chi, storage time, config) point.  Used to cross-validate the sampler
and to calibrate model parameters against measured anchor points.

The cross-correlation comes in two forms that coincide in the operating
regime (per-mode click probability around 1e-3) but differ at unit
efficiencies:

* ``g_analytic``  -- the counting-estimator target
  p(idler | signal click) / p(idler | no signal click), which is what
  the C*R0/(S*I) estimator converges to;
* ``g_exact``     -- the definition p_si / (p_s * p_i) with the
  unconditional idler click probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .channel import ChannelBudget, pair_number_probs, retrieval_efficiency
from .model import LinkConfig
from .schedule import ModeSchedule, build_schedule


@dataclass
class OraclePoint:
    """Analytic per-mode probabilities at one (chi, storage time) point."""

    chi: float
    storage_time_s: float
    p_s: float                 # signal click probability per mode per trial
    p_i: float                 # unconditional idler click probability if read out
    p_si: float                # joint signal-and-idler click probability
    p_si_given_s: float
    p_i_given_nosig: float
    g_analytic: float          # p_si_given_s / p_i_given_nosig (estimator target)
    g_exact: float             # p_si / (p_s * p_i)


def _point_from_probs(chi, t, q, n_s, eta, n_i) -> OraclePoint:
    probs = pair_number_probs(chi)
    a = 1.0 - q
    keep_s = 1.0 - n_s
    keep_i = 1.0 - n_i
    d = 1.0 - eta

    p_s = p_si = p_i = p_nosig_and_i = 0.0
    for n, pn in enumerate(probs):
        click_s = 1.0 - keep_s * a ** n
        click_i = 1.0 - keep_i * (d if n >= 1 else 1.0)
        p_s += pn * click_s
        p_i += pn * click_i
        p_si += pn * click_s * click_i
        p_nosig_and_i += pn * (1.0 - click_s) * click_i

    p_si_given_s = p_si / p_s if p_s > 0 else 0.0
    p_nosig = 1.0 - p_s
    p_i_given_nosig = p_nosig_and_i / p_nosig if p_nosig > 0 else 0.0
    g_analytic = p_si_given_s / p_i_given_nosig if p_i_given_nosig > 0 else math.inf
    g_exact = p_si / (p_s * p_i) if p_s > 0 and p_i > 0 else math.inf
    return OraclePoint(chi=chi, storage_time_s=t, p_s=p_s, p_i=p_i, p_si=p_si,
                       p_si_given_s=p_si_given_s, p_i_given_nosig=p_i_given_nosig,
                       g_analytic=g_analytic, g_exact=g_exact)


def analytic_probs(config: LinkConfig, storage_time_s: float,
                   chi: float | None = None) -> OraclePoint:
    """Exact expectations for one mode stored for ``storage_time_s``."""
    if chi is None:
        chi = config.chi
    budget = ChannelBudget.from_config(config)
    tau = float(np.mean(config.coherence_times()))
    eta = retrieval_efficiency(storage_time_s, config.retrieval_efficiency_0, tau,
                               config.decay_shape)
    return _point_from_probs(chi, storage_time_s,
                             budget.signal_detect_prob_per_photon,
                             config.noise_click_prob, eta, config.idler_noise_prob)


@dataclass
class PooledPoint:
    """Scenario-level expectations pooled over all used modes.

    The counting estimator pools clicks across modes, so its target is
    mean(p_si_given_s) / mean(p_i_given_nosig) over the per-mode storage
    times of the active read-out policy.
    """

    p_s: float
    p_total: float
    p_si_given_s: float
    p_i_given_nosig: float
    g_analytic: float
    mean_storage_s: float
    mean_retrieval: float
    points: list[OraclePoint] = field(repr=False, default_factory=list)


def pooled_probs(config: LinkConfig, schedule: ModeSchedule | None = None,
                 chi: float | None = None, policy: str | None = None) -> PooledPoint:
    if schedule is None:
        schedule = build_schedule(config)
    if policy is None:
        policy = config.readout_policy
    storages = schedule.storage_for_policy(policy)
    points = [analytic_probs(config, float(t), chi=chi) for t in storages]
    p_s = points[0].p_s
    num = float(np.mean([p.p_si_given_s for p in points]))
    den = float(np.mean([p.p_i_given_nosig for p in points]))
    tau = float(np.mean(config.coherence_times()))
    mean_eta = float(np.mean(retrieval_efficiency(
        storages, config.retrieval_efficiency_0, tau, config.decay_shape)))
    return PooledPoint(
        p_s=p_s,
        p_total=p_s * schedule.n_used,
        p_si_given_s=num,
        p_i_given_nosig=den,
        g_analytic=num / den if den > 0 else math.inf,
        mean_storage_s=float(np.mean(storages)),
        mean_retrieval=mean_eta,
        points=points,
    )


def invert_pbar(p_bar: float, config: LinkConfig) -> float:
    """Excitation parameter chi that makes the per-mode signal click
    probability equal ``p_bar`` under the config's detection budget.

    Solves 1 - (1-n_s) * E[(1-q)^n] = p_bar for the truncated thermal
    distribution; closed form via the quadratic in chi.
    """
    q = ChannelBudget.from_config(config).signal_detect_prob_per_photon
    n_s = config.noise_click_prob
    if p_bar < n_s:
        raise ValueError(f"p_bar = {p_bar} is below the noise floor {n_s}")
    v = (1.0 - p_bar) / (1.0 - n_s)    # target E[(1-q)^n]
    a = 1.0 - q
    # (1 + a x + a^2 x^2) = v (1 + x + x^2)
    c2 = a * a - v
    c1 = a - v
    c0 = 1.0 - v
    if c0 == 0.0:
        return 0.0
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < 0:
        raise ValueError(f"p_bar = {p_bar} not reachable with q = {q}")
    roots = []
    if c2 != 0.0:
        roots.extend(((-c1 - math.sqrt(disc)) / (2 * c2),
                      (-c1 + math.sqrt(disc)) / (2 * c2)))
    elif c1 != 0.0:
        roots.append(-c0 / c1)
    valid = [r for r in roots if 0.0 <= r < 0.5]
    if not valid:
        raise ValueError(
            f"p_bar = {p_bar} requires chi outside [0, 0.5) at q = {q} "
            f"(roots {roots})")
    return min(valid)


def expected_registered_heralds(config: LinkConfig, n_used: int | None = None,
                                p_bar: float | None = None) -> float:
    """E[min(X, cap)] with X ~ Binomial(n_used, p_bar), by exact summation."""
    if n_used is None:
        n_used = config.used_modes()
    if p_bar is None:
        p_bar = analytic_probs(config, 0.0).p_s
    cap = n_used if config.first_only is False and config.herald_cap is None \
        else (1 if config.first_only else config.herald_cap)
    cap = min(cap, n_used)
    k = np.arange(n_used + 1)
    pmf = stats.binom.pmf(k, n_used, p_bar)
    return float(np.sum(np.minimum(k, cap) * pmf))


def classical_bound_crossing(config: LinkConfig, storage_time_s: float,
                             bound: float = 2.0) -> tuple[float, float] | None:
    """(chi, p_bar) where the analytic cross-correlation crosses ``bound``,
    or None if it stays above within the model's validity range."""

    def g_minus_bound(chi):
        return analytic_probs(config, storage_time_s, chi=chi).g_analytic - bound

    lo, hi = 1e-6, 0.4999
    if g_minus_bound(lo) <= 0.0 or g_minus_bound(hi) >= 0.0:
        return None
    chi_star = optimize.brentq(g_minus_bound, lo, hi, xtol=1e-12)
    return chi_star, analytic_probs(config, storage_time_s, chi=chi_star).p_s


class CalibrationError(RuntimeError):
    pass


@dataclass
class CalibrationTarget:
    """One measured anchor: scenario base config plus the observed
    (p_bar, g) pair and optionally the observed mean retrieval efficiency."""

    name: str
    config: LinkConfig
    p_bar: float
    g: float
    g_sigma: float = 0.0
    retrieval_efficiency: float | None = None


@dataclass
class CalibrationResult:
    eta0: float
    per_target: dict[str, dict]
    residuals: dict[str, dict]
    max_rel_residual: float

    def calibrated_config(self, name: str) -> LinkConfig:
        return self.per_target[name]["config"]


def _g_model(target_cfg: LinkConfig, chi: float, eta0: float, n_i: float) -> PooledPoint:
    cfg = target_cfg.replace(chi=chi, retrieval_efficiency_0=eta0, idler_noise_prob=n_i)
    return pooled_probs(cfg)


def calibrate(targets: list[CalibrationTarget]) -> CalibrationResult:
    """Fit the memory retrieval and noise parameters to measured anchors.

    Fits one shared zero-time retrieval efficiency eta0 (a single memory
    serves every scenario) plus per-scenario (chi, idler_noise_prob);
    chi reproduces the measured p_bar, the idler floor reproduces the
    measured g.  The anchors leave the signal noise floor unconstrained
    downward, so noise_click_prob stays at its per-scenario preset value.
    A least-squares polish follows the closed-form chained solve and the
    residual report carries the relative misfit per observable.
    """
    if not targets:
        raise CalibrationError("at least one calibration target is required")

    # eta0 from the retrieval anchor(s); without one, keep the preset value.
    retr = [t for t in targets if t.retrieval_efficiency is not None]
    if retr:
        def eta0_residuals(eta0):
            out = []
            for t in retr:
                cfg = t.config.replace(retrieval_efficiency_0=float(eta0[0]))
                out.append(pooled_probs(cfg).mean_retrieval / t.retrieval_efficiency - 1.0)
            return out
        sol = optimize.least_squares(eta0_residuals, x0=[retr[0].retrieval_efficiency],
                                     bounds=([1e-6], [1.0]))
        eta0 = float(sol.x[0])
    else:
        eta0 = targets[0].config.retrieval_efficiency_0

    per_target: dict[str, dict] = {}
    residuals: dict[str, dict] = {}
    worst = 0.0
    for t in targets:
        base = t.config.replace(retrieval_efficiency_0=eta0)
        chi = invert_pbar(t.p_bar, base)

        def g_minus_target(log_ni, chi=chi, base=base, g_target=t.g):
            cfg = base.replace(chi=chi, idler_noise_prob=float(np.exp(log_ni)))
            return pooled_probs(cfg).g_analytic - g_target

        lo, hi = math.log(1e-9), math.log(0.5)
        g_lo, g_hi = g_minus_target(lo), g_minus_target(hi)
        if g_lo < 0.0:
            raise CalibrationError(
                f"target {t.name}: g = {t.g} exceeds the zero-idler-noise ceiling "
                f"{g_lo + t.g:.3f} at p_bar = {t.p_bar}")
        if g_hi > 0.0:
            raise CalibrationError(f"target {t.name}: g = {t.g} below the noise floor")
        log_ni = optimize.brentq(g_minus_target, lo, hi, xtol=1e-14)
        n_i = float(np.exp(log_ni))

        # polish (chi, n_i) jointly; relative residuals of (p_bar, g)
        def res(x, base=base, t=t):
            point = _g_model(base, x[0], eta0, x[1])
            return [point.p_s / t.p_bar - 1.0, point.g_analytic / t.g - 1.0]

        sol = optimize.least_squares(res, x0=[chi, n_i],
                                     bounds=([0.0, 0.0], [0.4999, 1.0]), xtol=1e-15)
        chi, n_i = float(sol.x[0]), float(sol.x[1])
        cfg = base.replace(chi=chi, idler_noise_prob=n_i)
        point = pooled_probs(cfg)
        res_p = point.p_s / t.p_bar - 1.0
        res_g = point.g_analytic / t.g - 1.0
        res_r = (point.mean_retrieval / t.retrieval_efficiency - 1.0
                 if t.retrieval_efficiency is not None else None)
        per_target[t.name] = {"config": cfg, "chi": chi, "idler_noise_prob": n_i,
                              "eta0": eta0, "model": point}
        residuals[t.name] = {"p_bar": res_p, "g": res_g, "retrieval": res_r}
        worst = max(worst, abs(res_p), abs(res_g),
                    abs(res_r) if res_r is not None else 0.0)

    if worst > 0.05:
        raise CalibrationError(f"calibration did not converge: max relative residual {worst:.3g}")
    return CalibrationResult(eta0=eta0, per_target=per_target, residuals=residuals,
                             max_rel_residual=worst)
