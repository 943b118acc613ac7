"""Transmit-gain optimization for the likelihood-ratio detector.

The large-M detection SNR is separable and concave in the per-sensor powers
x_i = |a_i|^2, so the optimal allocation under a sum-power budget is a
water-filling law in a single multiplier, found by bisection.  Phase never
enters the large-M objective; optimal gains are returned real and nonnegative.
The scalar-receiver case keeps phase, where it matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .np_detector import DegenerateDetectorError, asymptotic_snr_from_power
from .scenario import GainVector, Scenario


@dataclass(frozen=True, eq=False)
class WaterfillSolution:
    """Optimal per-sensor powers, the water-level multiplier, and the SNR achieved."""

    magnitudes_sq: np.ndarray
    multiplier: float
    achieved_snr: float
    iterations: int

    @property
    def gains(self) -> GainVector:
        return GainVector.from_magnitudes_sq(self.magnitudes_sq)


def _waterfill_powers(lam: float, noise_dist: np.ndarray, v: np.ndarray, m: int) -> np.ndarray:
    # noise_dist_i = fc_noise_var * d_i**alpha; clamped square-root law in lam
    root = np.sqrt(noise_dist * m / lam)
    return np.maximum(root - noise_dist, 0.0) / (v * m)


def waterfill(scenario: Scenario, m: int, p: float, tol: float = 1e-9) -> WaterfillSolution:
    """Maximize the large-M detection SNR under sum power p.

    Bisects the multiplier over its closed-form bracket until the allocated
    power matches p to relative tolerance tol:  the total allocated power is
    continuous and strictly decreasing in the multiplier, from >= p at the
    lower bracket to 0 at the upper.
    """
    if p <= 0:
        raise ValueError("sum power must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if m < 1:
        raise ValueError("antenna count must be >= 1")
    d_alpha = scenario.distances**scenario.path_loss_exp
    v = scenario.meas_noise_vars
    noise_dist = scenario.fc_noise_var * d_alpha

    lam_hi = m / noise_dist.min()
    lam_lo = float(np.min(noise_dist * m / (noise_dist + v * p * m) ** 2))

    x = _waterfill_powers(lam_lo, noise_dist, v, m)
    lam = lam_lo
    iters = 0
    for iters in range(1, 201):
        lam = 0.5 * (lam_lo + lam_hi)
        x = _waterfill_powers(lam, noise_dist, v, m)
        resid = x.sum() - p
        if abs(resid) <= tol * p:
            break
        if resid > 0:
            lam_lo = lam
        else:
            lam_hi = lam
        if lam_hi - lam_lo <= 1e-12 * lam_hi:
            break
    return WaterfillSolution(x, float(lam), asymptotic_snr_from_power(x, scenario, m), iters)


def waterfill_kkt_residual(sol: WaterfillSolution, scenario: Scenario, m: int) -> float:
    """Worst-case stationarity violation of a water-filling solution.

    Active sensors must have marginal SNR equal to the multiplier; inactive
    sensors must have marginal at zero power not exceeding it.
    """
    d_alpha = scenario.distances**scenario.path_loss_exp
    noise_dist = scenario.fc_noise_var * d_alpha
    marginal = m * noise_dist / (noise_dist + scenario.meas_noise_vars * m * sol.magnitudes_sq) ** 2
    active = sol.magnitudes_sq > 0
    resid = 0.0
    if active.any():
        resid = float(np.max(np.abs(marginal[active] - sol.multiplier)) / sol.multiplier)
    if (~active).any():
        slack = float(np.max(marginal[~active] - sol.multiplier) / sol.multiplier)
        resid = max(resid, slack)
    return resid


def snr_floor_gains(scenario: Scenario, m: int) -> GainVector:
    """Closed-form gains whose power shrinks as 1/M while the large-M SNR stays
    at exactly one third of its infinite-power limit.

    Each sensor's forwarded-noise term is pinned to half its distance-scaled
    receiver-noise term: |a_i|^2 = s d_i**alpha / (2 v_i M).
    """
    if m < 1:
        raise ValueError("antenna count must be >= 1")
    d_alpha = scenario.distances**scenario.path_loss_exp
    x = scenario.fc_noise_var * d_alpha / (2.0 * scenario.meas_noise_vars * m)
    return GainVector.from_magnitudes_sq(x)


def snr_floor_power(scenario: Scenario, m: int) -> float:
    """Sum power of :func:`snr_floor_gains`: sum_i s d_i**alpha / (2 v_i M)."""
    d_alpha = scenario.distances**scenario.path_loss_exp
    return float(np.sum(scenario.fc_noise_var * d_alpha / (2.0 * scenario.meas_noise_vars * m)))


def single_antenna_optimal_gains(scenario: Scenario, h: np.ndarray, p: float) -> GainVector:
    """Gains maximizing the scalar receiver's signal-to-noise ratio at sum power p.

    Matched-filter solution a_i = c * conj(h_i) / r_i with
    r_i = |h_i|^2 v_i + s / p, normalized so the powers sum to p.
    """
    if p <= 0:
        raise ValueError("sum power must be positive")
    h = np.asarray(h, dtype=complex)
    if not np.any(h):
        raise DegenerateDetectorError("all-zero channel: no gain choice carries signal")
    r = np.abs(h) ** 2 * scenario.meas_noise_vars + scenario.fc_noise_var / p
    direction = np.conj(h) / r
    scale = np.sqrt(p / np.sum(np.abs(h) ** 2 / r**2))
    return GainVector.from_gains(scale * direction)


def single_antenna_best_ratio(scenario: Scenario, h: np.ndarray, p: float) -> float:
    """SNR achieved by :func:`single_antenna_optimal_gains`: signal_var * h^H R^{-1} h."""
    h = np.asarray(h, dtype=complex)
    r = np.abs(h) ** 2 * scenario.meas_noise_vars + scenario.fc_noise_var / p
    return float(scenario.signal_var * np.sum(np.abs(h) ** 2 / r))


def single_antenna_zeta(scenario: Scenario, h: np.ndarray, m: int) -> float:
    """Per-realization SNR cap for the scalar receiver on the 1/M power schedule.

    Equals (signal_var / 2M) * sum_i d_i**alpha / v_i * ||h||^2; shrinks to zero
    in probability as the antenna budget grows, so the scalar receiver's
    detection probability collapses to the false-alarm rate in that regime.
    """
    h = np.asarray(h, dtype=complex)
    d_alpha = scenario.distances**scenario.path_loss_exp
    coeff = scenario.signal_var * np.sum(d_alpha / scenario.meas_noise_vars) / (2.0 * m)
    return float(coeff * np.sum(np.abs(h) ** 2))


def np_pd_bound(scenario: Scenario, regime: str, target_pfa: float) -> float:
    """Detection-probability bounds for the power-limit regimes.

    'low_power': lower bound reached on a 1/M power schedule, from the
    one-third SNR floor.  'high_power': upper bound shared by scalar and
    multi-antenna receivers as the power budget grows without limit.
    """
    if not 0.0 < target_pfa < 1.0:
        raise ValueError("target_pfa must lie in (0, 1)")
    info = float(np.sum(1.0 / scenario.meas_noise_vars))
    if regime == "low_power":
        g = info / 3.0
    elif regime == "high_power":
        g = info
    else:
        raise ValueError("regime must be 'low_power' or 'high_power'")
    return float(np.exp(np.log(target_pfa) / (1.0 + scenario.signal_var * g)))
