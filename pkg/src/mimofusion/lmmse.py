"""Linear minimum-MSE estimation of the common signal.

The estimator shares the whitened steering vector with the likelihood-ratio
detector, so the heavy N x N solve is done once per (channel, gains) pair.
Its error variance is 1 / (1/signal_var + g), with g the same detection SNR
the detector maximizes: the two optimization problems coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .np_detector import NpTestContext, SingleAntennaContext
from .scenario import Observation, Scenario


@dataclass(frozen=True)
class LmmseResult:
    estimate: complex
    theoretical_mse: float


def mse_closed_form(snr: float, signal_var: float) -> float:
    """Error variance 1 / (1/signal_var + snr); equals the prior variance at snr 0."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return 1.0 / (1.0 / signal_var + snr)


def lmmse_estimate(ctx: NpTestContext, y: Observation | np.ndarray) -> LmmseResult:
    """Estimate the signal from one received vector using the cached context."""
    vec = y.y if isinstance(y, Observation) else np.asarray(y)
    sv = ctx.scenario.signal_var
    num = np.vdot(ctx.whitened_steering, vec)
    est = num / (1.0 / sv + ctx.snr)
    return LmmseResult(complex(est), mse_closed_form(ctx.snr, sv))


def lmmse_estimate_single(ctx: SingleAntennaContext, y: complex, signal_var: float) -> LmmseResult:
    """Scalar-receiver estimator; the effective SNR is sigma_s_sq / (signal_var * sigma_w_sq)."""
    coherent = complex(np.sum(ctx.gains.gains * np.asarray(ctx.h)))
    g = ctx.sigma_s_sq / (signal_var * ctx.sigma_w_sq)
    est = (np.conj(coherent) / ctx.sigma_w_sq) * y / (1.0 / signal_var + g)
    return LmmseResult(complex(est), mse_closed_form(g, signal_var))


def lmmse_mse_bound(scenario: Scenario, regime: str) -> float:
    """MSE bounds for the power-limit regimes.

    'low_power': upper bound on the achievable MSE under a 1/M power schedule.
    'high_power': the floor both scalar and multi-antenna receivers approach
    from above as the power budget grows.
    """
    info = float(np.sum(1.0 / scenario.meas_noise_vars))
    if regime == "low_power":
        return mse_closed_form(info / 3.0, scenario.signal_var)
    if regime == "high_power":
        return mse_closed_form(info, scenario.signal_var)
    raise ValueError("regime must be 'low_power' or 'high_power'")
