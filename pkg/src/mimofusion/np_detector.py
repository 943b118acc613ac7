"""Likelihood-ratio detector for the coherent amplify-and-forward network.

The optimal test statistic is sigma_theta^2 |a^H H^H C_w^{-1} y|^2, where
C_w = H D V D^H H^H + sigma_n^2 I is the noise covariance at the receiver.
C_w^{-1} is always applied through the matrix inversion lemma with an N x N
solve (O(M N^2 + N^3)); the M x M covariance is never formed.  Closed-form
detection and false-alarm probabilities follow from the statistic being a
scaled chi-square variable with two degrees of freedom under both hypotheses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelRealization, GainVector, Observation, Scenario


class NumericalDegeneracyError(RuntimeError):
    """The reduced N x N system is singular (only possible without receiver noise)."""


class DegenerateDetectorError(ValueError):
    """The detector carries no signal information (zero effective signal power)."""


def _support(gains: GainVector, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Indices with nonzero forwarded-noise power, and those powers e_i = |a_i|^2 v_i."""
    e = gains.magnitudes_sq * scenario.meas_noise_vars
    return e > 0, e


def apply_whitened(
    gains: GainVector,
    channel: ChannelRealization,
    scenario: Scenario,
    vecs: np.ndarray,
) -> np.ndarray:
    """Apply C_w^{-1} to one or more M-vectors via the low-rank update identity.

    C_w^{-1} = (1/s) (I - H_s K^{-1} H_s^H) with K = G_ss + s E_s^{-1}, where s is
    the receiver noise variance, E = diag(|a_i|^2 v_i) and the subscript keeps
    only sensors with nonzero forwarded noise.
    """
    s = scenario.fc_noise_var
    sup, e = _support(gains, scenario)
    if not sup.any():
        return vecs / s
    hs = channel.h_matrix[:, sup]
    k = channel.gram[np.ix_(sup, sup)] + np.diag(s / e[sup])
    try:
        z = np.linalg.solve(k, hs.conj().T @ vecs)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("reduced noise-covariance system is singular") from exc
    return (vecs - hs @ z) / s


def snr_exact(gains: GainVector, channel: ChannelRealization, scenario: Scenario) -> float:
    """Exact detection SNR g(a) = a^H H^H C_w^{-1} H a for one channel draw.

    Evaluated entirely from the cached N x N Gram matrix.
    """
    s = scenario.fc_noise_var
    sup, e = _support(gains, scenario)
    a = gains.gains
    quad = float(np.real(np.vdot(a, channel.gram @ a)))
    if not sup.any():
        return max(quad / s, 0.0)
    u = (channel.gram @ a)[sup]
    k = channel.gram[np.ix_(sup, sup)] + np.diag(s / e[sup])
    try:
        corr = float(np.real(np.vdot(u, np.linalg.solve(k, u))))
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("reduced noise-covariance system is singular") from exc
    return max((quad - corr) / s, 0.0)


def snr_asymptotic(gains: GainVector, scenario: Scenario, m: int) -> float:
    """Large-M limit of the detection SNR; depends on gains only through |a_i|^2."""
    return asymptotic_snr_from_power(gains.magnitudes_sq, scenario, m)


def asymptotic_snr_from_power(x: np.ndarray, scenario: Scenario, m: int) -> float:
    """Large-M SNR sum_i M x_i / (s d_i^alpha + v_i M x_i) for powers x_i = |a_i|^2."""
    if m < 1:
        raise ValueError("antenna count must be >= 1")
    x = np.asarray(x, dtype=float)
    d_alpha = scenario.distances**scenario.path_loss_exp
    num = m * x
    den = scenario.fc_noise_var * d_alpha + scenario.meas_noise_vars * num
    return float(np.sum(np.divide(num, den, out=np.zeros_like(num), where=den > 0)))


def threshold_for_pfa(snr: float, signal_var: float, target_pfa: float) -> float:
    """Threshold achieving the requested false-alarm probability.

    Under H0 the statistic is exponential with mean signal_var * snr, so the
    threshold is -signal_var * snr * ln(target_pfa).
    """
    if not 0.0 < target_pfa < 1.0:
        raise ValueError("target_pfa must lie in (0, 1)")
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return float(-signal_var * snr * np.log(target_pfa))


def pd_closed_form(snr: float, signal_var: float, target_pfa: float) -> float:
    """Detection probability at the false-alarm-calibrated threshold.

    Equal to target_pfa ** (1 / (1 + signal_var * snr)), evaluated in log space
    so extreme targets or SNRs do not underflow.
    """
    if not 0.0 < target_pfa < 1.0:
        raise ValueError("target_pfa must lie in (0, 1)")
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return float(np.exp(np.log(target_pfa) / (1.0 + signal_var * snr)))


@dataclass(frozen=True, eq=False)
class NpTestContext:
    """Cached quantities for repeated evaluation of the likelihood-ratio statistic.

    whitened_steering is w = C_w^{-1} H a, so each statistic costs one inner
    product.  threshold is None until a false-alarm target is supplied.
    """

    gains: GainVector
    channel: ChannelRealization
    scenario: Scenario
    whitened_steering: np.ndarray
    snr: float
    threshold: float | None = None

    @classmethod
    def build(
        cls,
        gains: GainVector,
        channel: ChannelRealization,
        scenario: Scenario,
        target_pfa: float | None = None,
    ) -> "NpTestContext":
        b = channel.h_matrix @ gains.gains
        w = apply_whitened(gains, channel, scenario, b)
        g = snr_exact(gains, channel, scenario)
        thr = None
        if target_pfa is not None:
            thr = threshold_for_pfa(g, scenario.signal_var, target_pfa)
        return cls(gains, channel, scenario, w, g, thr)


def np_statistic(ctx: NpTestContext, y: Observation | np.ndarray) -> float:
    """Evaluate sigma_theta^2 |a^H H^H C_w^{-1} y|^2 for one received vector."""
    vec = y.y if isinstance(y, Observation) else np.asarray(y)
    return float(ctx.scenario.signal_var * np.abs(np.vdot(ctx.whitened_steering, vec)) ** 2)


@dataclass(frozen=True, eq=False)
class SingleAntennaContext:
    """Scalar-receiver specialization: signal power, noise power, and threshold.

    sigma_s_sq = signal_var * |sum_i a_i h_i|^2 and
    sigma_w_sq = sum_i |a_i h_i|^2 v_i + fc_noise_var.
    """

    gains: GainVector
    h: np.ndarray
    sigma_s_sq: float
    sigma_w_sq: float
    threshold: float | None = None

    @classmethod
    def build(
        cls,
        gains: GainVector,
        h: np.ndarray,
        scenario: Scenario,
        target_pfa: float | None = None,
    ) -> "SingleAntennaContext":
        h = np.asarray(h, dtype=complex)
        coherent = complex(np.sum(gains.gains * h))
        sig = float(scenario.signal_var * abs(coherent) ** 2)
        noise = float(
            np.sum(gains.magnitudes_sq * np.abs(h) ** 2 * scenario.meas_noise_vars)
            + scenario.fc_noise_var
        )
        thr = None
        if target_pfa is not None:
            thr = single_antenna_threshold_for_pfa(noise, target_pfa)
        return cls(gains, h, sig, noise, thr)


def single_antenna_threshold_for_pfa(sigma_w_sq: float, target_pfa: float) -> float:
    """|y|^2 is exponential with mean sigma_w_sq under H0; invert its tail."""
    if not 0.0 < target_pfa < 1.0:
        raise ValueError("target_pfa must lie in (0, 1)")
    return float(-sigma_w_sq * np.log(target_pfa))


def single_antenna_statistic(ctx: SingleAntennaContext, y: complex) -> bool:
    """Decide the signal-present hypothesis from a scalar received sample."""
    if ctx.sigma_s_sq <= 0:
        raise DegenerateDetectorError("zero coherent signal power: decisions are uninformative")
    if ctx.threshold is None:
        raise ValueError("context has no threshold; build it with a target_pfa")
    return bool(abs(y) ** 2 > ctx.threshold)


def single_antenna_pd(ctx: SingleAntennaContext) -> float:
    """Closed-form detection probability exp(-thr / (sigma_s_sq + sigma_w_sq))."""
    if ctx.threshold is None:
        raise ValueError("context has no threshold; build it with a target_pfa")
    return float(np.exp(-ctx.threshold / (ctx.sigma_s_sq + ctx.sigma_w_sq)))


def single_antenna_pfa(ctx: SingleAntennaContext) -> float:
    """Closed-form false-alarm probability exp(-thr / sigma_w_sq)."""
    if ctx.threshold is None:
        raise ValueError("context has no threshold; build it with a target_pfa")
    return float(np.exp(-ctx.threshold / ctx.sigma_w_sq))
