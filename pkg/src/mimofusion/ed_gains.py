"""Transmit-power allocation maximizing the energy detector's deflection.

The large-M deflection is a ratio of quadratics in the per-sensor powers.
Maximizing its tight upper bound reduces to a linear objective under one
convex quadratic constraint plus nonnegativity: minimize -x.d subject to
x^T Bt x <= 1, x >= 0, with Bt = B + (s^2 / (M P^2)) 11^T, followed by a
rescale onto the power budget.  Bt is diagonal plus rank one, so every solve
in the active-set loop is O(N) through the rank-one update identity; a
projected-gradient fallback covers the (unobserved) case where the active-set
certificate fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy_detector import _deflection_vectors
from .scenario import GainVector, Scenario


class SolverError(RuntimeError):
    """The allocation solver failed to reach its optimality certificate."""


@dataclass(frozen=True, eq=False)
class EdAllocationProblem:
    """Data of the deflection allocation problem for one (scenario, M, P).

    b_diag holds the diagonal of B and rank1_coeff the coefficient of the
    all-ones outer product, so the regularized matrix is never materialized.
    variant 'modified_deflection' swaps in the signal-inflated B and b.
    """

    d_vec: np.ndarray
    b_diag: np.ndarray
    b_vec: np.ndarray
    rank1_coeff: float
    p: float
    variant: str
    m_antennas: int
    signal_var: float
    fc_noise_var: float

    @classmethod
    def from_scenario(
        cls, scenario: Scenario, m: int, p: float, variant: str = "deflection"
    ) -> "EdAllocationProblem":
        if p <= 0:
            raise ValueError("sum power must be positive")
        if m < 1:
            raise ValueError("antenna count must be >= 1")
        d_vec, b_diag, b_vec = _deflection_vectors(scenario, variant)
        coeff = scenario.fc_noise_var**2 / (m * p**2)
        return cls(
            d_vec, b_diag, b_vec, coeff, float(p), variant, m,
            scenario.signal_var, scenario.fc_noise_var,
        )

    @property
    def n_sensors(self) -> int:
        return self.d_vec.size

    @property
    def b_tilde(self) -> np.ndarray:
        n = self.n_sensors
        return np.diag(self.b_diag) + self.rank1_coeff * np.ones((n, n))

    def objective(self, x: np.ndarray, include_cross_term: bool = True) -> float:
        """Deflection value of an allocation under this problem's variant."""
        x = np.asarray(x, dtype=float)
        s = self.fc_noise_var
        num = self.signal_var**2 * float(x @ self.d_vec) ** 2
        den = float(x @ (self.b_diag * x)) + s**2 / self.m_antennas
        if include_cross_term:
            den += (2.0 * s / self.m_antennas) * float(self.b_vec @ x)
        return num / den


@dataclass(frozen=True, eq=False)
class QclpSolution:
    """Allocation on the power budget plus its optimality certificate.

    x_unit is the solution on the unit quadratic constraint, where the
    certificate d - 2 nu Bt x + mu = 0 (mu >= 0, mu_i x_i = 0, nu > 0) holds.
    deflection carries the full objective and bound_deflection the simplified
    one actually maximized; their gap closes as M grows.
    """

    x: np.ndarray
    x_unit: np.ndarray
    nu: float
    mu: np.ndarray
    iterations: int
    deflection: float
    bound_deflection: float

    @property
    def gains(self) -> GainVector:
        return GainVector.from_magnitudes_sq(self.x)


def _solve_diag_rank1(b_diag: np.ndarray, coeff: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (diag(b) + coeff * 11^T) y = rhs in O(N)."""
    base = rhs / b_diag
    inv_diag_sum = np.sum(1.0 / b_diag)
    correction = coeff * np.sum(base) / (1.0 + coeff * inv_diag_sum)
    return base - correction / b_diag


def _certificate(problem: EdAllocationProblem, x_unit: np.ndarray) -> tuple[float, np.ndarray]:
    bt_x = problem.b_diag * x_unit + problem.rank1_coeff * x_unit.sum()
    nu = 0.5 * float(problem.d_vec @ x_unit)
    mu = 2.0 * nu * bt_x - problem.d_vec
    return nu, mu


def certificate_residual(problem: EdAllocationProblem, x_unit: np.ndarray) -> float:
    """Worst violation (relative to max d_i) of the optimality conditions at x_unit."""
    nu, mu = _certificate(problem, x_unit)
    scale = float(np.max(problem.d_vec))
    support = x_unit > 1e-12 * float(np.max(x_unit))
    stationarity = float(np.max(np.abs(mu[support]))) if support.any() else np.inf
    dual_feas = float(max(0.0, -np.min(mu[~support]))) if (~support).any() else 0.0
    quad = float(problem.b_diag @ x_unit**2 + problem.rank1_coeff * x_unit.sum() ** 2)
    complementarity = float(np.max(np.abs(mu * x_unit))) if (~support).any() else 0.0
    return max(stationarity, dual_feas, complementarity, abs(quad - 1.0) * scale) / scale


def _projected_gradient(problem: EdAllocationProblem, max_iter: int = 20000) -> np.ndarray:
    d, b = problem.d_vec, problem.b_diag
    c = problem.rank1_coeff

    def quad(x):
        return float(x @ (b * x)) + c * float(x.sum()) ** 2

    x = d / b
    x /= np.sqrt(quad(x))
    value = float(x @ d) ** 2
    for _ in range(max_iter):
        bt_x = b * x + c * x.sum()
        grad = 2.0 * float(x @ d) * d - 2.0 * value * bt_x
        step = 1.0 / max(float(np.max(b)) + c * x.size, 1e-300)
        candidate = np.maximum(x + step * grad, 0.0)
        candidate /= np.sqrt(quad(candidate))
        new_value = float(candidate @ d) ** 2
        if new_value <= value * (1.0 + 1e-15):
            break
        x, value = candidate, new_value
    return x


def solve_qclp(problem: EdAllocationProblem) -> QclpSolution:
    """Maximize the large-M deflection bound, then rescale onto the power budget.

    Active-set scheme: solve the unconstrained direction through the rank-one
    update, clamp any negative components to zero, and re-solve on the shrunken
    free set.  The weighted mean of the objective coefficients over the free
    set always leaves the largest coefficient positive, so the loop terminates
    in at most N-1 clamps.
    """
    n = problem.n_sensors
    free = np.ones(n, dtype=bool)
    y = np.zeros(n)
    iterations = 0
    for iterations in range(1, n + 1):
        y_free = _solve_diag_rank1(problem.b_diag[free], problem.rank1_coeff, problem.d_vec[free])
        y = np.zeros(n)
        y[free] = y_free
        if np.all(y_free >= 0):
            break
        clamped = np.zeros(n, dtype=bool)
        clamped[free] = y_free < 0
        free &= ~clamped

    x_unit = y / np.sqrt(float(y @ problem.d_vec))
    nu, mu = _certificate(problem, x_unit)
    mu = np.where(free, 0.0, mu)
    tol = 1e-9 * float(np.max(problem.d_vec))
    if np.any(x_unit < 0) or float(np.min(mu)) < -tol:
        x_unit = _projected_gradient(problem)
        resid = certificate_residual(problem, x_unit)
        if resid > 1e-8:
            raise SolverError(f"allocation certificate residual {resid:.3e} exceeds 1e-8")
        nu, mu = _certificate(problem, x_unit)
        mu = np.maximum(mu, 0.0)

    x = x_unit * (problem.p / float(x_unit.sum()))
    return QclpSolution(
        x=x,
        x_unit=x_unit,
        nu=nu,
        mu=mu,
        iterations=iterations,
        deflection=problem.objective(x, include_cross_term=True),
        bound_deflection=problem.objective(x, include_cross_term=False),
    )


def closed_form_high_snr(scenario: Scenario, p: float) -> GainVector:
    """Large-budget allocation: power proportional to d_i**alpha / v_i^2.

    After normalizing for distance, sensors with the lowest measurement noise
    carry the most power.
    """
    if p <= 0:
        raise ValueError("sum power must be positive")
    d_alpha = scenario.distances**scenario.path_loss_exp
    weights = d_alpha / scenario.meas_noise_vars**2
    return GainVector.from_magnitudes_sq(p * weights / weights.sum())


def closed_form_low_snr(scenario: Scenario, p: float) -> GainVector:
    """Small-budget allocation: all power on the closest sensor.

    Ties break to the lowest sensor index.
    """
    if p <= 0:
        raise ValueError("sum power must be positive")
    x = np.zeros(scenario.n_sensors)
    x[int(np.argmin(scenario.distances))] = p
    return GainVector.from_magnitudes_sq(x)
