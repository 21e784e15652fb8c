"""Closed-form evaluators for the theoretical constants.

Each evaluator transcribes the final display of the corresponding
estimate, with the moment order raised to max{p, 2} and the smoothness
parameter lifted to max{gamma, beta} where the fully discrete statements
do so.  Out-of-range parameters raise, except for the exponential-moment
bound where +inf is the honest value past the admissible range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseOperator, hs_norm
from .spectral import ProjectionIndex, SpectralOperator, neg_power_operator_norm


class ParameterRangeError(ValueError):
    """A regularity/rate parameter violates the admissible region."""


@dataclass(frozen=True)
class BoundInputs:
    """Parameter block shared by the bound evaluators."""

    p: float
    beta: float
    gamma: float
    eta: float
    rho: float
    T: float
    C_chi: float
    hs_beta: float
    hs_zero: float
    sup_lambda: float
    mesh: float

    def __post_init__(self):
        if self.p < 1:
            raise ParameterRangeError("p must be >= 1")
        if self.beta < 0:
            raise ParameterRangeError("beta must be >= 0")
        if not 0 <= self.gamma < 0.5 + self.beta:
            raise ParameterRangeError(
                f"gamma={self.gamma} outside [0, 1/2 + beta)")
        if not 0 <= self.eta < 0.5 + self.beta - self.gamma:
            raise ParameterRangeError(
                f"eta={self.eta} outside [0, 1/2 + beta - gamma)")
        if not (0 <= self.rho < 0.5 + self.beta - self.gamma and self.rho < 0.5):
            raise ParameterRangeError(
                f"rho={self.rho} outside [0, 1/2 + beta - gamma) cap [0, 1/2)")
        if self.sup_lambda >= 0:
            raise ParameterRangeError("sup eigenvalue must be negative")
        if self.T <= 0:
            raise ParameterRangeError("horizon T must be positive")
        if not 0 < self.mesh <= self.T:
            raise ParameterRangeError("mesh must lie in (0, T]")
        if self.C_chi < 1:
            raise ParameterRangeError("truncation-defect constant must be >= 1")
        if self.hs_beta < 0 or self.hs_zero < 0:
            raise ParameterRangeError("HS norms must be nonnegative")


def _neg_power(sup_lambda: float, r: float) -> float:
    # |sup lambda|^r with r <= 0: diagonal operator norm of (-A)^r
    return abs(sup_lambda) ** r


def moment_bound(inputs: BoundInputs) -> float:
    """Uniform bound on sup_t (E|O_t|^p in the gamma-smoothness norm)^{1/p}.

    The semi-discrete estimate requires beta <= gamma; the fully discrete
    statement lifts gamma to max{gamma, beta} and the remaining smoothing
    factor |sup lambda|^{min{0, gamma - beta}} carries the norm back down.
    """
    b = inputs
    p = max(b.p, 2.0)
    g = max(b.gamma, b.beta)
    lift = _neg_power(b.sup_lambda, min(0.0, b.gamma - b.beta))
    core = (3.0 * p * b.hs_beta * max(b.T, 1.0) ** 1.5 / (1.0 + 2.0 * b.beta - 2.0 * g)
            * (1.0 + 4.0 * p ** 2 * b.hs_beta ** 2
               * _neg_power(b.sup_lambda, -2.0 * b.beta)))
    return lift * core


def holder_constant(inputs: BoundInputs) -> float:
    """Constant K with (E|O_t - O_s|^p)^{1/p} <= K (t-s)^rho, any grid."""
    b = inputs
    p = max(b.p, 2.0)
    denom = 1.0 + 2.0 * (b.beta - max(b.gamma, b.beta) - b.rho)
    if denom <= 0:
        raise ParameterRangeError("rho too large for the Holder estimate")
    return (3.0 * p ** 3 * b.hs_beta * max(b.T, 1.0) ** 2
            * max(_neg_power(b.sup_lambda, -2.0 * b.beta), 1.0)
            * (1.0 + 8.0 * b.hs_beta ** 2)
            * _neg_power(b.sup_lambda, min(0.0, b.gamma - b.beta))
            / math.sqrt(denom))


def error_bound(inputs: BoundInputs, tail_hs: float) -> float:
    """Strong-error bound: spectral-tail term plus mesh^rho term.

    tail_hs is the HS norm of B - P_I B P_J measured in the
    (beta - eta)-smoothness space.
    """
    b = inputs
    if tail_hs < 0:
        raise ValueError("tail_hs must be nonnegative")
    p = max(b.p, 2.0)
    d1 = 2.0 * (1.0 - 2.0 * max(0.0, b.gamma + b.eta - b.beta))
    d2 = 1.0 - 2.0 * b.rho - 2.0 * max(0.0, b.gamma - b.beta)
    if d1 <= 0 or d2 <= 0:
        raise ParameterRangeError("parameters leave the admissible region")
    first = (p * max(b.T, 1.0) ** (0.5 + b.beta) / math.sqrt(d1)
             * _neg_power(b.sup_lambda, min(0.0, b.gamma + b.eta - b.beta))
             * tail_hs)
    second = (8.0 * p ** 3 * b.C_chi * max(b.T, 1.0) ** (1.5 + b.beta)
              / math.sqrt(d2)
              * b.hs_beta
              * _neg_power(b.sup_lambda, min(0.0, b.gamma - b.beta))
              * (1.0 + _neg_power(b.sup_lambda, -2.0 * b.beta) * b.hs_beta ** 2)
              * b.mesh ** b.rho)
    return first + second


def exp_moment_eps_max(hs_zero: float, T: float) -> float:
    """Upper end of the admissible exponential-moment parameter range."""
    return 1.0 / (8.0 * max(hs_zero, 1.0) ** 2 * max(T, 1.0)) ** 2


def exp_moment_bound(eps: float, hs_zero: float, T: float) -> float:
    """Bound on E[exp(eps |O_t|^2)]; +inf outside the admissible range."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps >= exp_moment_eps_max(hs_zero, T):
        return math.inf
    scale = (8.0 * hs_zero * max(hs_zero, 1.0) * max(T, 1.0)) ** 4
    return 2.0 / (1.0 - eps ** 2 * scale)


def spectral_tail_hs(op: SpectralOperator, B: NoiseOperator,
                     I: ProjectionIndex, J: ProjectionIndex, r: float) -> float:
    """HS norm of the dropped part B - P_I B P_J in the r-smoothness space."""
    n = op.n_modes
    k = B.n_noise_modes
    kept = np.outer(I.mask(n), J.mask(k))
    w = op.fractional_weights(r)[:, None]
    dropped = np.where(kept, 0.0, B.coeffs)
    return float(np.sqrt(np.sum((w * dropped) ** 2)))


def spectral_tail_bound(op: SpectralOperator, B: NoiseOperator, n_kept: int,
                        eta: float) -> float:
    """|lambda_{N+1}|^{-eta} times the HS norm of B in the beta space.

    Valid comparison target for spectral_tail_hs with a prefix index set
    of n_kept modes, a full noise-side projection and r = beta - eta.
    """
    if not 0 <= n_kept < op.n_modes:
        raise ValueError("n_kept must leave at least one dropped mode")
    lam_next = abs(float(op.eigenvalues[n_kept]))
    return lam_next ** (-eta) * hs_norm(B, op, B.beta)
