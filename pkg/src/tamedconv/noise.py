"""Noise operator, exact increment covariances and coupled Gaussian sampling.

The diffusion operator is a finite coefficient matrix mapping the
truncated noise-space basis into the truncated state-space basis.  Because
the generator is diagonal, the joint law of a convolution increment and
the underlying Wiener increment is Gaussian with closed-form covariance
blocks; sampling that law exactly removes any reference-discretization
bias from error measurements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralOperator, StateVector


class CovarianceBuildError(RuntimeError):
    """Raised when the assembled increment covariance is not factorizable."""


@dataclass(frozen=True)
class NoiseOperator:
    """Coefficient matrix B_{nj} with a declared smoothness class beta."""

    coeffs: np.ndarray
    beta: float = 0.0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if not np.all(np.isfinite(c)):
            raise ValueError("noise coefficients must be finite")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def n_state_modes(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_noise_modes(self) -> int:
        return self.coeffs.shape[1]

    @property
    def adjoint(self) -> np.ndarray:
        return self.coeffs.T

    @classmethod
    def diagonal(cls, values, beta: float = 0.0) -> "NoiseOperator":
        return cls(np.diag(np.asarray(values, dtype=float)), beta)

    @classmethod
    def power_law(cls, n_modes: int, c: float, q: float, beta: float = 0.0) -> "NoiseOperator":
        """Diagonal rule b_n = c * n^{-q}."""
        n = np.arange(1, n_modes + 1, dtype=float)
        return cls.diagonal(c * n ** (-q), beta)

    def projected(self, state_mask: np.ndarray, noise_mask: np.ndarray) -> "NoiseOperator":
        """Coefficients of P_I B P_J (rows/columns outside the masks zeroed)."""
        c = np.where(np.outer(state_mask, noise_mask), self.coeffs, 0.0)
        return NoiseOperator(c, self.beta)

    def apply(self, u: np.ndarray) -> StateVector:
        """B u for U-coefficient vectors u (batched on the last axis)."""
        return u @ self.coeffs.T


def hs_norm(B: NoiseOperator, op: SpectralOperator, r: float) -> float:
    """Hilbert-Schmidt norm of B into the smoothness-r space."""
    w = op.fractional_weights(r)[:, None]
    return float(np.sqrt(np.sum((w * B.coeffs) ** 2)))


def _damped_step_integral(x: np.ndarray, h: float) -> np.ndarray:
    """int_0^h e^{x s} ds = (e^{x h} - 1) / x, stable near x = 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    tiny = np.abs(x * h) < 1e-12
    out[~tiny] = np.expm1(x[~tiny] * h) / x[~tiny]
    out[tiny] = h * (1.0 + x[tiny] * h / 2.0)
    return out


@dataclass(frozen=True)
class IncrementCovariance:
    """Joint covariance of (convolution increment Y, Wiener increment dW)."""

    h: float
    cov_yy: np.ndarray
    cov_yw: np.ndarray
    cov_ww: np.ndarray
    cholesky_factor: np.ndarray
    active: np.ndarray  # rows/columns with nonzero variance

    @property
    def n_state_modes(self) -> int:
        return self.cov_yy.shape[0]

    @property
    def n_noise_modes(self) -> int:
        return self.cov_ww.shape[0]


def increment_covariance(op: SpectralOperator, B: NoiseOperator, h: float) -> IncrementCovariance:
    """Assemble and factorize the exact joint covariance over a step of size h.

    With Y = int_t^{t+h} e^{(t+h-s)A} B dW_s and dW the noise-coefficient
    increments:

        Cov(Y_n, Y_m)  = (B B^T)_{nm} (e^{(l_n+l_m)h} - 1)/(l_n + l_m)
        Cov(Y_n, dW_j) = B_{nj} (e^{l_n h} - 1)/l_n
        Cov(dW)        = h Id
    """
    if h <= 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    lam = op.eigenvalues
    n = op.n_modes
    k = B.n_noise_modes
    if B.n_state_modes != n:
        raise ValueError("noise operator rows do not match operator modes")

    pair = lam[:, None] + lam[None, :]
    cov_yy = (B.coeffs @ B.coeffs.T) * _damped_step_integral(pair, h)
    cov_yw = B.coeffs * _damped_step_integral(lam, h)[:, None]
    cov_ww = h * np.eye(k)

    full = np.zeros((n + k, n + k))
    full[:n, :n] = cov_yy
    full[:n, n:] = cov_yw
    full[n:, :n] = cov_yw.T
    full[n:, n:] = cov_ww

    # exactly silent modes (zero rows of B) get zero variance; keep them out
    # of the factorization so they sample as exact zeros
    diag = np.diag(full)
    active = diag > 0.0
    sub = full[np.ix_(active, active)]
    try:
        chol_sub = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(sub) / sub.shape[0]
        try:
            chol_sub = np.linalg.cholesky(sub + jitter * np.eye(sub.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise CovarianceBuildError(
                "increment covariance is not positive semidefinite "
                f"(h={h}, jitter={jitter:.3e})"
            ) from exc
    chol = np.zeros_like(full)
    chol[np.ix_(active, active)] = chol_sub
    return IncrementCovariance(float(h), cov_yy, cov_yw, cov_ww, chol, active)


def sample_coupled_increment(cov: IncrementCovariance, rng: np.random.Generator,
                             size: int | None = None):
    """Draw (Y, dW) jointly Gaussian with the stored covariance.

    With size=None a single pair of vectors is returned; otherwise arrays
    with a leading replication axis.
    """
    n, k = cov.n_state_modes, cov.n_noise_modes
    shape = (n + k,) if size is None else (size, n + k)
    z = rng.standard_normal(shape)
    draw = z @ cov.cholesky_factor.T
    return draw[..., :n], draw[..., n:]


def brute_force_convolution_oracle(op: SpectralOperator, B: NoiseOperator, h: float,
                                   substeps: int, rng: np.random.Generator,
                                   size: int | None = None):
    """Left-point quadrature reference for the convolution increment.

    Y ~ sum_k e^{(h - s_k) A} B delta W_k over `substeps` subintervals;
    strong error against the exact law is O(substeps^{-1/2}).  Test oracle
    only - never used by the production sampler.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    n, k = B.n_state_modes, B.n_noise_modes
    dt = h / substeps
    reps = 1 if size is None else size
    y = np.zeros((reps, n))
    dw_total = np.zeros((reps, k))
    for j in range(substeps):
        dw = np.sqrt(dt) * rng.standard_normal((reps, k))
        s = j * dt
        damp = op.semigroup_factors(h - s)
        y += damp * B.apply(dw)
        dw_total += dw
    if size is None:
        return y[0], dw_total[0]
    return y, dw_total
