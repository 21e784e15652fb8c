"""Tamed-truncated exponential Euler stepping, coupled to the exact convolution.

One joint Gaussian draw per step feeds both the scheme (through the
projected, smoothed Wiener increment) and the exact convolution (through
the analytically sampled increment), so the two paths share a single
noise realization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .noise import IncrementCovariance, NoiseOperator, increment_covariance, \
    sample_coupled_increment
from .spectral import ProjectionIndex, SpectralOperator, StateVector
from .taming import ito_drift_batch, psi_batch, psi_prime_apply_batch
from .timegrid import TimeGrid


@dataclass(frozen=True)
class TruncationPolicy:
    """An adapted [0,1]-valued switch multiplying the tamed increment.

    kinds:
      identity        -- constantly 1
      bernoulli       -- per-path 0/1 value drawn once at time 0, P(0) = q
      norm_threshold  -- indicator(|state|_H <= c * M^exponent)
    """

    kind: str = "identity"
    q: float = 0.0
    c: float = 1.0
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "bernoulli", "norm_threshold"):
            raise ValueError(f"unknown truncation policy kind {self.kind!r}")
        if self.kind == "bernoulli" and not 0.0 <= self.q <= 1.0:
            raise ValueError("bernoulli drop probability must lie in [0, 1]")

    def init_paths(self, n_paths: int, rng: np.random.Generator) -> Optional[np.ndarray]:
        """Per-path time-0 randomness (bernoulli only)."""
        if self.kind == "bernoulli":
            return (rng.random(n_paths) >= self.q).astype(float)
        return None

    def eval_batch(self, path_values: Optional[np.ndarray], states: np.ndarray,
                   n_steps: int) -> np.ndarray:
        """Chi values for a (paths, modes) state array at the current node."""
        n_paths = states.shape[0]
        if self.kind == "identity":
            return np.ones(n_paths)
        if self.kind == "bernoulli":
            return path_values
        norms = np.sqrt(np.sum(states * states, axis=-1))
        return (norms <= self.c * n_steps ** self.exponent).astype(float)


@dataclass(frozen=True)
class SchemeState:
    """Scheme value at a grid node together with its projection pair."""

    t: float
    O: StateVector
    I: ProjectionIndex
    J: ProjectionIndex


@dataclass(frozen=True)
class CoupledTrajectory:
    """Scheme and exact convolution paths driven by one Wiener realization."""

    grid: TimeGrid
    scheme_path: np.ndarray        # (n_nodes, n_modes)
    exact_path: np.ndarray         # (n_nodes, n_modes)
    chi_values: np.ndarray         # (n_steps,)
    wiener_increments: np.ndarray  # (n_steps, n_noise_modes)


def chi_eval(policy: TruncationPolicy, state: SchemeState, n_steps: int,
             rng: np.random.Generator) -> float:
    """Single-path chi value; bernoulli draws its time-0 value from rng."""
    pv = policy.init_paths(1, rng)
    return float(policy.eval_batch(pv, np.atleast_2d(state.O), n_steps)[0])


def scheme_step(state: SchemeState, h: float, Xinc: StateVector, chi: float,
                op: SpectralOperator) -> SchemeState:
    """One update e^{hA}(O + chi * X/(1+|X|^2)).

    Xinc must already be the smoothed projected increment over the step,
    not a raw Wiener increment.
    """
    if h <= 0.0:
        raise ValueError("step size must be positive")
    Xinc = np.asarray(Xinc, dtype=float)
    tamed = Xinc / (1.0 + np.sum(Xinc * Xinc))
    new = op.semigroup_factors(h) * (np.asarray(state.O, dtype=float) + chi * tamed)
    return SchemeState(state.t + h, new, state.I, state.J)


def iter_coupled_batch(grid: TimeGrid, op: SpectralOperator, B: NoiseOperator,
                       I: ProjectionIndex, J: ProjectionIndex,
                       policy: TruncationPolicy, n_paths: int,
                       rng: np.random.Generator,
                       ) -> Iterator[tuple]:
    """Advance n_paths coupled paths node by node.

    Yields (node_index, t, scheme (R, n), exact (R, n), chi (R,), dW (R, k));
    chi and dW are None at node 0.  The yielded state arrays are reused
    between iterations; consumers must copy anything they keep.
    """
    n = op.n_modes
    k = B.n_noise_modes
    B_proj = B.projected(I.mask(n), J.mask(k))
    covs: dict = {}
    for h in set(grid.step_sizes):
        covs[h] = increment_covariance(op, B, float(h))

    path_values = policy.init_paths(n_paths, rng)
    scheme = np.zeros((n_paths, n))
    exact = np.zeros((n_paths, n))
    yield 0, 0.0, scheme, exact, None, None

    t = 0.0
    for m, h in enumerate(grid.step_sizes):
        hf = float(h)
        chi = policy.eval_batch(path_values, scheme, grid.n_steps)
        Y, dW = sample_coupled_increment(covs[h], rng, size=n_paths)
        X = dW @ B_proj.coeffs.T
        damp = op.semigroup_factors(hf)
        scheme = damp * (scheme + chi[:, None] * psi_batch(X))
        exact = damp * exact + Y
        t += hf
        yield m + 1, t, scheme, exact, chi, dW


def simulate_coupled(grid: TimeGrid, op: SpectralOperator, B: NoiseOperator,
                     I: ProjectionIndex, J: ProjectionIndex,
                     policy: TruncationPolicy,
                     rng: np.random.Generator) -> CoupledTrajectory:
    """Generate one coupled (scheme, exact) trajectory."""
    n_nodes = len(grid.nodes)
    scheme_path = np.zeros((n_nodes, op.n_modes))
    exact_path = np.zeros((n_nodes, op.n_modes))
    chis = np.zeros(grid.n_steps)
    dws = np.zeros((grid.n_steps, B.n_noise_modes))
    for idx, _t, scheme, exact, chi, dw in iter_coupled_batch(
            grid, op, B, I, J, policy, 1, rng):
        scheme_path[idx] = scheme[0]
        exact_path[idx] = exact[0]
        if idx > 0:
            chis[idx - 1] = chi[0]
            dws[idx - 1] = dw[0]
    return CoupledTrajectory(grid, scheme_path, exact_path, chis, dws)


def truncation_defect(policy: TruncationPolicy, grid: TimeGrid, p: float,
                      rho: float, trials: int, rng: np.random.Generator,
                      op: Optional[SpectralOperator] = None,
                      B: Optional[NoiseOperator] = None,
                      I: Optional[ProjectionIndex] = None,
                      J: Optional[ProjectionIndex] = None) -> float:
    """sup over grid nodes of E|chi - 1|^p * M^{p rho}.

    Exact (no sampling) for the identity and bernoulli policies; Monte
    Carlo over `trials` paths for state-dependent policies, which then
    require the simulation context (op, B, I, J).
    """
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    M = grid.n_steps
    if policy.kind == "identity":
        return 0.0
    if policy.kind == "bernoulli":
        # |chi - 1|^p is the drop indicator, so the expectation is exactly q
        return policy.q * M ** (p * rho)
    if op is None or B is None or I is None or J is None:
        raise ValueError("norm-threshold defect needs op, B, I, J")
    worst = 0.0
    for _idx, _t, scheme, _exact, _chi, _dw in iter_coupled_batch(
            grid, op, B, I, J, policy, trials, rng):
        chi = policy.eval_batch(None, scheme, M)
        worst = max(worst, float(np.mean(np.abs(chi - 1.0) ** p)))
    return worst * M ** (p * rho)


def mild_ito_gap(grid: TimeGrid, op: SpectralOperator, B: NoiseOperator,
                 I: ProjectionIndex, J: ProjectionIndex,
                 policy: TruncationPolicy, substeps: int, n_paths: int,
                 rng: np.random.Generator) -> float:
    """Sup-node L2 distance between scheme values and their Ito-form rewrite.

    The rewrite replaces each tamed step increment by a left-point
    discretization (substeps per coarse step, shared noise) of the
    stochastic integral of the diffusion coefficient plus the time
    integral of the drift coefficient, both weighted by the semigroup
    from the step's left node.  The gap decays like substeps^{-1/2}.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    n = op.n_modes
    k = B.n_noise_modes
    B_proj = B.projected(I.mask(n), J.mask(k))
    path_values = policy.init_paths(n_paths, rng)

    scheme = np.zeros((n_paths, n))
    rewrite = np.zeros((n_paths, n))
    worst = 0.0
    for h in grid.step_sizes:
        hf = float(h)
        dt = hf / substeps
        chi = policy.eval_batch(path_values, scheme, grid.n_steps)[:, None]
        w_cum = np.zeros((n_paths, k))
        contrib = np.zeros((n_paths, n))
        for _ in range(substeps):
            x_left = w_cum @ B_proj.coeffs.T
            dw = np.sqrt(dt) * rng.standard_normal((n_paths, k))
            contrib += psi_prime_apply_batch(x_left, dw @ B_proj.coeffs.T)
            contrib += ito_drift_batch(x_left, B_proj) * dt
            w_cum += dw
        damp = op.semigroup_factors(hf)
        x_full = w_cum @ B_proj.coeffs.T
        scheme = damp * (scheme + chi * psi_batch(x_full))
        rewrite = damp * (rewrite + chi * contrib)
        gap2 = float(np.mean(np.sum((scheme - rewrite) ** 2, axis=-1)))
        worst = max(worst, gap2)
    return float(np.sqrt(worst))
