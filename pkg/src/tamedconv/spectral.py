"""Diagonal spectral operator, semigroup, fractional norms and projections.

The linear part of the model is a negative-definite operator that is
diagonal in a fixed orthonormal basis.  States are represented by their
coefficient vectors against that basis, so every operation here is a
weighted elementwise computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

StateVector = np.ndarray


@dataclass(frozen=True)
class SpectralOperator:
    """Negative-definite diagonal operator given by its eigenvalue sequence.

    Eigenvalues are stored nonincreasing (so the least negative one comes
    first); this makes the tail infimum over dropped modes equal to the
    magnitude of the first dropped eigenvalue.
    """

    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.ndim != 1 or ev.size == 0:
            raise ValueError("eigenvalues must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(ev)):
            raise ValueError("eigenvalues must be finite")
        if np.any(ev >= 0.0):
            raise ValueError("all eigenvalues must be strictly negative")
        if np.any(np.diff(ev) > 0.0):
            raise ValueError("eigenvalues must be nonincreasing")
        ev.flags.writeable = False
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def sup_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @classmethod
    def dirichlet_laplacian(cls, n_modes: int) -> "SpectralOperator":
        """Laplacian eigenvalues -pi^2 n^2 on the unit interval."""
        n = np.arange(1, n_modes + 1, dtype=float)
        return cls(-(np.pi ** 2) * n ** 2)

    def semigroup_factors(self, t: float) -> np.ndarray:
        """Per-mode factors e^{lambda_n t} for t >= 0."""
        if t < 0.0:
            raise ValueError(f"negative time t={t}")
        return np.exp(self.eigenvalues * t)

    def fractional_weights(self, r: float) -> np.ndarray:
        """Per-mode weights |lambda_n|^r."""
        return np.abs(self.eigenvalues) ** r


@dataclass(frozen=True)
class ProjectionIndex:
    """A finite set of kept basis mode indices (1-based)."""

    mode_set: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        modes = frozenset(int(m) for m in self.mode_set)
        if any(m < 1 for m in modes):
            raise ValueError("mode indices are 1-based and must be >= 1")
        object.__setattr__(self, "mode_set", modes)

    @classmethod
    def prefix(cls, n: int) -> "ProjectionIndex":
        return cls(frozenset(range(1, n + 1)))

    @classmethod
    def empty(cls) -> "ProjectionIndex":
        return cls(frozenset())

    def mask(self, n_modes: int) -> np.ndarray:
        """Boolean keep-mask of length n_modes."""
        m = np.zeros(n_modes, dtype=bool)
        for i in self.mode_set:
            if i <= n_modes:
                m[i - 1] = True
        return m

    def is_prefix(self, n_modes: int) -> bool:
        m = self.mask(n_modes)
        k = int(m.sum())
        return bool(np.all(m[:k])) and len(self.mode_set) == k


def semigroup_apply(op: SpectralOperator, t: float, x: StateVector) -> StateVector:
    """Apply e^{tA} coefficientwise; contraction for t >= 0."""
    return op.semigroup_factors(t) * np.asarray(x, dtype=float)


def fractional_norm(op: SpectralOperator, r: float, x: StateVector) -> float:
    """Interpolation-space norm (sum |lambda_n|^{2r} x_n^2)^{1/2}."""
    w = op.fractional_weights(r)
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.sum((w * x) ** 2)))


def project(idx: ProjectionIndex, x: StateVector) -> StateVector:
    """Zero all coefficients outside the index set."""
    x = np.asarray(x, dtype=float)
    return np.where(idx.mask(x.shape[-1]), x, 0.0)


def neg_power_operator_norm(op: SpectralOperator, r: float) -> float:
    """Operator norm of (-A)^r for r <= 0.

    For a diagonal operator this is sup_n |lambda_n|^r, attained at the
    least negative eigenvalue.
    """
    if r > 0.0:
        raise ValueError("(-A)^r is unbounded for r > 0")
    return float(abs(op.sup_eigenvalue) ** r)
