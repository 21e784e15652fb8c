"""The taming map, its derivatives, and the associated Ito coefficients.

All closed forms here are implemented directly; finite differences appear
only as test oracles.
"""

from __future__ import annotations

import numpy as np

from .noise import NoiseOperator
from .spectral import StateVector


def psi(v: StateVector) -> StateVector:
    """v / (1 + |v|^2); output norm never exceeds 1/2."""
    v = np.asarray(v, dtype=float)
    return v / (1.0 + np.sum(v * v))


def psi_prime_apply(z: StateVector, u: StateVector) -> StateVector:
    """First derivative of the taming map applied to a direction u."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    d = 1.0 + np.sum(z * z)
    return u / d - 2.0 * z * np.dot(z, u) / d ** 2


def psi_double_prime_apply(z: StateVector, u: StateVector, v: StateVector) -> StateVector:
    """Second derivative as a symmetric bilinear form in (u, v)."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d = 1.0 + np.sum(z * z)
    zu = np.dot(z, u)
    zv = np.dot(z, v)
    uv = np.dot(u, v)
    return -2.0 * (u * zv + v * zu + z * uv) / d ** 2 + 8.0 * z * zu * zv / d ** 3


def ito_drift(z: StateVector, B: NoiseOperator) -> StateVector:
    """Drift coefficient of the tamed increment viewed as an Ito process.

    Equals one half of the trace of the second derivative against B, i.e.
    (1/2) sum_j psi''(z)(B u_j, B u_j) over the noise basis.
    """
    z = np.asarray(z, dtype=float)
    d = 1.0 + np.sum(z * z)
    bt_z = B.adjoint @ z
    bbt_z = B.coeffs @ bt_z
    hs2 = float(np.sum(B.coeffs ** 2))
    return 4.0 * np.sum(bt_z * bt_z) * z / d ** 3 - (2.0 * bbt_z + hs2 * z) / d ** 2


def ito_diffusion_apply(z: StateVector, B: NoiseOperator, u_dir: int) -> StateVector:
    """Diffusion coefficient in the u_dir-th (1-based) noise direction.

    Definitionally psi'(z)(B u_dir); at z = 0 this is the column of B.
    """
    if not 1 <= u_dir <= B.n_noise_modes:
        raise ValueError(f"noise direction {u_dir} out of range")
    return psi_prime_apply(z, B.coeffs[:, u_dir - 1])


def psi_batch(v: np.ndarray) -> np.ndarray:
    """Taming map applied row-wise to a (paths, modes) array."""
    n2 = np.sum(v * v, axis=-1, keepdims=True)
    return v / (1.0 + n2)


def psi_prime_apply_batch(z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise first derivative for (paths, modes) arrays."""
    d = 1.0 + np.sum(z * z, axis=-1, keepdims=True)
    zu = np.sum(z * u, axis=-1, keepdims=True)
    return u / d - 2.0 * z * zu / d ** 2


def ito_drift_batch(z: np.ndarray, B: NoiseOperator) -> np.ndarray:
    """Row-wise drift coefficient for (paths, modes) arrays."""
    d = 1.0 + np.sum(z * z, axis=-1, keepdims=True)
    bt_z = z @ B.coeffs
    bbt_z = bt_z @ B.coeffs.T
    hs2 = float(np.sum(B.coeffs ** 2))
    nb2 = np.sum(bt_z * bt_z, axis=-1, keepdims=True)
    return 4.0 * nb2 * z / d ** 3 - (2.0 * bbt_z + hs2 * z) / d ** 2
