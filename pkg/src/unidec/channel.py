"""Forward simulation of the Gaussian ISI channel, optionally with interference.

    y_t = sum_{i=0}^{k} h_i x_{t-i} + z_t + w_t,   t = 0..n-1,

with zero prehistory (``x_s = 0`` for ``s < 0``), white Gaussian noise ``w``
and an optional deterministic interference ``z_t = sum_i b_i phi_{i,t}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .spectral import ToeplitzOperator, as_signal

__all__ = [
    "ChannelParams",
    "InterferenceModel",
    "cosine_basis",
    "noise_var_for_snr",
    "transmit",
    "transmit_with_interference",
]


@dataclass(frozen=True)
class ChannelParams:
    """Impulse response ``h_0..h_k`` and noise variance ``sigma^2``.

    ``noise_var == 0`` is a test-only limit and must be requested with
    ``allow_noiseless=True``.
    """

    impulse: np.ndarray
    noise_var: float
    allow_noiseless: bool = False

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.impulse, dtype=np.float64))
        if h.ndim != 1 or h.size == 0 or not np.all(np.isfinite(h)):
            raise ConfigError("impulse response must be a finite, non-empty 1-D array")
        if not np.isfinite(self.noise_var) or self.noise_var < 0:
            raise ConfigError(f"noise variance must be finite and >= 0, got {self.noise_var}")
        if self.noise_var == 0 and not self.allow_noiseless:
            raise ConfigError("noise_var must be > 0 (pass allow_noiseless=True for the test limit)")
        object.__setattr__(self, "impulse", h)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    @property
    def k(self) -> int:
        return self.impulse.size - 1

    def operator(self, n: int) -> ToeplitzOperator:
        return ToeplitzOperator(self.impulse, n)

    @classmethod
    def from_snr(cls, impulse, snr_db: float, sigma_x_sq: float = 1.0) -> "ChannelParams":
        """Channel whose SNR ``sigma_x^2 ||h||^2 / sigma^2`` equals ``snr_db``."""
        return cls(impulse, noise_var_for_snr(impulse, snr_db, sigma_x_sq))


def noise_var_for_snr(impulse, snr_db: float, sigma_x_sq: float = 1.0) -> float:
    h = np.asarray(impulse, dtype=np.float64)
    return float(sigma_x_sq * np.dot(h, h) / 10.0 ** (snr_db / 10.0))


def cosine_basis(n: int, q: int) -> np.ndarray:
    """First ``q`` rows of the orthonormal DCT-II basis (row 0 is the constant)."""
    if not 1 <= q <= n:
        raise ConfigError(f"need 1 <= q <= n, got q={q}, n={n}")
    t = np.arange(n)
    i = np.arange(q)[:, None]
    rows = np.cos(np.pi * i * (2 * t + 1) / (2 * n))
    rows *= np.where(i == 0, math.sqrt(1.0 / n), math.sqrt(2.0 / n))
    return rows


@dataclass(frozen=True)
class InterferenceModel:
    """Interference ``z = coeffs @ basis`` with orthonormal, bounded basis rows."""

    coeffs: np.ndarray
    basis: np.ndarray
    bound: float | None = None

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.coeffs, dtype=np.float64))
        phi = np.atleast_2d(np.asarray(self.basis, dtype=np.float64))
        if b.ndim != 1 or phi.shape[0] != b.size:
            raise ConfigError(f"{b.size} coefficients but {phi.shape[0]} basis rows")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(phi))):
            raise ConfigError("interference coefficients and basis must be finite")
        gram = phi @ phi.T
        if np.max(np.abs(gram - np.eye(b.size)), initial=0.0) > 1e-10:
            raise ConfigError("interference basis rows are not orthonormal")
        bound = self.bound if self.bound is not None else math.sqrt(2.0 / phi.shape[1])
        if np.max(np.abs(phi)) > bound * (1 + 1e-12):
            raise ConfigError(f"basis entries exceed the bound L={bound:g}")
        object.__setattr__(self, "coeffs", b)
        object.__setattr__(self, "basis", phi)
        object.__setattr__(self, "bound", float(bound))

    @classmethod
    def cosine(cls, coeffs, n: int) -> "InterferenceModel":
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=np.float64))
        return cls(coeffs, cosine_basis(n, coeffs.size))

    @property
    def q(self) -> int:
        return self.coeffs.size

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    def signal(self) -> np.ndarray:
        return self.coeffs @ self.basis


def transmit(x, params: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    """Pass ``x`` through the ISI channel and add ``N(0, sigma^2)`` noise.

    Exactly ``n`` standard normals are drawn from ``rng`` even in the
    noiseless limit, so paired runs stay aligned.
    """
    x = as_signal(x)
    n = x.size
    if n < params.k + 1:
        raise ConfigError(f"block length {n} shorter than channel memory k+1={params.k + 1}")
    w = rng.standard_normal(n)
    return params.operator(n).apply(x) + math.sqrt(params.noise_var) * w


def transmit_with_interference(
    x, params: ChannelParams, interference: InterferenceModel, rng: np.random.Generator
) -> np.ndarray:
    """:func:`transmit` plus the deterministic interference ``z``."""
    x = as_signal(x)
    if interference.n != x.size:
        raise ConfigError(f"interference basis length {interference.n} != block length {x.size}")
    y = transmit(x, params, rng)
    if not np.any(interference.coeffs):
        return y
    return y + interference.signal()
