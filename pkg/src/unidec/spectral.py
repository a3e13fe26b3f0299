"""Unitary DFT, banded Toeplitz channel operators and Szegő diagnostics.

Signals are plain 1-D ``float64`` arrays and spectra are 1-D ``complex128``
arrays. The forward transform carries the unitary ``1/sqrt(n)`` factor::

    X[m] = n**-0.5 * sum_t x[t] * exp(-2j*pi*m*t/n)

so that Parseval holds without extra factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AsymmetricSpectrumError, ConfigError, NumericalDegeneracy

__all__ = [
    "ToeplitzOperator",
    "apply_channel_operator",
    "as_signal",
    "dft",
    "idft",
    "is_conjugate_symmetric",
    "lag_phases",
    "szego_gap",
    "transfer_function",
]


def as_signal(x) -> np.ndarray:
    """Validate and return ``x`` as a finite, non-empty 1-D float array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError(f"signal must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError("signal contains non-finite samples")
    return arr


def dft(x, axis: int = -1) -> np.ndarray:
    """Unitary DFT of a real signal (or a stack of signals along ``axis``)."""
    return np.fft.fft(np.asarray(x, dtype=np.float64), axis=axis, norm="ortho")


def is_conjugate_symmetric(spectrum, rtol: float = 1e-12) -> bool:
    """True if ``X[m] == conj(X[-m mod n])`` to within ``rtol`` of the spectrum scale."""
    X = np.asarray(spectrum, dtype=np.complex128)
    mirrored = np.conj(np.roll(X[::-1], 1))
    scale = max(float(np.max(np.abs(X), initial=0.0)), np.finfo(float).tiny)
    return float(np.max(np.abs(X - mirrored), initial=0.0)) <= rtol * scale


def idft(spectrum, rtol: float = 1e-8) -> np.ndarray:
    """Inverse of :func:`dft` for spectra of real signals.

    Raises :class:`AsymmetricSpectrumError` when the reconstruction carries an
    imaginary residue larger than ``rtol`` relative to its real part.
    """
    X = np.asarray(spectrum, dtype=np.complex128)
    z = np.fft.ifft(X, norm="ortho")
    scale = max(float(np.max(np.abs(z), initial=0.0)), np.finfo(float).tiny)
    residue = float(np.max(np.abs(z.imag), initial=0.0))
    if residue > rtol * scale:
        raise AsymmetricSpectrumError(
            f"imaginary residue {residue:.3e} exceeds {rtol:g} relative; "
            "spectrum is not conjugate-symmetric"
        )
    return np.ascontiguousarray(z.real)


def lag_phases(n: int, k: int) -> np.ndarray:
    """Matrix ``E[m, l] = exp(2j*pi*m*l/n)`` for ``m < n``, ``l <= k``."""
    m = np.arange(n)[:, None]
    lags = np.arange(k + 1)[None, :]
    # reduce modulo n first so large products stay exact
    return np.exp(2j * np.pi * ((m * lags) % n) / n)


def transfer_function(h, n: int) -> np.ndarray:
    """Samples ``H_m = sum_l h_l exp(-2j*pi*m*l/n)`` of the impulse response's DTFT."""
    h = np.asarray(h, dtype=np.float64)
    m = np.arange(n)[:, None]
    lags = np.arange(h.size)[None, :]
    return np.exp(-2j * np.pi * ((m * lags) % n) / n) @ h


@dataclass(frozen=True)
class ToeplitzOperator:
    """The ``n x n`` banded lower-triangular Toeplitz matrix ``A[i, j] = h[i - j]``.

    With ``circular=True`` the operator wraps around (circulant), which the
    DFT diagonalizes exactly.
    """

    impulse: np.ndarray
    n: int
    circular: bool = False

    def __post_init__(self):
        h = np.asarray(self.impulse, dtype=np.float64)
        if h.ndim != 1 or h.size == 0:
            raise ConfigError("impulse response must be a non-empty 1-D array")
        if not np.all(np.isfinite(h)):
            raise ConfigError("impulse response contains non-finite taps")
        if self.n < 1:
            raise ConfigError("operator dimension must be >= 1")
        object.__setattr__(self, "impulse", h)

    @property
    def k(self) -> int:
        return self.impulse.size - 1

    def dense(self) -> np.ndarray:
        n, h = self.n, self.impulse
        if self.circular:
            col = np.zeros(n)
            np.add.at(col, np.arange(h.size) % n, h)
            return scipy.linalg.circulant(col)
        col = np.zeros(n)
        m = min(n, h.size)
        col[:m] = h[:m]
        row = np.zeros(n)
        row[0] = col[0]
        return scipy.linalg.toeplitz(col, row)

    def apply(self, x) -> np.ndarray:
        """``A @ x`` along the last axis; accepts a single signal or a stack."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise ConfigError(f"signal length {x.shape[-1]} != operator dimension {self.n}")
        out = np.zeros_like(x)
        for i, hi in enumerate(self.impulse):
            if hi == 0.0:
                continue
            if self.circular:
                out += hi * np.roll(x, i, axis=-1)
            elif i < self.n:
                out[..., i:] += hi * x[..., : self.n - i]
        return out

    def singular_values(self) -> np.ndarray:
        """Singular values in ascending order (dense SVD)."""
        try:
            s = np.linalg.svd(self.dense(), compute_uv=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalDegeneracy(f"singular-value routine failed: {exc}") from exc
        return np.sort(s)

    def spectral_norm(self) -> float:
        return float(self.singular_values()[-1])


def apply_channel_operator(op: ToeplitzOperator, x) -> np.ndarray:
    """Noiseless ISI output ``y_t = sum_i h_i x_{t-i}`` with ``x_s = 0`` for ``s < 0``."""
    return op.apply(as_signal(x))


def szego_gap(h, n: int, circular: bool = False) -> float:
    """Largest mismatch between sorted singular values and sorted ``|H_m|``.

    Measures how far the ``n``-dimensional Toeplitz operator is from being
    diagonalized by the Fourier basis. Requires ``n >= len(h)``.
    """
    h = np.asarray(h, dtype=np.float64)
    if n < h.size:
        raise ConfigError(f"szego_gap needs n >= k+1 = {h.size}, got n={n}")
    s = ToeplitzOperator(h, n, circular=circular).singular_values()
    g = np.sort(np.abs(transfer_function(h, n)))
    return float(np.max(np.abs(s - g)))
