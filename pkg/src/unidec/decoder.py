"""ML, delta-perturbed ML and universal (frequency-domain MMI) decoding.

The universal metric of a codeword ``x`` given the output ``y`` is

    log max_theta V(X | Y, theta)  -  log mu(x)

where ``X``, ``Y`` are unitary DFTs and the backward channel ``V`` models each
input bin as ``X_m ~ Y_m * A(m)`` plus Gaussian error, with
``A(m) = sum_{l=0}^{k} alpha_l exp(2j*pi*m*l/n)``. Maximizing over
``alpha`` is a least-squares problem whose normal equations are a
``(k+1) x (k+1)`` Hermitian Toeplitz system built from ``|Y_m|^2``; the
maximizing variance is the residual energy per bin. The Gram matrix depends
on ``y`` only, so one factorization serves the whole codebook.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelParams
from .ensemble import Codebook, EnsembleConfig, log_mu_from_energy
from .errors import ConfigError, DegenerateFitError, SingularSystemError
from .spectral import dft, lag_phases

__all__ = [
    "ML",
    "BackwardParams",
    "DecoderVerdict",
    "Universal",
    "UniversalInterference",
    "backward_gram",
    "backward_rhs",
    "codebook_metrics",
    "decode",
    "delta_error_event",
    "delta_error_events",
    "fit_backward",
    "fit_backward_with_interference",
    "identity_sigma0_sq",
    "max_log_V",
    "ml_log_likelihood",
    "ml_log_likelihoods",
    "residual_sigma0_sq",
    "universal_metric",
]

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12
SIGMA0_FLOOR = 1e-30
RIDGE_SCALE = 1e-10


# ---------------------------------------------------------------------------
# ML metric
# ---------------------------------------------------------------------------


def _residual_energy(codewords: np.ndarray, y: np.ndarray, params: ChannelParams, offset) -> np.ndarray:
    n = y.shape[-1]
    target = y if offset is None else y - np.asarray(offset, dtype=np.float64)
    resid = target - params.operator(n).apply(codewords)
    return np.einsum("...i,...i->...", resid, resid)


def ml_log_likelihood(y, x, params: ChannelParams, offset=None) -> float:
    """Gaussian log-density ``log W(y | x)`` with zero prehistory.

    ``offset`` is a known additive signal (genie-aided interference).
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigError(f"length mismatch: x {x.shape} vs y {y.shape}")
    return float(ml_log_likelihoods(x[None, :], y, params, offset)[0])


def ml_log_likelihoods(codewords, y, params: ChannelParams, offset=None) -> np.ndarray:
    """``log W(y | x_j)`` for every row of ``codewords``.

    In the noiseless limit the values are ``0`` for an exact fit and ``-inf``
    otherwise; :func:`decode` ranks by residual energy there instead.
    """
    y = np.asarray(y, dtype=np.float64)
    energy = _residual_energy(np.atleast_2d(codewords), y, params, offset)
    n = y.size
    s2 = params.noise_var
    if s2 == 0:
        return np.where(energy == 0, 0.0, -np.inf)
    return -0.5 * n * math.log(2 * math.pi * s2) - energy / (2 * s2)


# ---------------------------------------------------------------------------
# Backward-channel fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BackwardParams:
    """Maximizer of the backward channel: residual variance and taps.

    ``sigma0_sq`` is the directly computed residual energy per bin; ``alphas``
    are the ``k+1`` complex taps and ``betas`` the interference weights when
    the interference-aware fit was used.
    """

    sigma0_sq: float
    alphas: np.ndarray
    betas: np.ndarray | None = None
    ridge: float = 0.0

    @property
    def k(self) -> int:
        return self.alphas.size - 1


def _check_spectra(xs, ys, k_dec: int) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=np.complex128)
    ys = np.asarray(ys, dtype=np.complex128)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ConfigError(f"spectra must be 1-D and equally long, got {xs.shape} and {ys.shape}")
    if k_dec < 0 or k_dec + 1 > xs.size:
        raise ConfigError(f"model order k_dec={k_dec} needs k_dec+1 <= n={xs.size}")
    return xs, ys


def backward_gram(ys, k_dec: int) -> np.ndarray:
    """Hermitian Toeplitz ``C[q, l] = sum_m |Y_m|^2 exp(2j*pi*m*(l-q)/n)``."""
    ys = np.asarray(ys, dtype=np.complex128)
    n = ys.size
    # c[d] = sum_m |Y_m|^2 exp(2j*pi*m*d/n) for d = 0..k
    c = n * np.fft.ifft(np.abs(ys) ** 2)[: k_dec + 1]
    c[0] = c[0].real
    return scipy.linalg.toeplitz(np.conj(c), c)


def backward_rhs(xs, ys, k_dec: int) -> np.ndarray:
    """``r[q] = sum_m X_m conj(Y_m) exp(-2j*pi*m*q/n)`` for ``q = 0..k``."""
    xs = np.asarray(xs, dtype=np.complex128)
    ys = np.asarray(ys, dtype=np.complex128)
    return np.fft.fft(xs * np.conj(ys), axis=-1)[..., : k_dec + 1]


def _factor(gram: np.ndarray, ridge: bool):
    """Cholesky factor of the Gram matrix, with the conditioning policy applied."""
    p = gram.shape[0]
    w = np.linalg.eigvalsh(gram)
    cond = w[-1] / w[0] if w[0] > 0 else math.inf
    lam = 0.0
    if not cond <= MAX_CONDITION:
        if not ridge:
            raise SingularSystemError(f"Gram matrix condition number {cond:.3e} exceeds {MAX_CONDITION:g}")
        lam = RIDGE_SCALE * float(np.trace(gram).real) / p
        if lam <= 0:
            raise SingularSystemError("Gram matrix is identically zero; ridge cannot help")
        log.warning("ill-conditioned Gram matrix (cond=%.3e); applying ridge %.3e", cond, lam)
        gram = gram + lam * np.eye(p)
    try:
        return scipy.linalg.cho_factor(gram, lower=True, check_finite=False), lam
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"Cholesky factorization failed: {exc}") from exc


def _design(ys: np.ndarray, k_dec: int) -> np.ndarray:
    # columns Y_m exp(2j*pi*m*l/n), l = 0..k
    return ys[:, None] * lag_phases(ys.size, k_dec)


def residual_sigma0_sq(xs, ys, alphas) -> float:
    """Direct residual ``n^-1 sum_m |X_m - Y_m A(m)|^2``."""
    xs = np.asarray(xs, dtype=np.complex128)
    ys = np.asarray(ys, dtype=np.complex128)
    alphas = np.asarray(alphas, dtype=np.complex128)
    resid = xs - _design(ys, alphas.size - 1) @ alphas
    return float(np.vdot(resid, resid).real / xs.size)


def identity_sigma0_sq(xs, ys, alphas) -> float:
    """Residual via ``n^-1 (sum |X_m|^2 - sum |Y_m|^2 |A(m)|^2)``; valid at the optimum."""
    xs = np.asarray(xs, dtype=np.complex128)
    ys = np.asarray(ys, dtype=np.complex128)
    alphas = np.asarray(alphas, dtype=np.complex128)
    fitted = _design(ys, alphas.size - 1) @ alphas
    return float((np.vdot(xs, xs).real - np.vdot(fitted, fitted).real) / xs.size)


def fit_backward(xs, ys, k_dec: int, ridge: bool = False) -> BackwardParams:
    """Least-squares backward-channel fit from input/output spectra.

    Raises :class:`SingularSystemError` when the Gram matrix condition number
    exceeds ``1e12``, unless ``ridge`` is set, in which case a diagonal load of
    ``1e-10 * trace(C) / (k+1)`` is applied and logged.
    """
    xs, ys = _check_spectra(xs, ys, k_dec)
    (cho, lam) = _factor(backward_gram(ys, k_dec), ridge)
    alphas = scipy.linalg.cho_solve(cho, backward_rhs(xs, ys, k_dec), check_finite=False)
    return BackwardParams(residual_sigma0_sq(xs, ys, alphas), alphas, None, lam)


def fit_backward_with_interference(xs, ys, k_dec: int, basis_spectra, ridge: bool = False) -> BackwardParams:
    """Joint fit of ISI taps and interference weights.

    ``basis_spectra`` is a ``q x n`` array of the interference basis DFTs; the
    model is ``X_m ~ Y_m A(m) + sum_i beta_i Phi_{i,m}``. With ``q == 0`` this
    is exactly :func:`fit_backward`.
    """
    xs, ys = _check_spectra(xs, ys, k_dec)
    phi = np.asarray(basis_spectra, dtype=np.complex128).reshape(-1, xs.size)
    q = phi.shape[0]
    if q == 0:
        return fit_backward(xs, ys, k_dec, ridge)
    if q + k_dec + 1 > xs.size:
        raise ConfigError(f"q + k_dec + 1 = {q + k_dec + 1} exceeds n = {xs.size}")
    D = np.hstack([_design(ys, k_dec), phi.T])
    (cho, lam) = _factor(D.conj().T @ D, ridge)
    theta = scipy.linalg.cho_solve(cho, D.conj().T @ xs, check_finite=False)
    resid = xs - D @ theta
    s2 = float(np.vdot(resid, resid).real / xs.size)
    return BackwardParams(s2, theta[: k_dec + 1], theta[k_dec + 1 :], lam)


def max_log_V(bp: BackwardParams, n: int, floor: float = SIGMA0_FLOOR) -> float:
    """Log of the backward-channel density at its maximizer.

    Equals ``-(n/2) log(2 pi sigma0^2) - n/2``. Raises
    :class:`DegenerateFitError` when ``sigma0^2`` is below ``floor``.
    """
    s2 = bp.sigma0_sq
    if not s2 >= floor:
        raise DegenerateFitError(f"fitted variance {s2:.3e} below floor {floor:g}")
    return -0.5 * n * math.log(2 * math.pi * s2) - 0.5 * n


def universal_metric(xs, ys, k_dec: int, cfg: EnsembleConfig, ridge: bool = False) -> float:
    """``max_log_V - log mu(x)`` for one codeword spectrum; ``-inf`` off the shell.

    ``||x||^2`` is taken from the spectrum (Parseval).
    """
    xs = np.asarray(xs, dtype=np.complex128)
    log_mu = log_mu_from_energy(float(np.vdot(xs, xs).real), cfg)
    if log_mu == -math.inf:
        return -math.inf
    bp = fit_backward(xs, ys, k_dec, ridge)
    return max_log_V(bp, xs.size) - log_mu


# ---------------------------------------------------------------------------
# Decoding rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ML:
    """Maximum likelihood with known channel; ``offset`` is a known interference."""

    params: ChannelParams
    offset: np.ndarray | None = None


@dataclass(frozen=True)
class Universal:
    k_dec: int
    ridge: bool = False


@dataclass(frozen=True)
class UniversalInterference:
    """Universal rule with ``q`` interference basis rows (time domain, ``q x n``)."""

    k_dec: int
    basis: np.ndarray
    ridge: bool = False

    @property
    def q(self) -> int:
        return np.atleast_2d(self.basis).shape[0]


@dataclass(frozen=True)
class DecoderVerdict:
    chosen_index: int
    metric_values: np.ndarray
    tie_flag: bool


def _half_weights(n: int) -> np.ndarray:
    # multiplicity of each rfft bin in the full spectrum
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def _universal_batch(codebook: Codebook, ys: np.ndarray, k_dec: int, extra: np.ndarray | None, ridge: bool):
    n = ys.size
    D = _design(ys, k_dec)
    if extra is not None:
        D = np.hstack([D, extra.T])
    if D.shape[1] > n:
        raise ConfigError(f"model has {D.shape[1]} coefficients but only n={n} bins")
    try:
        cho, _ = _factor(D.conj().T @ D, ridge)
    except SingularSystemError as exc:
        log.info("universal fit degenerate for every codeword: %s", exc)
        return np.full(len(codebook), -np.inf)
    # Codewords, output and basis are real, so bins m and n-m contribute
    # complex-conjugate terms to D^H X and the sum folds onto the half spectrum.
    half = n // 2 + 1
    Xh = np.fft.rfft(codebook.codewords, norm="ortho")
    b = (Xh @ (_half_weights(n)[:, None] * np.conj(D[:half]))).real  # row j: D^H X_j
    coef = scipy.linalg.cho_solve(cho, b.T.astype(np.complex128), check_finite=False)
    explained = np.einsum("jp,pj->j", np.conj(b), coef).real
    s2 = np.maximum(codebook.energies - explained, 0.0) / n
    # energy - explained cancels for near-perfect fits; use the direct residual there
    close = np.flatnonzero(n * s2 <= 1e-8 * codebook.energies)
    if close.size:
        X = dft(codebook.codewords[close])
        s2[close] = np.sum(np.abs(X - coef.T[close] @ D.T) ** 2, axis=1) / n
    log_mu = log_mu_from_energy(codebook.energies, codebook.config)
    with np.errstate(divide="ignore"):
        log_v = -0.5 * n * np.log(2 * np.pi * s2) - 0.5 * n
    metric = log_v - log_mu
    bad = (s2 < SIGMA0_FLOOR) | ~np.isfinite(log_mu)
    if np.any(s2 < SIGMA0_FLOOR):
        log.info("%d codeword fit(s) degenerate; assigned -inf", int(np.count_nonzero(s2 < SIGMA0_FLOOR)))
    metric[bad] = -np.inf
    return metric


def codebook_metrics(codebook: Codebook, y, rule) -> np.ndarray:
    """Per-codeword metric under ``rule`` (larger is better)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (codebook.config.n,):
        raise ConfigError(f"output length {y.shape} != block length {codebook.config.n}")
    if isinstance(rule, ML):
        if rule.params.noise_var == 0:
            return -_residual_energy(codebook.codewords, y, rule.params, rule.offset)
        return ml_log_likelihoods(codebook.codewords, y, rule.params, rule.offset)
    ys = dft(y)
    if isinstance(rule, Universal):
        return _universal_batch(codebook, ys, rule.k_dec, None, rule.ridge)
    if isinstance(rule, UniversalInterference):
        basis = np.atleast_2d(np.asarray(rule.basis, dtype=np.float64))
        if basis.shape[1] != y.size:
            raise ConfigError(f"basis length {basis.shape[1]} != block length {y.size}")
        return _universal_batch(codebook, ys, rule.k_dec, dft(basis), rule.ridge)
    raise ConfigError(f"unknown decoding rule {rule!r}")


def decode(codebook: Codebook, y, rule) -> DecoderVerdict:
    """Pick the codeword with the largest metric; ties go to the lowest index."""
    if len(codebook) == 0:
        raise ConfigError("empty codebook")
    metric = codebook_metrics(codebook, y, rule)
    best = int(np.argmax(metric))
    tie = int(np.count_nonzero(metric == metric[best])) > 1
    return DecoderVerdict(best, metric, tie)


def delta_error_events(
    codebook: Codebook, y, true_index: int, params: ChannelParams, deltas, offset=None
) -> tuple[bool, ...]:
    """:func:`delta_error_event` for several ``delta`` values from one likelihood pass."""
    deltas = [float(d) for d in deltas]
    if any(not d >= 0 for d in deltas):
        raise ConfigError(f"delta values must be >= 0, got {deltas}")
    y = np.asarray(y, dtype=np.float64)
    others = np.arange(len(codebook)) != true_index
    if not np.any(others):
        return tuple(False for _ in deltas)
    if params.noise_var == 0:
        # sigma -> 0: any finite per-symbol slack vanishes against the residual gap
        r = _residual_energy(codebook.codewords, y, params, offset)
        strict = bool(np.any(r[others] < r[true_index]))
        loose = bool(np.any(r[others] <= r[true_index]))
        return tuple(loose if d > 0 else strict for d in deltas)
    ll = ml_log_likelihoods(codebook.codewords, y, params, offset) / y.size
    best_other = float(np.max(ll[others]))
    return tuple(bool(best_other > ll[true_index] - d) for d in deltas)


def delta_error_event(
    codebook: Codebook, y, true_index: int, params: ChannelParams, delta: float, offset=None
) -> bool:
    """True iff a competitor's per-symbol log-likelihood exceeds the true one minus ``delta``.

    The comparison is strict, so exact ties are not errors at ``delta = 0``.
    """
    return delta_error_events(codebook, y, true_index, params, (delta,), offset)[0]
