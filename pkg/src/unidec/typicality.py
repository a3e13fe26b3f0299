"""Conditional types, the high-probability event set and type-volume estimates.

For spectra ``X`` and ``Y`` of length ``n`` the sufficient statistics of the
backward channel are the energy ``rho_xx = n^-1 sum |X_m|^2`` and the lagged
cross-correlations

    rho^l = n^-1 sum_m X_m conj(Y_m) exp(-2j*pi*l*m/n),   l = 0..k,

split into real and imaginary parts. A conditional eps-type collects every
``X'`` in complex n-space whose statistics are within ``eps`` of a reference.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .decoder import fit_backward
from .ensemble import EnsembleConfig
from .errors import ConfigError, DegenerateFitError, NumericalDegeneracy, ZeroHitError
from .spectral import lag_phases

__all__ = [
    "SufficientStats",
    "VolumeBracket",
    "VolumeEstimate",
    "coefficient_bound",
    "estimate_type_volume",
    "in_Hn",
    "in_conditional_type",
    "sample_type_member",
    "smallest_admissible_B",
    "sufficient_stats",
    "type_deviation",
    "volume_bracket",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SufficientStats:
    rho_xx: float | np.ndarray
    rho_R: np.ndarray
    rho_I: np.ndarray

    @property
    def k(self) -> int:
        return self.rho_R.shape[-1] - 1


@dataclass(frozen=True)
class VolumeEstimate:
    """Importance-sampling estimate of a type's Lebesgue measure.

    ``std_error`` is the standard error of ``log_volume`` (the relative error
    of the volume itself).
    """

    log_volume: float
    std_error: float
    samples: int
    hits: int = 0


@dataclass(frozen=True)
class VolumeBracket:
    """Log-volume bounds; ``admissible`` means ``(X, Y)`` is in H_n(B) and ``sigma0^2 <= B``."""

    lower: float
    upper: float
    nonvacuous: bool
    admissible: bool


def sufficient_stats(xs, ys, k: int) -> SufficientStats:
    """Energy and lag-``0..k`` cross-statistics; ``xs`` may be a stack of spectra."""
    xs = np.asarray(xs, dtype=np.complex128)
    ys = np.asarray(ys, dtype=np.complex128)
    n = ys.size
    if xs.shape[-1] != n:
        raise ConfigError(f"spectrum lengths differ: {xs.shape[-1]} vs {n}")
    if k < 0 or k + 1 > n:
        raise ConfigError(f"need 0 <= k < n, got k={k}, n={n}")
    rho_xx = np.einsum("...m,...m->...", xs, np.conj(xs)).real / n
    cross = (xs * np.conj(ys)) @ np.conj(lag_phases(n, k)) / n
    if np.ndim(rho_xx) == 0:
        rho_xx = float(rho_xx)
    return SufficientStats(rho_xx, cross.real, cross.imag)


def type_deviation(candidate: SufficientStats, ref: SufficientStats) -> np.ndarray:
    """Largest absolute deviation across all ``2k+3`` statistics."""
    d_xx = np.abs(np.asarray(candidate.rho_xx) - ref.rho_xx)
    d_r = np.max(np.abs(candidate.rho_R - ref.rho_R), axis=-1)
    d_i = np.max(np.abs(candidate.rho_I - ref.rho_I), axis=-1)
    return np.maximum(d_xx, np.maximum(d_r, d_i))


def in_conditional_type(candidate, ref: SufficientStats, ys, k: int, eps: float):
    """Membership of ``candidate`` (one spectrum or a stack) in the eps-type of ``ref``."""
    if not eps > 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    if ref.k != k:
        raise ConfigError(f"reference statistics have order {ref.k}, expected {k}")
    if math.isinf(eps):
        shape = np.shape(candidate)[:-1]
        return True if shape == () else np.ones(shape, dtype=bool)
    inside = type_deviation(sufficient_stats(candidate, ys, k), ref) <= eps
    return bool(inside) if np.ndim(inside) == 0 else inside


def in_Hn(xs, ys, B: float, cfg: EnsembleConfig, k_dec: int) -> bool:
    """Whether ``(X, Y)`` lies in the event set H_n(B).

    In-shell input energy, output energy per bin at most ``B`` and fitted
    backward variance at least ``1/B``. A failed fit counts as outside.
    """
    if not B > 0:
        raise ConfigError(f"B must be > 0, got {B}")
    xs = np.asarray(xs, dtype=np.complex128)
    ys = np.asarray(ys, dtype=np.complex128)
    n = xs.size
    if not cfg.energy_in_shell(np.vdot(xs, xs).real):
        return False
    if np.vdot(ys, ys).real / n > B:
        return False
    try:
        bp = fit_backward(xs, ys, k_dec)
    except NumericalDegeneracy as exc:
        log.info("H_n membership: backward fit failed (%s); treating as outside", exc)
        return False
    return bp.sigma0_sq >= 1.0 / B


def coefficient_bound(cfg: EnsembleConfig, tau: float) -> float:
    """Upper bound ``sigma_x^2 (1 + Delta) / tau`` on ``sum |alpha_l|^2``."""
    return cfg.sigma_x_sq * (1 + cfg.delta) / tau


def volume_bracket(xs, ys, k: int, eps: float, B: float, cfg: EnsembleConfig) -> VolumeBracket:
    """Log-volume bracket for the eps-type of ``xs`` given ``ys``.

    The bounds are only guaranteed when the bracket is ``admissible``.

    ``log Vol`` lies in ``[-n eps f + log(1 - (2k+12) B^2/(n eps^2)) - log maxV,
    n eps f - log maxV]`` with ``f = B (1 + sqrt(k+1) C(1/B, Delta))``. The
    maximized density is that of a circular complex Gaussian with per-bin
    variance ``sigma0^2``, i.e. ``log maxV = -n log(pi e sigma0^2)``. When the
    logarithm's argument is non-positive the lower end is ``-inf`` and the
    bracket is reported as vacuous.
    """
    xs = np.asarray(xs, dtype=np.complex128)
    n = xs.size
    bp = fit_backward(xs, ys, k)
    if not bp.sigma0_sq > 0:
        raise DegenerateFitError("bracket undefined for a zero-variance fit")
    admissible = bool(in_Hn(xs, ys, B, cfg, k)) and bp.sigma0_sq <= B
    log_max_v = -n * math.log(math.pi * math.e * bp.sigma0_sq)
    f = B * (1 + math.sqrt(k + 1) * coefficient_bound(cfg, 1.0 / B))
    upper = n * eps * f - log_max_v
    factor = 1 - (2 * k + 12) * B**2 / (n * eps**2)
    if factor <= 0:
        return VolumeBracket(-math.inf, upper, False, admissible)
    return VolumeBracket(-n * eps * f + math.log(factor) - log_max_v, upper, True, admissible)


def smallest_admissible_B(xs, ys, k: int) -> float:
    """Smallest ``B`` with ``sigma0^2 >= 1/B``, ``n^-1 ||Y||^2 <= B`` and ``sigma0^2 <= B``.

    The last condition is what the bracket's Chebyshev step uses to replace
    ``B sigma0^2`` by ``B^2``. Shell membership does not depend on ``B``.
    """
    xs = np.asarray(xs, dtype=np.complex128)
    ys = np.asarray(ys, dtype=np.complex128)
    s2 = fit_backward(xs, ys, k).sigma0_sq
    if not s2 > 0:
        raise DegenerateFitError("no admissible B for a zero-variance fit")
    # a relative nudge so that sigma0^2 >= 1/B survives rounding
    return max(1.0 / s2, s2, float(np.vdot(ys, ys).real) / ys.size) * (1 + 1e-12)


def estimate_type_volume(
    ref_xs, ys, k: int, eps: float, n_samples: int, rng: np.random.Generator, batch: int = 1 << 14
) -> VolumeEstimate:
    """Importance-sampling estimate of the eps-type volume in complex n-space.

    Proposals come from a defensive mixture. With probability 1/2 a draw comes
    from the fitted backward channel: a circular complex Gaussian centred on
    ``Y_m A(m)`` with per-bin variance ``sigma0^2``. Otherwise it is uniform on
    the box ``|Re X_m|, |Im X_m| <= sqrt(n (rho_xx + eps))``, which contains the
    type. Each proposal contributes ``1{X in type} / q(X)``. The uniform half
    bounds the weights; a pure backward-channel proposal badly undersamples
    the type whenever ``sigma0^2`` is small compared with eps.

    Desk scale only: ``n <= 8`` and ``n_samples >= 10_000``.
    """
    ref_xs = np.asarray(ref_xs, dtype=np.complex128)
    ys = np.asarray(ys, dtype=np.complex128)
    n = ref_xs.size
    if n > 8:
        raise ConfigError(f"volume estimation is limited to n <= 8, got n={n}")
    if n_samples < 10_000:
        raise ConfigError(f"need at least 10000 samples, got {n_samples}")
    if not eps > 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    bp = fit_backward(ref_xs, ys, k)
    s2 = bp.sigma0_sq
    if not s2 > 1e-30:
        raise DegenerateFitError(f"backward fit is degenerate (sigma0^2 = {s2:.3e})")
    mean = (ys[:, None] * lag_phases(n, k)) @ bp.alphas
    ref = sufficient_stats(ref_xs, ys, k)
    r = math.sqrt(n * (ref.rho_xx + eps))
    log_gauss_norm = -n * math.log(math.pi * s2)
    log_box = -2 * n * math.log(2 * r)

    hit_logw = []
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        # one row of normals per proposal keeps the stream independent of batch size;
        # uniforms come from the normal CDF
        g = rng.standard_normal((b, 4 * n + 1))
        z = (g[:, :n] + 1j * g[:, n : 2 * n]) * math.sqrt(s2 / 2)
        u = (2 * ndtr(g[:, 2 * n : 4 * n]) - 1) * r
        pick_gauss = ndtr(g[:, -1]) < 0.5
        cand = np.where(pick_gauss[:, None], mean + z, u[:, :n] + 1j * u[:, n:])
        inside = in_conditional_type(cand, ref, ys, k, eps)
        d = cand[inside] - mean
        log_gauss = log_gauss_norm - np.einsum("ij,ij->i", d, np.conj(d)).real / s2
        log_q = np.logaddexp(log_gauss, log_box) - math.log(2)
        hit_logw.append(-log_q)
        done += b
    logw = np.concatenate(hit_logw)
    hits = logw.size
    if hits == 0:
        raise ZeroHitError(f"no proposal landed in the eps={eps} type after {n_samples} samples")
    log_vol = float(logsumexp(logw) - math.log(n_samples))
    # relative standard error of the mean weight (misses carry weight 0)
    w = np.exp(logw - log_vol)
    second = float(np.sum(w**2)) / n_samples
    var = max(second - 1.0, 0.0)
    return VolumeEstimate(log_vol, math.sqrt(var / n_samples), n_samples, hits)


def sample_type_member(x, y, k: int, eps: float, rng: np.random.Generator) -> np.ndarray:
    """A real signal whose spectrum lies in the eps-type of ``dft(x)`` given ``dft(y)``.

    For real signals the lag-``l`` cross-statistic equals the circular
    correlation ``n^-1 sum_t x_t y_{(t+l) mod n}`` and the imaginary parts
    vanish. Perturbing ``x`` along a random direction orthogonal to ``x`` and
    to the shifted copies of ``y`` keeps the correlations fixed and raises the
    energy by a uniform fraction of ``eps``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    span = np.column_stack([x] + [np.roll(y, -l) for l in range(k + 1)])
    q, _ = np.linalg.qr(span)
    d = rng.standard_normal(n)
    d -= q @ (q.T @ d)
    norm_sq = float(np.dot(d, d))
    if norm_sq == 0:
        return x.copy()
    scale = math.sqrt(rng.uniform(0.0, 1.0) * eps * n / norm_sq)
    return x + scale * d
