"""Random-coding ensemble: Gaussian inputs truncated to an energy shell.

A codeword ``x`` of length ``n`` is drawn i.i.d. ``N(0, sigma_x^2)`` and kept
only if it lies in the shell

    D = { x : | ||x||^2 / n - sigma_x^2 | <= delta * sigma_x^2 }.

Rejection sampling reproduces the truncated measure exactly. The measure's
normalizing constant is never needed: decoders only compare codewords.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ConfigError, SamplingExhausted

__all__ = [
    "Codebook",
    "EnsembleConfig",
    "DEFAULT_MAX_REJECTIONS",
    "acceptance_probability",
    "generate_codebook",
    "in_shell",
    "load_codebook",
    "log_mu_from_energy",
    "log_mu_unnormalized",
    "sample_codeword",
    "save_codebook",
]

DEFAULT_MAX_REJECTIONS = 10_000
MAX_CODEBOOK_SIZE = 1 << 22


@dataclass(frozen=True)
class EnsembleConfig:
    """Block length, rate (bits/channel use), input power and shell width."""

    n: int
    rate: float
    sigma_x_sq: float = 1.0
    delta: float = 0.1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"block length must be a positive integer, got {self.n}")
        if not self.rate >= 0:
            raise ConfigError(f"rate must be >= 0, got {self.rate}")
        if not self.sigma_x_sq > 0:
            raise ConfigError(f"sigma_x_sq must be > 0, got {self.sigma_x_sq}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"shell width delta must lie in (0, 1), got {self.delta}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def M(self) -> int:
        """Codebook size ``ceil(2**(n*R))``."""
        bits = self.n * self.rate
        if float(bits).is_integer():
            return 1 << int(bits)
        return math.ceil(2.0**bits)

    def energy_in_shell(self, energy) -> np.ndarray | bool:
        """Shell indicator evaluated on total energies ``||x||^2``."""
        return np.abs(np.asarray(energy) / self.n - self.sigma_x_sq) <= self.delta * self.sigma_x_sq


@dataclass(frozen=True)
class Codebook:
    """``M x n`` array of codewords (one per row) plus its provenance."""

    codewords: np.ndarray
    config: EnsembleConfig
    seed: int | None = None
    energies: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cw = np.atleast_2d(np.asarray(self.codewords, dtype=np.float64))
        if cw.shape[1] != self.config.n:
            raise ConfigError(f"codeword length {cw.shape[1]} != n={self.config.n}")
        object.__setattr__(self, "codewords", cw)
        object.__setattr__(self, "energies", np.einsum("ij,ij->i", cw, cw))

    def __len__(self) -> int:
        return self.codewords.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.codewords[i]


def in_shell(x, cfg: EnsembleConfig) -> bool:
    x = np.asarray(x, dtype=np.float64)
    return bool(cfg.energy_in_shell(np.dot(x, x)))


def acceptance_probability(cfg: EnsembleConfig) -> float:
    """``P(|chi2_n / n - 1| <= delta)``, the rejection sampler's acceptance rate."""
    return _acceptance(cfg.n, cfg.delta)


@functools.lru_cache(maxsize=256)
def _acceptance(n: int, d: float) -> float:
    return float(stats.chi2.cdf(n * (1 + d), n) - stats.chi2.cdf(n * (1 - d), n))


def log_mu_from_energy(energy, cfg: EnsembleConfig):
    """Unnormalized log-density as a function of ``||x||^2``; ``-inf`` off the shell."""
    energy = np.asarray(energy, dtype=np.float64)
    val = np.where(cfg.energy_in_shell(energy), -energy / (2.0 * cfg.sigma_x_sq), -np.inf)
    return float(val) if val.ndim == 0 else val


def log_mu_unnormalized(x, cfg: EnsembleConfig) -> float:
    """``-sum(x**2) / (2 sigma_x^2)`` on the shell, ``-inf`` outside it.

    The ``-log(nu)`` normalization is omitted; it is common to every codeword.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.n,):
        raise ConfigError(f"expected a length-{cfg.n} signal, got shape {x.shape}")
    return log_mu_from_energy(np.dot(x, x), cfg)


def _draw(cfg: EnsembleConfig, rng: np.random.Generator, count: int, max_rejections: int) -> np.ndarray:
    # Batched rejection sampling; accepted rows keep their draw order, so the
    # result is a deterministic function of the generator state.
    sigma = math.sqrt(cfg.sigma_x_sq)
    p = max(acceptance_probability(cfg), 1e-3)
    out = np.empty((count, cfg.n))
    filled = 0
    rejected = 0
    cap = max_rejections * count
    while filled < count:
        need = count - filled
        batch = int(need / p * 1.1) + 4
        cand = sigma * rng.standard_normal((batch, cfg.n))
        ok = cfg.energy_in_shell(np.einsum("ij,ij->i", cand, cand))
        acc = cand[ok][:need]
        out[filled : filled + acc.shape[0]] = acc
        filled += acc.shape[0]
        rejected += int(batch - np.count_nonzero(ok))
        if filled < count and rejected > cap:
            raise SamplingExhausted(
                f"rejection sampler gave up after {rejected} rejections "
                f"(n={cfg.n}, delta={cfg.delta}); shell too thin for this block length"
            )
    return out


def sample_codeword(
    cfg: EnsembleConfig, rng: np.random.Generator, max_rejections: int = DEFAULT_MAX_REJECTIONS
) -> np.ndarray:
    """One draw from the shell-truncated Gaussian ensemble."""
    sigma = math.sqrt(cfg.sigma_x_sq)
    for _ in range(max_rejections + 1):
        x = sigma * rng.standard_normal(cfg.n)
        if cfg.energy_in_shell(np.dot(x, x)):
            return x
    raise SamplingExhausted(
        f"no codeword accepted after {max_rejections} rejections (n={cfg.n}, delta={cfg.delta})"
    )


def generate_codebook(
    cfg: EnsembleConfig,
    seed=None,
    *,
    rng: np.random.Generator | None = None,
    max_rejections: int = DEFAULT_MAX_REJECTIONS,
) -> Codebook:
    """Draw ``cfg.M`` independent codewords.

    Either ``seed`` (an int or :class:`numpy.random.SeedSequence`) or an
    explicit ``rng`` must determine the draw.
    """
    M = cfg.M
    if M < 1:
        raise ConfigError("codebook must contain at least one codeword")
    if M > MAX_CODEBOOK_SIZE:
        raise ConfigError(f"codebook size {M} exceeds the desk-scale limit {MAX_CODEBOOK_SIZE}")
    if rng is None:
        rng = np.random.default_rng(seed)
    token = seed if isinstance(seed, int) else None
    return Codebook(_draw(cfg, rng, M, max_rejections), cfg, token)


def save_codebook(codebook: Codebook, path, fmt: str = "bin") -> None:
    """Write codewords as little-endian float64 rows (``bin``) or CSV rows."""
    path = Path(path)
    try:
        if fmt == "bin":
            path.write_bytes(codebook.codewords.astype("<f8").tobytes())
        elif fmt == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for row in codebook.codewords:
                    w.writerow(repr(float(v)) for v in row)
        else:
            raise ConfigError(f"unknown codebook format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write codebook to {path}: {exc}") from exc


def load_codebook(path, cfg: EnsembleConfig, fmt: str = "bin", seed: int | None = None) -> Codebook:
    path = Path(path)
    if fmt == "bin":
        flat = np.frombuffer(path.read_bytes(), dtype="<f8")
        if flat.size % cfg.n:
            raise ConfigError(f"{path}: {flat.size} values is not a multiple of n={cfg.n}")
        rows = flat.reshape(-1, cfg.n).astype(np.float64)
    elif fmt == "csv":
        with path.open(newline="") as fh:
            rows = np.array([[float(v) for v in r] for r in csv.reader(fh) if r])
    else:
        raise ConfigError(f"unknown codebook format {fmt!r}")
    return Codebook(rows, cfg, seed)
