"""Paired Monte Carlo estimation of ML, delta-perturbed ML and universal error rates.

Every trial draws a codebook, sends codeword 0 and decodes the same output
with every configured rule, so the decoders' error indicators are paired.
Trial ``i`` at block length ``n`` is seeded by
``SeedSequence(root_seed, spawn_key=(0, n, i))``; results therefore do not
depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .channel import ChannelParams, InterferenceModel, noise_var_for_snr, transmit, transmit_with_interference
from .decoder import ML, Universal, UniversalInterference, decode, delta_error_events
from .ensemble import Codebook, EnsembleConfig, generate_codebook
from .errors import ConfigError
from .results import DecoderStats, ExperimentResult, GapRow, decoder_stats, gap_row

__all__ = [
    "ExperimentConfig",
    "TrialOutcome",
    "exponent_sweep",
    "load_config",
    "run_experiment",
    "run_trial",
]

log = logging.getLogger(__name__)


def _floats(v) -> tuple[float, ...]:
    if v is None:
        return ()
    return tuple(float(x) for x in np.atleast_1d(v))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's output.

    The ensemble, channel and interference model are derived views
    (:attr:`ensemble`, :attr:`channel`, :attr:`interference_model`) so the
    configuration itself stays a flat, hashable record that mirrors the YAML
    file. Exactly one of ``snr_db`` and ``noise_var`` is set; ``noise_var=0``
    selects the noiseless test limit. ``snr_db_list`` optionally assigns an
    SNR to each entry of ``n_list``.
    """

    n: int
    rate: float
    impulse: tuple[float, ...] = (1.0,)
    snr_db: float | None = None
    noise_var: float | None = None
    sigma_x_sq: float = 1.0
    shell_delta: float = 0.1
    k_dec: int | None = None
    interference: tuple[float, ...] = ()
    delta_list: tuple[float, ...] = ()
    trials: int = 1000
    n_list: tuple[int, ...] = ()
    snr_db_list: tuple[float, ...] = ()
    root_seed: int = 0
    fixed_codebook: bool = False

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "impulse", _floats(self.impulse))
        set_(self, "interference", _floats(self.interference))
        set_(self, "delta_list", _floats(self.delta_list))
        set_(self, "snr_db_list", _floats(self.snr_db_list))
        set_(self, "n_list", tuple(int(v) for v in self.n_list))
        if int(self.n) != self.n:
            raise ConfigError(f"n must be an integer, got {self.n}")
        set_(self, "n", int(self.n))
        if self.k_dec is None:
            set_(self, "k_dec", len(self.impulse) - 1)
        if (self.snr_db is None) == (self.noise_var is None):
            raise ConfigError("set exactly one of snr_db and noise_var")
        if self.snr_db is not None:
            set_(self, "snr_db", float(self.snr_db))
        if self.noise_var is not None:
            set_(self, "noise_var", float(self.noise_var))
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials}")
        set_(self, "trials", int(self.trials))
        if int(self.root_seed) != self.root_seed or not 0 <= self.root_seed < 2**64:
            raise ConfigError(f"root_seed must be an unsigned 64-bit integer, got {self.root_seed}")
        set_(self, "root_seed", int(self.root_seed))
        if not self.impulse:
            raise ConfigError("impulse response must have at least one tap")
        if any(d < 0 or not math.isfinite(d) for d in self.delta_list):
            raise ConfigError(f"delta values must be finite and >= 0, got {self.delta_list}")
        if self.k_dec < 0:
            raise ConfigError(f"k_dec must be >= 0, got {self.k_dec}")
        k = len(self.impulse) - 1
        for n in (self.n, *self.n_list):
            if n < k + 1:
                raise ConfigError(f"block length {n} shorter than channel memory k+1={k + 1}")
            if n < self.k_dec + 1 + len(self.interference):
                raise ConfigError(f"block length {n} too short for k_dec={self.k_dec} and q={len(self.interference)}")
        if self.snr_db_list and len(self.snr_db_list) != len(self.n_list):
            raise ConfigError("snr_db_list must have one entry per n_list entry")
        # construct the derived objects once so their validation runs now
        self.ensemble
        self.channel

    @property
    def k(self) -> int:
        return len(self.impulse) - 1

    @property
    def ensemble(self) -> EnsembleConfig:
        return EnsembleConfig(self.n, self.rate, self.sigma_x_sq, self.shell_delta)

    @property
    def channel(self) -> ChannelParams:
        if self.noise_var is not None:
            return ChannelParams(self.impulse, self.noise_var, allow_noiseless=self.noise_var == 0)
        return ChannelParams(self.impulse, noise_var_for_snr(self.impulse, self.snr_db, self.sigma_x_sq))

    @property
    def interference_model(self) -> InterferenceModel | None:
        if not self.interference:
            return None
        return InterferenceModel.cosine(self.interference, self.n)

    @property
    def effective_snr_db(self) -> float:
        if self.snr_db is not None:
            return self.snr_db
        nv = self.channel.noise_var
        if nv == 0:
            return math.inf
        return 10 * math.log10(self.sigma_x_sq * sum(h * h for h in self.impulse) / nv)

    def at_n(self, n: int) -> "ExperimentConfig":
        """The single-length experiment at ``n`` (with its SNR when ``snr_db_list`` is set)."""
        changes: dict[str, Any] = {"n": n, "n_list": (), "snr_db_list": ()}
        if self.snr_db_list:
            if n not in self.n_list:
                raise ConfigError(f"n={n} is not in n_list {self.n_list}")
            changes.update(snr_db=self.snr_db_list[self.n_list.index(n)], noise_var=None)
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("configuration must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_mapping(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    """Read an :class:`ExperimentConfig` from a YAML (or JSON) file."""
    import yaml

    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return ExperimentConfig.from_mapping(data or {})


@dataclass(frozen=True)
class TrialOutcome:
    """Error indicators of one paired trial; ``intf_error`` is ``None`` without interference."""

    index: int
    ml_error: bool
    universal_error: bool
    delta_errors: tuple[bool, ...]
    intf_error: bool | None
    invalid: bool = False


def trial_seed(cfg: ExperimentConfig, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.root_seed, spawn_key=(0, cfg.n, trial_index))


def fixed_codebook(cfg: ExperimentConfig) -> Codebook:
    """The shared codebook of fixed-codebook mode."""
    return generate_codebook(cfg.ensemble, np.random.SeedSequence(cfg.root_seed, spawn_key=(1, cfg.n)))


def run_trial(
    cfg: ExperimentConfig,
    trial_index: int,
    *,
    codebook: Codebook | None = None,
    universal_as_ml: bool = False,
) -> TrialOutcome:
    """One paired trial: codeword 0 is sent and every rule decodes the same output.

    ``universal_as_ml`` swaps the universal rule for ML (a test hook that makes
    the two estimates identical). The ML and delta rules are given the
    interference as a known offset.
    """
    cb_seed, noise_seed = trial_seed(cfg, trial_index).spawn(2)
    if codebook is None:
        codebook = fixed_codebook(cfg) if cfg.fixed_codebook else generate_codebook(cfg.ensemble, cb_seed)
    params = cfg.channel
    rng = np.random.default_rng(noise_seed)
    intf = cfg.interference_model
    x = codebook[0]
    if intf is None:
        y = transmit(x, params, rng)
        offset = None
    else:
        y = transmit_with_interference(x, params, intf, rng)
        offset = intf.signal()

    ml_rule = ML(params, offset)
    ml_error = decode(codebook, y, ml_rule).chosen_index != 0
    invalid = False
    if universal_as_ml:
        universal_error = ml_error
    else:
        v = decode(codebook, y, Universal(cfg.k_dec))
        invalid |= not np.isfinite(v.metric_values[v.chosen_index])
        universal_error = v.chosen_index != 0
    delta_errors = delta_error_events(codebook, y, 0, params, cfg.delta_list, offset)
    intf_error = None
    if intf is not None:
        v = decode(codebook, y, UniversalInterference(cfg.k_dec, intf.basis))
        invalid |= not np.isfinite(v.metric_values[v.chosen_index])
        intf_error = v.chosen_index != 0
    if invalid:
        log.info("trial %d at n=%d: every universal metric degenerate; marked invalid", trial_index, cfg.n)
    return TrialOutcome(
        trial_index,
        bool(ml_error),
        bool(universal_error),
        tuple(bool(e) for e in delta_errors),
        None if intf_error is None else bool(intf_error),
        bool(invalid),
    )


def _run_chunk(cfg: ExperimentConfig, indices: range, universal_as_ml: bool) -> list[TrialOutcome]:
    cb = fixed_codebook(cfg) if cfg.fixed_codebook else None
    return [run_trial(cfg, i, codebook=cb, universal_as_ml=universal_as_ml) for i in indices]


def resolve_threads(threads: int | None) -> int:
    """Worker count from the argument, else ``UNIDEC_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("UNIDEC_THREADS")
        if env is None:
            return 1
        try:
            threads = int(env)
        except ValueError as exc:
            raise ConfigError(f"UNIDEC_THREADS must be an integer, got {env!r}") from exc
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads


def run_trials(cfg: ExperimentConfig, threads: int | None = None, universal_as_ml: bool = False) -> list[TrialOutcome]:
    """All trial outcomes at ``cfg.n`` in index order."""
    threads = resolve_threads(threads)
    if threads == 1 or cfg.trials < 2 * threads:
        return _run_chunk(cfg, range(cfg.trials), universal_as_ml)
    size = math.ceil(cfg.trials / (4 * threads))
    chunks = [range(s, min(s + size, cfg.trials)) for s in range(0, cfg.trials, size)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(_run_chunk, [cfg] * len(chunks), chunks, [universal_as_ml] * len(chunks))
        return [o for part in parts for o in part]


def _aggregate(cfg: ExperimentConfig, outcomes: list[TrialOutcome]) -> tuple[list[DecoderStats], int, int]:
    valid = [o for o in outcomes if not o.invalid]
    t = len(valid)
    common = dict(n=cfg.n, rate=cfg.rate, snr_db=cfg.effective_snr_db, k=cfg.k, k_dec=cfg.k_dec, seed=cfg.root_seed)
    rows = [
        decoder_stats(decoder="ml", delta=None, trials=t, errors=sum(o.ml_error for o in valid), **common),
        decoder_stats(decoder="universal", delta=None, trials=t, errors=sum(o.universal_error for o in valid), **common),
    ]
    if cfg.interference:
        rows.append(
            decoder_stats(decoder="universal_intf", delta=None, trials=t, errors=sum(o.intf_error for o in valid), **common)
        )
    for j, d in enumerate(cfg.delta_list):
        rows.append(decoder_stats(decoder="ml_delta", delta=d, trials=t, errors=sum(o.delta_errors[j] for o in valid), **common))
    # per-trial nesting of the delta events, checked over every ordered pair
    order = sorted(range(len(cfg.delta_list)), key=lambda j: cfg.delta_list[j])
    violations = sum(
        1
        for o in valid
        for a, b in zip(order, order[1:])
        if o.delta_errors[a] and not o.delta_errors[b]
    )
    return rows, len(outcomes) - t, violations


def run_experiment(
    cfg: ExperimentConfig, threads: int | None = None, *, universal_as_ml: bool = False
) -> ExperimentResult:
    """Aggregate :func:`run_trial` over ``cfg.trials`` trials at each block length.

    With a non-empty ``n_list`` every listed length is run; otherwise ``cfg.n``.
    Invalid trials are excluded from every decoder's counts and reported per n.
    """
    start = time.perf_counter()
    rows: list[DecoderStats] = []
    invalid: dict[int, int] = {}
    violations = 0
    for n in cfg.n_list or (cfg.n,):
        sub = cfg.at_n(n) if cfg.n_list else cfg
        outcomes = run_trials(sub, threads, universal_as_ml)
        r, bad, v = _aggregate(sub, outcomes)
        rows.extend(r)
        invalid[n] = bad
        violations += v
        if bad:
            log.warning("n=%d: %d of %d trials invalid", n, bad, sub.trials)
    wall = time.perf_counter() - start
    return ExperimentResult(cfg, tuple(rows), tuple(sorted(invalid.items())), violations, wall_time=wall)


def exponent_sweep(
    cfg: ExperimentConfig, threads: int | None = None, *, universal_as_ml: bool = False
) -> tuple[ExperimentResult, tuple[GapRow, ...]]:
    """Run every ``n`` in ``cfg.n_list`` and tabulate ``(1/n)|log p_univ - log p_ml|``."""
    if len(cfg.n_list) < 2:
        raise ConfigError("an exponent sweep needs at least two block lengths in n_list")
    result = run_experiment(cfg, threads, universal_as_ml=universal_as_ml)
    gaps = []
    for n in cfg.n_list:
        ml = result.row(n, "ml")
        un = result.row(n, "universal")
        gaps.append(gap_row(ml, un))
    return result, tuple(gaps)
