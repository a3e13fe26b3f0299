"""Quick self-checks of the decoder and typicality machinery, used by ``unidec verify``.

Each check draws its own instances from a seeded generator and returns a
:class:`Check` with a one-line summary. The sizes are kept small enough for an
interactive run; the test suite exercises the same properties at full size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, transmit
from .decoder import fit_backward, identity_sigma0_sq
from .ensemble import EnsembleConfig, sample_codeword
from .harness import ExperimentConfig, run_experiment
from .spectral import dft, lag_phases, szego_gap
from .typicality import (
    estimate_type_volume,
    in_conditional_type,
    in_Hn,
    sample_type_member,
    sufficient_stats,
)

__all__ = ["Check", "run_checks"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _random_pair(rng, n):
    return dft(rng.standard_normal(n)), dft(rng.standard_normal(n))


def check_residual_identity(rng, count=1000) -> Check:
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(8, 257))
        k = int(rng.integers(0, 4))
        xs, ys = _random_pair(rng, n)
        bp = fit_backward(xs, ys, k)
        worst = max(worst, abs(bp.sigma0_sq - identity_sigma0_sq(xs, ys, bp.alphas)) / bp.sigma0_sq)
    return Check("residual identity", worst <= 1e-9, f"max relative difference {worst:.2e}")


def check_lstsq_optimality(rng, count=200) -> Check:
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(4, 65))
        k = int(rng.integers(0, min(4, n)))
        xs, ys = _random_pair(rng, n)
        D = ys[:, None] * lag_phases(n, k)
        a, *_ = np.linalg.lstsq(D, xs, rcond=None)
        r = xs - D @ a
        oracle = float(np.vdot(r, r).real) / n
        # k + 1 = n fits exactly, so measure against the input energy as well
        scale = max(oracle, float(np.vdot(xs, xs).real) / n)
        worst = max(worst, abs(fit_backward(xs, ys, k).sigma0_sq - oracle) / scale)
    return Check("least-squares optimality", worst <= 1e-9, f"max relative gap to dense oracle {worst:.2e}")


def check_szego(_rng) -> Check:
    h = (1.0, 0.5, 0.25)
    gaps = [szego_gap(h, n) for n in (32, 64, 128, 256)]
    ok = all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 0.1
    return Check("Szego gap decay", ok, "gaps " + ", ".join(f"{g:.4f}" for g in gaps))


def check_type_members(rng, count=200) -> Check:
    n, k, eps = 64, 1, 0.3
    misses = 0
    for _ in range(count):
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        u = sample_type_member(x, y, k, eps, rng)
        ref = sufficient_stats(dft(x), dft(y), k)
        misses += not in_conditional_type(dft(u), ref, dft(y), k, eps)
    return Check("type perturbations stay in type", misses == 0, f"{misses} of {count} outside")


def check_hn_rarity(rng, count=2000) -> Check:
    h = np.array([1.0, 0.5])
    params = ChannelParams(h, 0.25)
    cfg = EnsembleConfig(64, 0.0)
    B = 20 * (cfg.sigma_x_sq * float(np.sum(np.abs(h))) ** 2 + params.noise_var)
    outside = 0
    for _ in range(count):
        x = sample_codeword(cfg, rng)
        y = transmit(x, params, rng)
        outside += not in_Hn(dft(x), dft(y), B, cfg, 1)
    return Check("H_n complement rarity", outside / count < 1e-3 or outside == 0, f"{outside} of {count} outside")


def check_volume(rng) -> Check:
    n, k, eps = 2, 0, 0.3
    xs, ys = _random_pair(rng, n)
    est = estimate_type_volume(xs, ys, k, eps, 100_000, rng)
    ref = sufficient_stats(xs, ys, k)
    # hit-or-miss over a box that contains the type: |X_m|^2 <= n (rho_xx + eps)
    r = math.sqrt(n * (ref.rho_xx + eps))
    m = 400_000
    pts = rng.uniform(-r, r, (m, 2 * n))
    z = pts[:, :n] + 1j * pts[:, n:]
    hits = int(np.count_nonzero(in_conditional_type(z, ref, ys, k, eps)))
    box = (2 * r) ** (2 * n)
    if hits == 0:
        return Check("type volume estimate", False, "hit-or-miss found no hits")
    p = hits / m
    hm = box * p
    hm_se = box * math.sqrt(p * (1 - p) / m)
    is_vol = math.exp(est.log_volume)
    se = math.hypot(is_vol * est.std_error, hm_se)
    ok = abs(is_vol - hm) <= 3 * se
    return Check("type volume estimate", ok, f"importance {is_vol:.4g} vs hit-or-miss {hm:.4g} (se {se:.2g})")


def check_delta_nesting(rng) -> Check:
    cfg = ExperimentConfig(
        n=32, rate=0.125, impulse=(1.0, 0.5), snr_db=0.0,
        delta_list=(0.0, 0.01, 0.05, 0.2), trials=300, root_seed=int(rng.integers(2**32)),
    )
    res = run_experiment(cfg)
    errs = [res.row(32, "ml_delta", d).errors for d in cfg.delta_list]
    ok = res.delta_nesting_violations == 0 and errs == sorted(errs)
    ok &= errs[0] == res.row(32, "ml").errors
    return Check("delta-event nesting", ok, f"errors by delta {errs}")


CHECKS = (
    check_residual_identity,
    check_lstsq_optimality,
    check_szego,
    check_type_members,
    check_hn_rarity,
    check_volume,
    check_delta_nesting,
)


def run_checks(seed: int = 0) -> list[Check]:
    root = np.random.SeedSequence(seed)
    return [fn(np.random.default_rng(s)) for fn, s in zip(CHECKS, root.spawn(len(CHECKS)))]
