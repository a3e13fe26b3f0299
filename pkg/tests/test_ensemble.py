import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from unidec.ensemble import (
    Codebook,
    EnsembleConfig,
    acceptance_probability,
    generate_codebook,
    in_shell,
    load_codebook,
    log_mu_from_energy,
    log_mu_unnormalized,
    sample_codeword,
    save_codebook,
)
from unidec.errors import ConfigError, SamplingExhausted
from unidec.spectral import dft


class CountingGenerator:
    """Wraps a Generator and counts the vectors drawn through ``standard_normal``."""

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self.draws = 0

    def standard_normal(self, size):
        self.draws += 1
        return self._rng.standard_normal(size)


def test_config_validation():
    with pytest.raises(ConfigError):
        EnsembleConfig(0, 0.1)
    with pytest.raises(ConfigError):
        EnsembleConfig(8, -0.1)
    with pytest.raises(ConfigError):
        EnsembleConfig(8, 0.1, sigma_x_sq=0)
    for d in (0.0, 1.0, 1.5):
        with pytest.raises(ConfigError):
            EnsembleConfig(8, 0.1, delta=d)


@pytest.mark.parametrize("n,rate,M", [(64, 0.125, 256), (8, 0.25, 4), (10, 0.15, 3), (64, 1 / 32, 4), (5, 0.0, 1)])
def test_codebook_size(n, rate, M):
    assert EnsembleConfig(n, rate).M == M


def test_samples_lie_on_shell(rng):
    cfg = EnsembleConfig(16, 0.0, sigma_x_sq=2.0, delta=0.05)
    for _ in range(500):
        x = sample_codeword(cfg, rng)
        assert abs(x @ x / 16 - 2.0) <= 0.05 * 2.0


def test_acceptance_fraction_large_n():
    cfg = EnsembleConfig(10_000, 0.0)
    p_star = float(stats.chi2.cdf(11_000, 10_000) - stats.chi2.cdf(9_000, 10_000))
    g = CountingGenerator(3)
    for _ in range(200):
        sample_codeword(cfg, g)
    frac = 200 / g.draws
    assert 0.99 * p_star <= frac <= 1.01 * p_star


def test_acceptance_fraction_small_n():
    cfg = EnsembleConfig(32, 0.0, delta=0.1)
    p_star = acceptance_probability(cfg)
    # cross-check the helper against the chi-square tail oracle
    assert p_star == pytest.approx(stats.chi2.cdf(32 * 1.1, 32) - stats.chi2.cdf(32 * 0.9, 32))
    g = CountingGenerator(4)
    accepted = 5000
    for _ in range(accepted):
        sample_codeword(cfg, g)
    # number of draws is negative binomial; compare the rate within 3 s.e.
    frac = accepted / g.draws
    se = math.sqrt(p_star * p_star * (1 - p_star) / accepted)
    assert abs(frac - p_star) <= 3 * se


def test_sampling_exhaustion():
    cfg = EnsembleConfig(2, 0.0, delta=1e-9)
    with pytest.raises(SamplingExhausted):
        sample_codeword(cfg, np.random.default_rng(0), max_rejections=50)
    with pytest.raises(SamplingExhausted):
        generate_codebook(EnsembleConfig(2, 1.0, delta=1e-9), 0, max_rejections=50)


def test_sample_determinism():
    cfg = EnsembleConfig(32, 0.0)
    a = sample_codeword(cfg, np.random.default_rng(11))
    b = sample_codeword(cfg, np.random.default_rng(11))
    assert a.tobytes() == b.tobytes()


def _mean_square_and_se(cb):
    # codewords are the independent units, so the standard error uses per-row energies
    per_row = cb.energies / cb.config.n
    return float(per_row.mean()), float(per_row.std(ddof=1) / math.sqrt(per_row.size))


def test_per_coordinate_variance_large_n():
    cfg = EnsembleConfig(10_000, 0.0, sigma_x_sq=1.5, delta=0.1)
    rng = np.random.default_rng(5)
    cb = Codebook(np.array([sample_codeword(cfg, rng) for _ in range(100)]), cfg)
    mean, se = _mean_square_and_se(cb)
    assert abs(mean - 1.5) <= 3 * se


def test_mean_square_matches_truncated_chi_square():
    n, s2, d = 100, 1.5, 0.3
    cfg = EnsembleConfig(n, 14 / n, s2, d)
    cb = generate_codebook(cfg, 5)
    a, b = n * (1 - d), n * (1 + d)
    # E[chi2_n | a <= chi2_n <= b] = n (F_{n+2}(b) - F_{n+2}(a)) / (F_n(b) - F_n(a))
    expected = s2 * (stats.chi2.cdf(b, n + 2) - stats.chi2.cdf(a, n + 2)) / (stats.chi2.cdf(b, n) - stats.chi2.cdf(a, n))
    mean, se = _mean_square_and_se(cb)
    assert abs(mean - expected) <= 3 * se


def test_log_mu_on_exact_shell():
    cfg = EnsembleConfig(4, 0.0, sigma_x_sq=2.0)
    x = np.full(4, math.sqrt(2.0))
    assert log_mu_unnormalized(x, cfg) == pytest.approx(-2.0)


def test_log_mu_off_shell_is_minus_inf():
    cfg = EnsembleConfig(4, 0.0, sigma_x_sq=1.0, delta=0.1)
    x = np.full(4, math.sqrt(2 * 1.1))
    assert log_mu_unnormalized(x, cfg) == -math.inf
    assert not math.isnan(log_mu_unnormalized(x, cfg))


def test_log_mu_matches_direct_sum(rng):
    cfg = EnsembleConfig(20, 0.0, sigma_x_sq=0.7)
    for _ in range(50):
        x = sample_codeword(cfg, rng)
        assert log_mu_unnormalized(x, cfg) == pytest.approx(-sum(v * v for v in x) / 1.4, rel=1e-13)


def test_log_mu_length_check():
    with pytest.raises(ConfigError):
        log_mu_unnormalized(np.ones(3), EnsembleConfig(4, 0.0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_log_mu_is_unitarily_invariant(seed):
    cfg = EnsembleConfig(12, 0.0)
    x = sample_codeword(cfg, np.random.default_rng(seed))
    X = dft(x)
    assert log_mu_from_energy(float(np.vdot(X, X).real), cfg) == pytest.approx(log_mu_unnormalized(x, cfg), rel=1e-12)


def test_vectorized_log_mu():
    cfg = EnsembleConfig(10, 0.0)
    out = log_mu_from_energy(np.array([10.0, 30.0]), cfg)
    assert out[0] == -5.0 and out[1] == -np.inf


def test_two_codewords_differ():
    cb = generate_codebook(EnsembleConfig(8, 1 / 8), 1)
    assert len(cb) == 2
    assert not np.array_equal(cb[0], cb[1])


def test_codebook_determinism_and_size():
    cfg = EnsembleConfig(64, 0.125)
    a = generate_codebook(cfg, 42)
    b = generate_codebook(cfg, 42)
    assert len(a) == 256
    assert a.codewords.tobytes() == b.codewords.tobytes()
    assert a.seed == 42
    assert all(in_shell(x, cfg) for x in a.codewords)
    np.testing.assert_allclose(a.energies, np.sum(a.codewords**2, axis=1))


def test_codebook_seed_sequence_and_rng_agree():
    cfg = EnsembleConfig(16, 0.25)
    ss = np.random.SeedSequence(9, spawn_key=(1,))
    a = generate_codebook(cfg, ss)
    b = generate_codebook(cfg, rng=np.random.default_rng(np.random.SeedSequence(9, spawn_key=(1,))))
    assert np.array_equal(a.codewords, b.codewords)


def test_codebook_size_limit():
    with pytest.raises(ConfigError):
        generate_codebook(EnsembleConfig(64, 0.5), 0)


def test_codebook_shape_check():
    with pytest.raises(ConfigError):
        Codebook(np.zeros((2, 5)), EnsembleConfig(4, 0.25))


@pytest.mark.parametrize("fmt", ["bin", "csv"])
def test_codebook_serialization_round_trip(tmp_path, fmt):
    cfg = EnsembleConfig(8, 0.5)
    cb = generate_codebook(cfg, 3)
    path = tmp_path / f"cb.{fmt}"
    save_codebook(cb, path, fmt)
    back = load_codebook(path, cfg, fmt, seed=3)
    assert back.codewords.tobytes() == cb.codewords.tobytes()
    if fmt == "bin":
        assert path.read_bytes() == cb.codewords.astype("<f8").tobytes()
        assert path.stat().st_size == len(cb) * 8 * 8


def test_codebook_bad_format(tmp_path):
    cb = generate_codebook(EnsembleConfig(4, 0.5), 0)
    with pytest.raises(ConfigError):
        save_codebook(cb, tmp_path / "x", "npz")
    (tmp_path / "odd.bin").write_bytes(b"\0" * 24)
    with pytest.raises(ConfigError):
        load_codebook(tmp_path / "odd.bin", EnsembleConfig(4, 0.5))
