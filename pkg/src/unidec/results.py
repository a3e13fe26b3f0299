"""Error-rate summaries, exponent gaps and their CSV/JSON serialization.

Floats are written with ``repr`` so emitted files round-trip exactly and are
byte-identical for identical results. Wall time is kept in memory only.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from scipy.stats import binomtest

from .errors import ConfigError

__all__ = [
    "CSV_COLUMNS",
    "DecoderStats",
    "ExperimentResult",
    "GapRow",
    "decoder_stats",
    "emit_gap_table",
    "emit_results",
    "gap_row",
    "parse_results",
    "wilson_interval",
]

CSV_COLUMNS = (
    "n", "rate", "snr_db", "k", "k_dec", "decoder", "delta", "trials",
    "errors", "p_hat", "ci_lo", "ci_hi", "exponent_hat", "seed",
)
GAP_COLUMNS = ("n", "p_ml", "p_universal", "gap", "gap_lo", "gap_hi", "one_sided")


def wilson_interval(errors: int, trials: int) -> tuple[float, float]:
    """95% Wilson score interval; rule-of-three ``[0, 3/trials]`` for zero errors."""
    if not 0 <= errors <= max(trials, 0):
        raise ConfigError(f"error count {errors} outside [0, {trials}]")
    if trials < 1:
        return (math.nan, math.nan)
    if errors == 0:
        return (0.0, min(1.0, 3.0 / trials))
    ci = binomtest(errors, trials).proportion_ci(0.95, method="wilson")
    return (float(ci.low), float(ci.high))


@dataclass(frozen=True)
class DecoderStats:
    """One (n, decoder, delta) row. ``exponent_is_bound`` marks a rule-of-three estimate."""

    n: int
    rate: float
    snr_db: float
    k: int
    k_dec: int
    decoder: str
    delta: float | None
    trials: int
    errors: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    exponent_hat: float
    seed: int
    exponent_is_bound: bool = False

    @property
    def width(self) -> float:
        return self.ci_hi - self.ci_lo


def decoder_stats(*, n, rate, snr_db, k, k_dec, decoder, delta, trials, errors, seed) -> DecoderStats:
    errors, trials = int(errors), int(trials)
    if not 0 <= errors <= trials:
        raise ConfigError(f"error count {errors} outside [0, {trials}]")
    lo, hi = wilson_interval(errors, trials)
    if trials == 0:
        p = expo = math.nan
        bound = False
    elif errors == 0:
        p = 0.0
        expo = -math.log(hi) / n
        bound = True
    else:
        p = errors / trials
        expo = -math.log(p) / n + 0.0  # p = 1 would otherwise print -0.0
        bound = False
    return DecoderStats(
        int(n), float(rate), float(snr_db), int(k), int(k_dec), decoder,
        None if delta is None else float(delta), int(trials), int(errors),
        p, lo, hi, expo, int(seed), bound,
    )


@dataclass(frozen=True)
class ExperimentResult:
    """Rows for every (n, decoder, delta) plus run metadata.

    ``invalid`` lists ``(n, count)`` pairs of trials excluded because every
    universal metric was degenerate. ``delta_nesting_violations`` counts trials
    where a smaller delta erred but a larger one did not (always 0 for a
    correct implementation).
    """

    config: Any
    rows: tuple[DecoderStats, ...]
    invalid: tuple[tuple[int, int], ...] = ()
    delta_nesting_violations: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def config_hash(self) -> str:
        return self.config.config_hash() if self.config is not None else ""

    @property
    def seed(self) -> int | None:
        return None if self.config is None else self.config.root_seed

    def row(self, n: int, decoder: str, delta: float | None = None) -> DecoderStats:
        for r in self.rows:
            if r.n == n and r.decoder == decoder and r.delta == delta:
                return r
        raise KeyError((n, decoder, delta))


@dataclass(frozen=True)
class GapRow:
    """``gap = (1/n)|log p_univ - log p_ml|`` with the range implied by both intervals."""

    n: int
    p_ml: float
    p_universal: float
    gap: float
    gap_lo: float
    gap_hi: float
    one_sided: bool

    @property
    def width(self) -> float:
        return self.gap_hi - self.gap_lo


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def gap_row(ml: DecoderStats, univ: DecoderStats) -> GapRow:
    """Exponent gap at one block length.

    A zero error count is replaced by its rule-of-three upper limit and the row
    is flagged one-sided.
    """
    if ml.n != univ.n:
        raise ConfigError("gap rows compare decoders at the same block length")
    n = ml.n
    one_sided = ml.errors == 0 or univ.errors == 0
    pm = ml.p_hat if ml.errors else ml.ci_hi
    pu = univ.p_hat if univ.errors else univ.ci_hi
    gap = abs(math.log(pu) - math.log(pm)) / n
    # difference of logs ranges over [lo_u - hi_m, hi_u - lo_m]
    d_lo = _log(univ.ci_lo) - _log(ml.ci_hi)
    d_hi = _log(univ.ci_hi) - _log(ml.ci_lo)
    if d_lo <= 0 <= d_hi:
        g_lo = 0.0
    else:
        g_lo = min(abs(d_lo), abs(d_hi)) / n
    g_hi = max(abs(d_lo), abs(d_hi)) / n
    return GapRow(n, pm, pu, gap, g_lo, g_hi, one_sided)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path, text: str) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def results_csv(result: ExperimentResult | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.rows if result is not None else ():
        w.writerow(_fmt(getattr(r, c)) for c in CSV_COLUMNS)
    return buf.getvalue()


def results_json(result: ExperimentResult) -> str:
    doc = {
        "config": None if result.config is None else result.config.to_mapping(),
        "config_hash": result.config_hash,
        "seed": result.seed,
        "rows": [asdict(r) for r in result.rows],
        "invalid": [list(p) for p in result.invalid],
        "delta_nesting_violations": result.delta_nesting_violations,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def emit_results(result: ExperimentResult | None, fmt: str, path) -> None:
    """Write ``result`` as CSV (one row per (n, decoder, delta)) or JSON."""
    if fmt == "csv":
        _write(path, results_csv(result))
    elif fmt == "json":
        if result is None:
            raise ConfigError("JSON output needs a result")
        _write(path, results_json(result))
    else:
        raise ConfigError(f"unknown output format {fmt!r}")


def parse_results(text: str) -> ExperimentResult:
    """Inverse of the JSON form of :func:`emit_results`."""
    from .harness import ExperimentConfig

    doc = json.loads(text)
    names = {f.name for f in fields(DecoderStats)}
    rows = tuple(DecoderStats(**{k: v for k, v in r.items() if k in names}) for r in doc["rows"])
    cfg = None if doc["config"] is None else ExperimentConfig.from_mapping(doc["config"])
    return ExperimentResult(
        cfg,
        rows,
        tuple((int(a), int(b)) for a, b in doc["invalid"]),
        int(doc["delta_nesting_violations"]),
    )


def emit_gap_table(gaps, path) -> None:
    """CSV table of exponent gaps, one row per block length."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GAP_COLUMNS)
    for g in gaps:
        w.writerow(_fmt(getattr(g, c)) for c in GAP_COLUMNS)
    _write(path, buf.getvalue())
