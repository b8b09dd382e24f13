"""Utility and adversary-error metrics for planar Laplace sanitization.

Utility: location usefulness (closed form), distance usefulness and
distance-deviation moments (Monte Carlo), and the closed-form relative
deviation of squared distance.

Adversary error: average distance between original and sanitized
trajectories, and the consecutive positioning degree (CPD), i.e. the
distribution of maximal runs of correctly located records under a
pluggable correctness rule (hard thresholding by default).
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .sanitizer import sample_polar_noise

_MC_CHUNK = 1_000_000
_MIN_RECOMMENDED_SAMPLES = 10_000
CPD_ORACLE_MAX_N = 14


class MonteCarloEstimate(NamedTuple):
    value: float
    stderr: float
    samples: int


def gamma2_cdf(x, rate):
    """CDF of Gamma(shape=2, rate): ``1 - (1 + rate x) exp(-rate x)``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        z = np.asarray(rate, dtype=float) * x
        res = -np.expm1(-z) - z * np.exp(-z)
    res = np.where(np.isinf(z), 1.0, res)
    res = np.where(x <= 0, 0.0, res)
    return float(res) if res.ndim == 0 else res


def usefulness_delta(epsilon, alpha):
    """Probability ``1 - delta`` that a sanitized location lies within ``alpha`` of the truth."""
    if np.any(np.asarray(epsilon) <= 0) or np.any(np.asarray(alpha) < 0):
        raise ValueError("epsilon must be > 0 and alpha >= 0")
    return gamma2_cdf(alpha, epsilon)


def _sanitized_pair_distances(d, epsilon, samples, rng):
    """Yield chunks of distances between two independently sanitized points ``d`` apart."""
    remaining = int(samples)
    while remaining > 0:
        m = min(remaining, _MC_CHUNK)
        a = sample_polar_noise(epsilon, rng, size=m).offsets()
        b = sample_polar_noise(epsilon, rng, size=m).offsets()
        yield np.hypot(d + b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])
        remaining -= m


def _check_mc_args(d, epsilon, samples):
    if not d > 0:
        raise ValueError("d must be positive")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if samples < _MIN_RECOMMENDED_SAMPLES:
        warnings.warn(f"{samples} Monte Carlo samples; standard error may be large", RuntimeWarning,
                      stacklevel=3)


def distance_usefulness(d, epsilon, alpha, samples=1_000_000, rng=None) -> MonteCarloEstimate:
    """Monte Carlo ``delta = Pr(|d*/d - 1| >= alpha)`` for a pair at distance ``d``.

    The mechanism is translation and rotation invariant, so the pair is
    placed at ``(0, 0)`` and ``(d, 0)``.
    """
    _check_mc_args(d, epsilon, samples)
    rng = np.random.default_rng(rng)
    if math.isinf(alpha):
        return MonteCarloEstimate(0.0, 0.0, int(samples))
    hits = 0
    for ds in _sanitized_pair_distances(d, epsilon, samples, rng):
        hits += int(np.count_nonzero(np.abs(ds / d - 1.0) >= alpha))
    p = hits / samples
    return MonteCarloEstimate(p, math.sqrt(p * (1 - p) / samples), int(samples))


@dataclass(frozen=True)
class DeviationReport:
    """Relative distance deviations. All values are unitless ratios."""

    expected_deviation: float
    rmsd: float
    squared_deviation_closed_form: float
    expected_deviation_stderr: float = 0.0
    squared_deviation_mc: float = math.nan
    squared_deviation_stderr: float = math.nan
    samples: int = 0


def squared_deviation_closed_form(d, epsilon):
    """``E(d*^2 / d^2 - 1) = 12 / (d epsilon)^2``."""
    d = np.asarray(d, dtype=float)
    eps = np.asarray(epsilon, dtype=float)
    if np.any(d <= 0) or np.any(eps <= 0):
        raise ValueError("d and epsilon must be positive")
    res = 12.0 / (d * eps) ** 2
    return float(res) if res.ndim == 0 else res


def deviation_moments(d, epsilon, samples=1_000_000, rng=None) -> DeviationReport:
    """Monte Carlo mean and RMS of ``d*/d - 1``, plus the squared-distance deviation."""
    _check_mc_args(d, epsilon, samples)
    rng = np.random.default_rng(rng)
    closed = squared_deviation_closed_form(d, epsilon)
    if math.isinf(epsilon):
        return DeviationReport(0.0, 0.0, closed, 0.0, 0.0, 0.0, int(samples))
    s1 = s2 = q1 = q2 = 0.0
    for ds in _sanitized_pair_distances(d, epsilon, samples, rng):
        rel = ds / d - 1.0
        sq = (ds / d) ** 2 - 1.0
        s1 += rel.sum()
        s2 += (rel * rel).sum()
        q1 += sq.sum()
        q2 += (sq * sq).sum()
    n = float(samples)
    mean = s1 / n
    msq = s2 / n
    qmean = q1 / n
    return DeviationReport(
        expected_deviation=mean,
        rmsd=math.sqrt(msq),
        squared_deviation_closed_form=closed,
        expected_deviation_stderr=math.sqrt(max(msq - mean * mean, 0.0) / n),
        squared_deviation_mc=qmean,
        squared_deviation_stderr=math.sqrt(max(q2 / n - qmean * qmean, 0.0) / n),
        samples=int(samples),
    )


def _paired(orig, san):
    """Validate and yield ``(id, orig_xy, san_xy)`` for paired trajectories."""
    orig = list(orig)
    san = list(san)
    if len(orig) != len(san):
        raise ValueError(f"{len(orig)} original trajectories but {len(san)} sanitized")
    for o, s in zip(orig, san):
        oid = getattr(o, "traj_id", None)
        if oid != getattr(s, "traj_id", None):
            raise ValueError(f"trajectory {oid!r} is paired with {getattr(s, 'traj_id', None)!r}")
        if len(o.xy) != len(s.xy):
            raise ValueError(f"trajectory {oid!r}: {len(o.xy)} original records, {len(s.xy)} sanitized")
        if not np.array_equal(o.timestamps, s.timestamps):
            raise ValueError(f"trajectory {oid!r}: timestamps differ")
        yield oid, np.asarray(o.xy, dtype=float), np.asarray(s.xy, dtype=float)


def trajectory_distances(orig, san) -> np.ndarray:
    """Per-trajectory mean distance between paired records."""
    return np.array([np.hypot(*(s - o).T).mean() for _, o, s in _paired(orig, san)])


def average_distance(orig, san) -> float:
    """Mean over trajectories of the per-trajectory mean record distance.

    Accepts any objects with ``traj_id``, ``timestamps`` and ``xy``
    (trajectories or map-matched trajectories).
    """
    per = trajectory_distances(orig, san)
    if per.size == 0:
        raise ValueError("no trajectories")
    return float(per.mean())


def cpd_hit_probability(C, epsilon_total, n):
    """Probability that one sanitized record lies within ``C`` of the truth."""
    if np.any(np.asarray(C) < 0):
        raise ValueError("clip radius must be non-negative")
    return gamma2_cdf(C, np.asarray(epsilon_total, dtype=float) / n)


def hard_threshold(orig_xy, san_xy, C) -> np.ndarray:
    """Correctness indicator: sanitized record within ``C`` of the original."""
    o = np.asarray(orig_xy, dtype=float)
    s = np.asarray(san_xy, dtype=float)
    return np.hypot(s[..., 0] - o[..., 0], s[..., 1] - o[..., 1]) <= C


def run_length_counts(e) -> np.ndarray:
    """Counts of maximal runs of ones for each row of a 0/1 matrix.

    Returns an integer array of shape ``(K, n + 1)`` whose column ``l``
    holds the number of maximal runs of exactly ``l`` ones; column 0 is 1
    exactly for all-zero rows.
    """
    e = np.atleast_2d(np.asarray(e, dtype=bool))
    k, n = e.shape
    counts = np.zeros((k, n + 1), dtype=np.int64)
    padded = np.zeros((k, n + 2), dtype=np.int8)
    padded[:, 1:-1] = e
    step = np.diff(padded, axis=1)
    rs, cs = np.nonzero(step == 1)
    _, ce = np.nonzero(step == -1)
    # nonzero scans row-major, so starts and ends pair up in order
    np.add.at(counts, (rs, ce - cs), 1)
    counts[~e.any(axis=1), 0] = 1
    return counts


@dataclass(frozen=True)
class CpdReport:
    counts: np.ndarray          # (K, n + 1) run counts per trajectory
    p_l: np.ndarray             # normalized over all counted runs
    mean_correct: float         # mean of sum_l l * n_i^(l)
    m_distribution: np.ndarray  # fraction of trajectories with m correct records

    @property
    def n(self) -> int:
        return self.counts.shape[1] - 1

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def mean_counts(self) -> np.ndarray:
        return self.counts.mean(axis=0)


def cpd_from_indicators(e) -> CpdReport:
    e = np.atleast_2d(np.asarray(e, dtype=bool))
    counts = run_length_counts(e)
    total = counts.sum()
    p_l = counts.sum(axis=0) / total if total else np.zeros(counts.shape[1])
    n = e.shape[1]
    mean_correct = float((counts * np.arange(n + 1)).sum(axis=1).mean())
    m = np.bincount(e.sum(axis=1), minlength=n + 1) / e.shape[0]
    return CpdReport(counts, p_l, mean_correct, m)


def cpd(orig, san, C, correctness: Callable = hard_threshold) -> CpdReport:
    """Consecutive positioning degree of sanitized against original trajectories.

    ``orig`` and ``san`` are ``(K, n, 2)`` arrays or paired sequences of
    trajectory-like objects, all with the same ``n``. ``correctness`` maps
    ``(orig_xy, san_xy, C)`` to a boolean array.
    """
    if isinstance(orig, np.ndarray) and isinstance(san, np.ndarray):
        o, s = np.asarray(orig, dtype=float), np.asarray(san, dtype=float)
        if o.shape != s.shape or o.ndim != 3:
            raise ValueError("expected matching (K, n, 2) arrays")
    else:
        pairs = list(_paired(orig, san))
        if not pairs:
            raise ValueError("no trajectories")
        lengths = {len(p[1]) for p in pairs}
        if len(lengths) != 1:
            raise ValueError(f"CPD needs a common record count, got {sorted(lengths)}")
        o = np.stack([p[1] for p in pairs])
        s = np.stack([p[2] for p in pairs])
    return cpd_from_indicators(correctness(o, s, C))


@dataclass(frozen=True)
class CpdOracle:
    expected_counts: np.ndarray
    p_l: np.ndarray
    mean_correct: float
    m_distribution: np.ndarray


def _literal_run_counts(e: Sequence[int]) -> list[int]:
    """Run counting written out window by window, as a reference."""
    n = len(e)
    ext = [0] + list(e) + [0]
    c = [0] * (n + 1)
    c[0] = int(all(v == 0 for v in e))
    c[n] = int(all(v == 1 for v in e))
    for l in range(1, n):
        for j in range(1, n - l + 2):
            if all(ext[jj] == 1 for jj in range(j, j + l)) and ext[j - 1] == 0 and ext[j + l] == 0:
                c[l] += 1
    return c


def cpd_exact_oracle(n: int, p: float) -> CpdOracle:
    """Exact CPD expectations by enumerating all ``2**n`` correctness vectors."""
    if not 1 <= n <= CPD_ORACLE_MAX_N:
        raise ValueError(f"oracle enumerates 2**n vectors; n must be in [1, {CPD_ORACLE_MAX_N}]")
    if not 0 <= p <= 1:
        raise ValueError("p must be a probability")
    expected = [0.0] * (n + 1)
    m_dist = [0.0] * (n + 1)
    for e in itertools.product((0, 1), repeat=n):
        ones = sum(e)
        w = p ** ones * (1 - p) ** (n - ones)
        m_dist[ones] += w
        for l, c in enumerate(_literal_run_counts(e)):
            expected[l] += w * c
    expected = np.array(expected)
    return CpdOracle(expected, expected / expected.sum(),
                     float(sum(l * v for l, v in enumerate(expected))), np.array(m_dist))
