"""Travel-time distributions from (sanitized) map-matched trajectories.

Per trajectory, only consecutive record pairs that both fall on the target
route contribute: their signed arc displacements sum to ``d_star`` and
their time gaps to ``delta_t``. A trajectory is usable when it has at
least one such pair and ``d_star >= 0``; it then yields speed
``d_star / delta_t``, predicted route time ``d / speed`` and weight
``min(d_star / d, 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .geometry import Route
from .mapmatch import MappedTrajectory


class NoDataError(ValueError):
    """Raised when a distribution is requested from an empty sample."""


@dataclass(frozen=True)
class TrajectoryEvaluation:
    traj_id: str
    d_star: float
    delta_t: float
    usable: bool
    s_star: float = math.nan
    t_star: float = math.nan
    weight: float = 0.0
    n_pairs: int = 0
    diagnostic: str = ""

    @property
    def contributes(self) -> bool:
        """Usable with a defined travel time."""
        return self.usable and math.isfinite(self.t_star)


def evaluate_trajectory(route: Route, mapped: MappedTrajectory) -> TrajectoryEvaluation:
    """Signed on-route distance, observed time, speed, travel time and weight."""
    on = np.asarray(mapped.on_route, dtype=bool)
    pair = on[1:] & on[:-1]
    n_pairs = int(pair.sum())
    if n_pairs == 0:
        reason = "fewer than two records" if len(on) < 2 else "no consecutive on-route pair"
        return TrajectoryEvaluation(mapped.traj_id, 0.0, 0.0, False, diagnostic=reason)
    arc = np.asarray(mapped.arc_pos, dtype=float)
    ts = np.asarray(mapped.timestamps, dtype=float)
    d_star = 0.0
    delta_t = 0.0
    # sequential accumulation keeps results independent of numpy's summation order
    for j in np.flatnonzero(pair) + 1:
        d_star += float(arc[j] - arc[j - 1])
        delta_t += float(ts[j] - ts[j - 1])
    if d_star < 0:
        return TrajectoryEvaluation(mapped.traj_id, d_star, delta_t, False, n_pairs=n_pairs,
                                    diagnostic="negative net route distance")
    if d_star == 0:
        return TrajectoryEvaluation(mapped.traj_id, d_star, delta_t, True, n_pairs=n_pairs,
                                    diagnostic="zero net route distance")
    if delta_t <= 0:
        return TrajectoryEvaluation(mapped.traj_id, d_star, delta_t, False, n_pairs=n_pairs,
                                    diagnostic="degenerate-speed")
    d = route.length
    s_star = d_star / delta_t
    return TrajectoryEvaluation(mapped.traj_id, d_star, delta_t, True, s_star=s_star,
                                t_star=d / s_star, weight=min(d_star / d, 1.0), n_pairs=n_pairs)


def build_usable_set(evals: Sequence[TrajectoryEvaluation]) -> list[TrajectoryEvaluation]:
    return [e for e in evals if e.usable]


def effective_k(weights) -> float:
    """Effective number of mapped full trajectories: the sum of weights."""
    w = np.asarray(list(weights), dtype=float)
    if w.size and (np.any(w < 0) or np.any(w > 1)):
        raise ValueError("weights must lie in [0, 1]")
    return float(math.fsum(w))


class EmpiricalCdf:
    """Right-continuous step ECDF of a sample of travel times."""

    def __init__(self, times):
        t = np.sort(np.asarray(list(times) if not isinstance(times, np.ndarray) else times, dtype=float))
        if t.size == 0:
            raise NoDataError("no data: empty travel-time sample")
        if not np.all(np.isfinite(t)):
            raise ValueError("travel times must be finite")
        self.times = t
        self.n = t.size
        self._levels = np.arange(1, self.n + 1) / self.n

    def __call__(self, t):
        """Fraction of the sample ``<= t``."""
        res = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") / self.n
        return float(res) if np.ndim(res) == 0 else res

    def quantile(self, p):
        """Smallest sample time ``t`` with ``F(t) >= p`` for ``p`` in (0, 1]."""
        p_arr = np.asarray(p, dtype=float)
        if np.any((p_arr <= 0) | (p_arr > 1)):
            raise ValueError("p must be in (0, 1]")
        k = np.searchsorted(self._levels, p_arr, side="left")
        res = self.times[np.minimum(k, self.n - 1)]
        return float(res) if np.ndim(res) == 0 else res

    def steps(self):
        """Distinct jump points and the ECDF value at each: ``(t, F)``."""
        t, counts = np.unique(self.times, return_counts=True)
        return t, np.cumsum(counts) / self.n

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"EmpiricalCdf(n={self.n}, min={self.times[0]:.3f}, max={self.times[-1]:.3f})"


def empirical_cdf(times) -> EmpiricalCdf:
    return EmpiricalCdf(times)


def query_arrival_probability(cdf: EmpiricalCdf, b) -> float:
    """Probability of finishing the route within ``b`` seconds."""
    return cdf(b)


def query_time_at_confidence(cdf: EmpiricalCdf, p) -> float:
    """Shortest time budget reached with confidence ``p``."""
    return cdf.quantile(p)


def weighted_tpu(times, weights, rng: np.random.Generator) -> EmpiricalCdf:
    """ECDF of ``round(K_eff)`` (at least 1) times resampled with replacement
    with probabilities proportional to ``weights``."""
    t = np.asarray(times, dtype=float)
    w = np.asarray(weights, dtype=float)
    if t.shape != w.shape:
        raise ValueError("times and weights must have equal length")
    total = effective_k(w)
    if not total > 0:
        raise NoDataError("no data: all weights are zero")
    k = max(1, int(math.floor(total + 0.5)))
    sample = rng.choice(t, size=k, replace=True, p=w / w.sum())
    return EmpiricalCdf(sample)


def ks_distance(a, b) -> float:
    """Sup-norm distance between two ECDFs (or the samples behind them)."""
    a = a.times if isinstance(a, EmpiricalCdf) else np.asarray(a, dtype=float)
    b = b.times if isinstance(b, EmpiricalCdf) else np.asarray(b, dtype=float)
    return float(stats.ks_2samp(a, b).statistic)


@dataclass
class TpuResult:
    """Aggregate outcome over ``K`` trajectories on one route."""

    route_length: float
    evaluations: list[TrajectoryEvaluation]
    usable: list[TrajectoryEvaluation] = field(init=False)

    def __post_init__(self):
        self.usable = build_usable_set(self.evaluations)

    @property
    def K(self) -> int:
        return len(self.evaluations)

    @property
    def usable_count(self) -> int:
        return len(self.usable)

    @property
    def K_eff(self) -> float:
        return effective_k(e.weight for e in self.usable)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t_star for e in self.usable if e.contributes])

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.usable if e.contributes])

    def cdf(self, weighted: bool = False, rng: np.random.Generator | None = None) -> EmpiricalCdf:
        if weighted:
            if rng is None:
                raise ValueError("weighted TPU needs an rng")
            return weighted_tpu(self.times, self.weights, rng)
        return EmpiricalCdf(self.times)

    def summary(self) -> dict:
        return {"K": self.K, "usable_count": self.usable_count, "K_eff": self.K_eff}


def run_tpu(route: Route, mapped: Sequence[MappedTrajectory]) -> TpuResult:
    return TpuResult(route.length, [evaluate_trajectory(route, m) for m in mapped])
