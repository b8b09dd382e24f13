"""Planar Laplace mechanism for geo-indistinguishable location release.

A location ``(x, y)`` is released as ``(x + r cos(theta), y + r sin(theta))``
with ``theta ~ Uniform[0, 2 pi)`` and ``r ~ Gamma(shape=2, rate=epsilon)``.
The shape-2 gamma is Erlang-2, so ``r`` is drawn exactly as the sum of two
independent exponential(epsilon) variates.

``epsilon`` is a unit-distance loss in 1/meters. ``epsilon = inf`` is
accepted and yields zero noise, which the pipeline uses for noise-free
reference runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PlanarPoint, Trajectory


class PrivacyBudgetError(ValueError):
    pass


def _check_epsilon(epsilon) -> float:
    eps = float(epsilon)
    if math.isnan(eps) or eps <= 0:
        raise PrivacyBudgetError(f"epsilon must be positive, got {epsilon!r}")
    return eps


@dataclass(frozen=True)
class PrivacyBudget:
    """Per-trajectory loss and the per-record share actually spent on each point."""

    epsilon_total: float
    epsilon_record: float

    def __post_init__(self):
        _check_epsilon(self.epsilon_total)
        _check_epsilon(self.epsilon_record)
        if self.epsilon_record > self.epsilon_total * (1 + 1e-12):
            raise PrivacyBudgetError("per-record epsilon exceeds the trajectory total")

    @classmethod
    def for_trajectory(cls, epsilon_total: float, n_records: int) -> "PrivacyBudget":
        """Uniform split of ``epsilon_total`` over ``n_records`` records."""
        if n_records < 1:
            raise PrivacyBudgetError("a trajectory needs at least one record")
        eps = _check_epsilon(epsilon_total)
        return cls(eps, eps / n_records)

    @property
    def n_records(self) -> float:
        return self.epsilon_total / self.epsilon_record


@dataclass(frozen=True)
class PolarNoise:
    """Polar displacement; ``r`` and ``theta`` are scalars or equal-shape arrays."""

    r: np.ndarray | float
    theta: np.ndarray | float

    def offsets(self) -> np.ndarray:
        r = np.asarray(self.r, dtype=float)
        th = np.asarray(self.theta, dtype=float)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def sample_polar_noise(epsilon, rng: np.random.Generator, size=None) -> PolarNoise:
    """Draw planar Laplace noise at unit-distance loss ``epsilon``.

    Parameters
    ----------
    epsilon : float
        Loss per meter, > 0 (``inf`` gives zero displacement).
    rng : numpy.random.Generator
    size : int, optional
        Number of independent draws. ``None`` returns scalars.

    Returns
    -------
    PolarNoise
    """
    eps = _check_epsilon(epsilon)
    n = 1 if size is None else int(size)
    e = rng.standard_exponential((n, 2))
    r = (e[:, 0] + e[:, 1]) / eps
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    if size is None:
        return PolarNoise(float(r[0]), float(theta[0]))
    return PolarNoise(r, theta)


def sanitize_point(p, epsilon, rng: np.random.Generator | None = None, noise: PolarNoise | None = None) -> PlanarPoint:
    """Release one location under ``epsilon``-geo-indistinguishability.

    ``noise`` overrides sampling, which is how fixed displacements are
    applied in tests.
    """
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise is required")
        noise = sample_polar_noise(epsilon, rng)
    else:
        _check_epsilon(epsilon)
    r, th = float(noise.r), float(noise.theta)
    return PlanarPoint(float(p[0]) + r * math.cos(th), float(p[1]) + r * math.sin(th))


def sanitize_points(xy, epsilon, rng: np.random.Generator) -> np.ndarray:
    """Independently sanitize every row of an ``(n, 2)`` array."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    noise = sample_polar_noise(epsilon, rng, size=xy.shape[0])
    return xy + noise.offsets()


def sanitize_trajectory(t: Trajectory, budget, rng: np.random.Generator) -> Trajectory:
    """Sanitize each record of ``t`` at the per-record share of ``budget``.

    ``budget`` is a :class:`PrivacyBudget` or a per-trajectory total, which is
    split uniformly over the actual number of records in ``t``.
    """
    n = len(t)
    if n == 0:
        raise PrivacyBudgetError("cannot sanitize an empty trajectory")
    if not isinstance(budget, PrivacyBudget):
        budget = PrivacyBudget.for_trajectory(budget, n)
    expected = budget.epsilon_total / n
    if not math.isclose(budget.epsilon_record, expected, rel_tol=1e-12):
        raise PrivacyBudgetError(
            f"trajectory {t.traj_id!r} has {n} records; per-record epsilon should be "
            f"{expected!r}, got {budget.epsilon_record!r}")
    return t.with_points(sanitize_points(t.xy, budget.epsilon_record, rng))
