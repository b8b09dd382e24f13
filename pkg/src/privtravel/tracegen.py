"""Synthetic road networks and GPS trips, plus record subsampling.

Speeds follow an inverse Weibull (Frechet) law with CDF
``F(x) = exp(-(x / s) ** -k)``, fitted to a target mean and variance.
Each trip starts at the route origin and logs ``n`` records every ``tau``
seconds at constant speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .geometry import RoadNetwork, Route, Trajectory

DEFAULT_ROAD_LENGTH_M = 4800.0
DEFAULT_ROAD_SPACING_M = 100.0

_K_MIN = 2.0
_K_MAX = 1e6


class FitError(ValueError):
    pass


def _frechet_cv2(k: float) -> float:
    """Squared coefficient of variation of a Frechet law with shape ``k > 2``."""
    return math.expm1(special.gammaln(1 - 2 / k) - 2 * special.gammaln(1 - 1 / k))


@dataclass(frozen=True)
class SpeedModel:
    """Frechet speed distribution (m/s) with shape ``k`` and scale ``s``."""

    k: float
    s: float

    def __post_init__(self):
        if not (self.k > 2 and self.s > 0):
            raise FitError("need shape k > 2 and scale s > 0 for a finite variance")

    @classmethod
    def fit(cls, mean: float, variance: float) -> "SpeedModel":
        return cls(*fit_inverse_weibull(mean, variance))

    @property
    def mean(self) -> float:
        return self.s * special.gamma(1 - 1 / self.k)

    @property
    def variance(self) -> float:
        g1 = special.gamma(1 - 1 / self.k)
        return self.s ** 2 * (special.gamma(1 - 2 / self.k) - g1 * g1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            res = np.where(x > 0, np.exp(-(np.where(x > 0, x, 1.0) / self.s) ** -self.k), 0.0)
        return float(res) if res.ndim == 0 else res

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws ``s * (-ln U) ** (-1/k)``; ``-ln U`` is drawn as Exp(1)."""
        return self.s * rng.standard_exponential(size) ** (-1.0 / self.k)


def fit_inverse_weibull(mean: float, variance: float) -> tuple[float, float]:
    """Frechet ``(k, s)`` with the given mean and variance.

    Solves ``Gamma(1-2/k) / Gamma(1-1/k)**2 - 1 = variance / mean**2`` for
    ``k`` by bracketed root finding, then ``s = mean / Gamma(1-1/k)``.
    """
    if not (mean > 0 and variance > 0):
        raise FitError("mean and variance must be positive")
    target = variance / mean ** 2
    lo, hi = _K_MIN * (1 + 1e-12), _K_MAX
    if not _frechet_cv2(hi) < target:
        raise FitError(f"variance {variance} too small relative to the mean to fit")
    if not _frechet_cv2(lo) > target:
        raise FitError("no Frechet shape k > 2 matches this variance")
    # the CV is monotone in k; solving in log k spreads the bracket evenly
    f = lambda logk: math.log(_frechet_cv2(math.exp(logk))) - math.log(target)
    logk = optimize.brentq(f, math.log(lo), math.log(hi), xtol=1e-15, rtol=4 * np.finfo(float).eps,
                           maxiter=500)
    k = math.exp(logk)
    s = mean / special.gamma(1 - 1 / k)
    return k, s


def make_network(kind: str = "single-road", length: float = DEFAULT_ROAD_LENGTH_M,
                 spacing: float = DEFAULT_ROAD_SPACING_M) -> tuple[RoadNetwork, Route]:
    """Straight west-to-east test network and its target route.

    ``single-road``: road 1 from ``(0, 0)`` to ``(length, 0)``.
    ``three-parallel-roads``: roads 1, 2, 3 at ``y = 0, spacing, 2 spacing``;
    the target route is road 1.
    """
    if not length > 0:
        raise ValueError("length must be positive")
    if kind == "single-road":
        net = RoadNetwork([(1, [(0.0, 0.0), (length, 0.0)])])
    elif kind == "three-parallel-roads":
        if not spacing > 0:
            raise ValueError("spacing must be positive")
        net = RoadNetwork([(i + 1, [(0.0, i * spacing), (length, i * spacing)]) for i in range(3)])
    else:
        raise ValueError(f"unknown network kind {kind!r}")
    return net, Route(net, [(1, False)])


@dataclass(frozen=True)
class SyntheticTrip:
    trajectory: Trajectory
    speed: float
    route: Route
    clamped: bool  # some records would have passed the route end


def generate_trajectory(route: Route, speed: float, tau: float = 20.0, n: int = 10,
                        traj_id="0", start: float = 0.0) -> SyntheticTrip:
    """Constant-speed trip along ``route``: record ``j`` at arc ``start + speed tau j``."""
    if not speed > 0:
        raise ValueError("speed must be positive")
    if n < 1 or not tau > 0:
        raise ValueError("need n >= 1 and tau > 0")
    arcs = start + speed * tau * np.arange(n)
    clamped = bool(np.any(arcs > route.length))
    xy = np.array([route.point_at(a) for a in arcs])
    ts = tau * np.arange(n, dtype=float)
    return SyntheticTrip(Trajectory(str(traj_id), ts, xy), float(speed), route, clamped)


@dataclass(frozen=True)
class SyntheticDataset:
    network: RoadNetwork
    route: Route
    trips: list

    @property
    def trajectories(self) -> list[Trajectory]:
        return [t.trajectory for t in self.trips]


def simulate_experiment(experiment: int, trips: int = 1000, mean: float = 24.0, variance: float = 8.0,
                        tau: float = 20.0, n: int = 10, rng=None, length: float = DEFAULT_ROAD_LENGTH_M,
                        spacing: float = DEFAULT_ROAD_SPACING_M,
                        off_route_fraction: float = 0.0) -> SyntheticDataset:
    """Regenerate the synthetic single-road (1) or three-parallel-road (2) setting.

    With ``off_route_fraction > 0`` in setting 2, that share of trips travel
    on road 2 or 3 instead of the target road.
    """
    rng = np.random.default_rng(rng)
    if experiment == 1:
        net, route = make_network("single-road", length)
    elif experiment == 2:
        net, route = make_network("three-parallel-roads", length, spacing)
    else:
        raise ValueError("only the synthetic settings 1 and 2 can be simulated")
    if not 0 <= off_route_fraction <= 1:
        raise ValueError("off_route_fraction must be in [0, 1]")
    model = SpeedModel.fit(mean, variance)
    speeds = model.sample(trips, rng)
    side_roads = {}
    if experiment == 2 and off_route_fraction > 0:
        off = rng.random(trips) < off_route_fraction
        road = rng.integers(2, 4, size=trips)
        side_roads = {i: Route(net, [(int(road[i]), False)]) for i in np.flatnonzero(off)}
    width = len(str(trips - 1))
    out = [generate_trajectory(side_roads.get(i, route), speeds[i], tau, n, traj_id=f"{i:0{width}d}")
           for i in range(trips)]
    return SyntheticDataset(net, route, out)


def subsample_records(t: Trajectory, n_max: int, strategy: str = "equal-spaced", rng=None) -> Trajectory:
    """Keep at most ``n_max`` records, in time order.

    ``equal-spaced`` keeps indices ``round(j (n_i - 1) / (n_max - 1))``;
    ``random`` keeps a uniformly random subset.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    n = len(t)
    if n <= n_max:
        return t
    if strategy == "equal-spaced":
        idx = np.floor(np.arange(n_max) * (n - 1) / (n_max - 1) + 0.5).astype(int)
    elif strategy == "random":
        if rng is None:
            raise ValueError("random subsampling needs an rng")
        idx = np.sort(rng.choice(n, size=n_max, replace=False))
    else:
        raise ValueError(f"unknown subsampling strategy {strategy!r}")
    return Trajectory(t.traj_id, t.timestamps[idx], t.xy[idx])
