"""Planar geometry and trajectory data types shared by every stage.

All internal coordinates are meters in a local east/north frame. Lat/lon
input is converted once, at ingestion, with an equirectangular projection
about a per-dataset origin.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, NamedTuple, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_N_MAX = 10

# Two route steps are considered joined when their endpoints are this close.
_JOIN_TOL_M = 1e-6


class GeometryError(ValueError):
    """Invalid geometry or trajectory input."""


class PlanarPoint(NamedTuple):
    x: float
    y: float


class GpsRecord(NamedTuple):
    point: PlanarPoint
    timestamp: float


def project_latlon(lat, lon, origin, record_id=None):
    """Equirectangular projection of WGS84 degrees to local planar meters.

    Parameters
    ----------
    lat, lon : float or array_like
        Coordinates in degrees.
    origin : (float, float)
        ``(lat0, lon0)`` of the local frame, in degrees.
    record_id : optional
        Included in the error message when a coordinate is out of range.

    Returns
    -------
    x, y : float or ndarray
        East and north offsets in meters.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    lat0, lon0 = (float(v) for v in origin)
    _check_latlon(lat, lon, record_id)
    _check_latlon(np.asarray(lat0), np.asarray(lon0), "origin")
    k = EARTH_RADIUS_M * np.pi / 180.0
    x = (lon - lon0) * np.cos(np.radians(lat0)) * k
    y = (lat - lat0) * k
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def inverse_project(x, y, origin):
    """Inverse of :func:`project_latlon`; returns ``(lat, lon)`` in degrees."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lat0, lon0 = (float(v) for v in origin)
    k = EARTH_RADIUS_M * np.pi / 180.0
    lat = lat0 + y / k
    lon = lon0 + x / (np.cos(np.radians(lat0)) * k)
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon


def _check_latlon(lat, lon, record_id):
    bad = ~(np.isfinite(lat) & np.isfinite(lon) & (np.abs(lat) <= 90) & (np.abs(lon) <= 180))
    if np.any(bad):
        where = f" (record {record_id})" if record_id is not None else ""
        raise GeometryError(f"latitude/longitude out of range{where}")


def euclidean_distance(a, b):
    """Euclidean distance between points (or row-wise between point arrays)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])
    return float(d) if d.ndim == 0 else d


def polyline_length(polyline) -> float:
    pts = np.asarray(polyline, dtype=float)
    return float(np.hypot(*np.diff(pts, axis=0).T).sum())


@dataclass(eq=False)
class Trajectory:
    """One traveler's timestamped planar positions.

    ``xy`` has shape ``(n, 2)``; ``timestamps`` has shape ``(n,)`` and is
    strictly increasing.
    """

    traj_id: str
    timestamps: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        self.traj_id = str(self.traj_id)
        self.timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        n = self.timestamps.shape[0]
        if n < 1:
            raise GeometryError(f"trajectory {self.traj_id!r} is empty")
        if self.xy.shape[0] != n:
            raise GeometryError(f"trajectory {self.traj_id!r}: {n} timestamps but {self.xy.shape[0]} points")
        if not (np.all(np.isfinite(self.xy)) and np.all(np.isfinite(self.timestamps))):
            raise GeometryError(f"trajectory {self.traj_id!r} has non-finite values")
        if np.any(self.timestamps < 0):
            raise GeometryError(f"trajectory {self.traj_id!r} has negative timestamps")
        if np.any(np.diff(self.timestamps) <= 0):
            raise GeometryError(f"trajectory {self.traj_id!r}: timestamps not strictly increasing")

    @classmethod
    def from_records(cls, traj_id, records: Iterable[GpsRecord]) -> "Trajectory":
        records = list(records)
        ts = [r.timestamp for r in records]
        xy = [(r.point[0], r.point[1]) for r in records]
        return cls(traj_id, ts, np.asarray(xy, dtype=float).reshape(-1, 2))

    @property
    def records(self) -> list[GpsRecord]:
        return [GpsRecord(PlanarPoint(float(x), float(y)), float(t))
                for (x, y), t in zip(self.xy, self.timestamps)]

    def __len__(self):
        return self.timestamps.shape[0]

    def with_points(self, xy) -> "Trajectory":
        """Same id and timestamps, new coordinates."""
        return Trajectory(self.traj_id, self.timestamps.copy(), xy)

    def same_as(self, other: "Trajectory") -> bool:
        return (self.traj_id == other.traj_id
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.xy, other.xy))


def id_sort_key(seg_id):
    """Ordering used for "lowest segment id" tie-breaks: integers first, numerically."""
    if isinstance(seg_id, (int, np.integer)) and not isinstance(seg_id, bool):
        return (0, int(seg_id), "")
    return (1, 0, str(seg_id))


class RoadNetwork:
    """Immutable collection of polyline road segments keyed by id."""

    def __init__(self, segments):
        if isinstance(segments, dict):
            items = list(segments.items())
        else:
            items = list(segments)
        self._polylines: dict[Hashable, np.ndarray] = {}
        for seg_id, polyline in items:
            if seg_id in self._polylines:
                raise GeometryError(f"duplicate segment id {seg_id!r}")
            pts = np.array(polyline, dtype=float).reshape(-1, 2)
            if pts.shape[0] < 2:
                raise GeometryError(f"segment {seg_id!r} needs at least 2 vertices")
            if not np.all(np.isfinite(pts)):
                raise GeometryError(f"segment {seg_id!r} has non-finite vertices")
            if np.any(np.all(np.diff(pts, axis=0) == 0, axis=1)):
                raise GeometryError(f"segment {seg_id!r} repeats a vertex")
            pts.setflags(write=False)
            self._polylines[seg_id] = pts
        self._lengths = {k: polyline_length(v) for k, v in self._polylines.items()}

    @property
    def segment_ids(self) -> list:
        return list(self._polylines)

    def polyline(self, seg_id) -> np.ndarray:
        return self._polylines[seg_id]

    def length(self, seg_id) -> float:
        return self._lengths[seg_id]

    def __contains__(self, seg_id):
        return seg_id in self._polylines

    def __len__(self):
        return len(self._polylines)

    def items(self):
        return self._polylines.items()


class RouteStep(NamedTuple):
    seg_id: Hashable
    reversed: bool = False


class Route:
    """Directed path over network segments, with arc-length bookkeeping.

    Arc position 0 is the start of the first step; ``length`` is the total
    route distance ``d``.
    """

    def __init__(self, network: RoadNetwork, steps: Sequence):
        steps = [s if isinstance(s, RouteStep) else RouteStep(*s) if isinstance(s, (tuple, list))
                 else RouteStep(s) for s in steps]
        if not steps:
            raise GeometryError("route has no segments")
        seen = set()
        prev_end = None
        offsets = []
        total = 0.0
        for step in steps:
            if step.seg_id not in network:
                raise GeometryError(f"route uses unknown segment {step.seg_id!r}")
            if step.seg_id in seen:
                raise GeometryError(f"route traverses segment {step.seg_id!r} twice")
            seen.add(step.seg_id)
            pts = network.polyline(step.seg_id)
            start, end = (pts[-1], pts[0]) if step.reversed else (pts[0], pts[-1])
            if prev_end is not None and np.hypot(*(start - prev_end)) > _JOIN_TOL_M:
                raise GeometryError(f"route step {step.seg_id!r} does not join the previous step")
            prev_end = end
            offsets.append(total)
            total += network.length(step.seg_id)
        if not total > 0:
            raise GeometryError("route length must be positive")
        self.network = network
        self.steps: tuple[RouteStep, ...] = tuple(RouteStep(s.seg_id, bool(s.reversed)) for s in steps)
        self.length = total
        self._start = {s.seg_id: off for s, off in zip(self.steps, offsets)}
        self._reversed = {s.seg_id: s.reversed for s in self.steps}

    @property
    def segment_ids(self) -> list:
        return [s.seg_id for s in self.steps]

    def contains(self, seg_id) -> bool:
        return seg_id in self._start

    def arc_position(self, seg_id, offset: float) -> float:
        """Route arc length of a point ``offset`` meters along segment ``seg_id``."""
        start = self._start[seg_id]
        seg_len = self.network.length(seg_id)
        local = seg_len - offset if self._reversed[seg_id] else offset
        return min(max(start + local, 0.0), self.length)

    def point_at(self, arc: float) -> PlanarPoint:
        """Planar point at route arc length ``arc`` (clamped to ``[0, d]``)."""
        arc = min(max(float(arc), 0.0), self.length)
        for step in self.steps:
            start = self._start[step.seg_id]
            seg_len = self.network.length(step.seg_id)
            if arc <= start + seg_len or step is self.steps[-1]:
                local = arc - start
                offset = seg_len - local if step.reversed else local
                return point_along(self.network.polyline(step.seg_id), offset)
        raise AssertionError("unreachable")

    def __repr__(self):
        return f"Route({list(self.steps)!r}, length={self.length:.3f})"


def point_along(polyline, offset: float) -> PlanarPoint:
    """Point ``offset`` meters along a polyline from its first vertex (clamped)."""
    pts = np.asarray(polyline, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    offset = min(max(offset, 0.0), cum[-1])
    i = int(np.searchsorted(cum, offset, side="right") - 1)
    i = min(i, len(seg) - 1)
    t = (offset - cum[i]) / seg[i]
    p = pts[i] + t * (pts[i + 1] - pts[i])
    return PlanarPoint(float(p[0]), float(p[1]))


@dataclass(frozen=True)
class MappedPoint:
    """A record snapped onto a network segment.

    ``arc_pos`` is the route arc length when ``on_route``; otherwise it is
    the offset along the snapped segment from its first vertex.
    """

    seg_id: Hashable
    arc_pos: float
    x: float
    y: float
    on_route: bool
    timestamp: float = field(default=float("nan"), compare=False)

    @property
    def point(self) -> PlanarPoint:
        return PlanarPoint(self.x, self.y)


def route_arc_position(route: Route, m: MappedPoint) -> float:
    """Arc length from the route start to an on-route mapped point."""
    if not m.on_route or not route.contains(m.seg_id):
        raise GeometryError(f"mapped point on segment {m.seg_id!r} is not on the route")
    return float(m.arc_pos)
