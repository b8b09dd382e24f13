"""Nearest-segment map matching and signed distances along a target route.

Each record is projected independently onto the closest point of any
network polyline; there is no temporal smoothing or path inference. Ties
go to the lowest segment id and then to the smallest offset along the
segment. Every point maps somewhere, and route membership is decided
afterwards from the snapped segment.
"""
from __future__ import annotations

import math
import weakref
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (GeometryError, MappedPoint, RoadNetwork, Route, Trajectory, id_sort_key,
                       route_arc_position)

# Distances within this many meters of the minimum count as ties.
TIE_TOL_M = 1e-9

_BRUTE_FORCE_MAX_PIECES = 512
_CHUNK_ELEMENTS = 2_000_000


class SegmentIndex:
    """Flattened straight pieces of every network polyline, ready for snapping.

    Networks with many pieces also get a uniform grid over piece bounding
    boxes; queries then search outward ring by ring until no unseen piece
    can be closer than the best candidate.
    """

    def __init__(self, network: RoadNetwork, use_grid: bool | None = None, cell_size: float | None = None):
        if len(network) == 0:
            raise GeometryError("cannot snap to an empty network")
        self.network = network
        self.seg_ids = sorted(network.segment_ids, key=id_sort_key)
        a, b, rank, start = [], [], [], []
        for k, seg_id in enumerate(self.seg_ids):
            pts = network.polyline(seg_id)
            lens = np.hypot(*np.diff(pts, axis=0).T)
            a.append(pts[:-1])
            b.append(pts[1:])
            rank.append(np.full(len(lens), k))
            start.append(np.concatenate([[0.0], np.cumsum(lens)[:-1]]))
        self.a = np.concatenate(a)
        self.ab = np.concatenate(b) - self.a
        self.len2 = np.einsum("ij,ij->i", self.ab, self.ab)
        self.piece_len = np.sqrt(self.len2)
        self.rank = np.concatenate(rank)
        self.start = np.concatenate(start)
        n_pieces = self.a.shape[0]
        if use_grid is None:
            use_grid = n_pieces > _BRUTE_FORCE_MAX_PIECES
        self._grid = None
        if use_grid:
            self._build_grid(cell_size)

    @classmethod
    def for_network(cls, network: RoadNetwork) -> "SegmentIndex":
        index = _INDEX_CACHE.get(network)
        if index is None:
            index = cls(network)
            _INDEX_CACHE[network] = index
        return index

    @property
    def n_pieces(self) -> int:
        return self.a.shape[0]

    def _build_grid(self, cell_size):
        lo = np.minimum(self.a, self.a + self.ab)
        hi = np.maximum(self.a, self.a + self.ab)
        if cell_size is None:
            extent = np.maximum(hi.max(axis=0) - lo.min(axis=0), 1.0)
            cell_size = max(float(np.median(self.piece_len)),
                            math.sqrt(extent[0] * extent[1] / self.n_pieces), 1e-3)
        self._cell = float(cell_size)
        self._origin = lo.min(axis=0)
        cells = defaultdict(list)
        i0 = np.floor((lo - self._origin) / self._cell).astype(int)
        i1 = np.floor((hi - self._origin) / self._cell).astype(int)
        for p in range(self.n_pieces):
            for ix in range(i0[p, 0], i1[p, 0] + 1):
                for iy in range(i0[p, 1], i1[p, 1] + 1):
                    cells[(ix, iy)].append(p)
        self._grid = {k: np.asarray(v) for k, v in cells.items()}
        self._grid_hi = i1.max(axis=0)

    def _project(self, xy, pieces):
        """Distances, piece-local parameters for points (M,2) against pieces (P,)."""
        a = self.a[pieces]
        ab = self.ab[pieces]
        rel = xy[:, None, :] - a[None, :, :]
        t = np.einsum("mpk,pk->mp", rel, ab) / self.len2[pieces]
        np.clip(t, 0.0, 1.0, out=t)
        foot = a[None, :, :] + t[..., None] * ab[None, :, :]
        dist = np.hypot(xy[:, None, 0] - foot[..., 0], xy[:, None, 1] - foot[..., 1])
        return dist, t, foot

    def _pick(self, dist, t, foot, pieces):
        # pieces are in (segment rank, offset) order, so the first tie wins
        dmin = dist.min(axis=1)
        best = np.argmax(dist <= dmin[:, None] + TIE_TOL_M, axis=1)
        rows = np.arange(dist.shape[0])
        p = pieces[best]
        tt = t[rows, best]
        return p, self.start[p] + tt * self.piece_len[p], foot[rows, best], dist[rows, best]

    def snap(self, xy):
        """Snap rows of ``xy``.

        Returns
        -------
        seg_rank : ndarray of int
            Index into ``self.seg_ids``.
        offset : ndarray
            Meters along the snapped segment from its first vertex.
        snapped : ndarray, shape (M, 2)
        dist : ndarray
            Distance from each input point to its snapped point.
        """
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        m = xy.shape[0]
        piece = np.empty(m, dtype=int)
        offset = np.empty(m)
        snapped = np.empty((m, 2))
        dist = np.empty(m)
        if self._grid is None:
            all_pieces = np.arange(self.n_pieces)
            step = max(1, _CHUNK_ELEMENTS // self.n_pieces)
            for lo in range(0, m, step):
                sl = slice(lo, lo + step)
                res = self._pick(*self._project(xy[sl], all_pieces), all_pieces)
                piece[sl], offset[sl], snapped[sl], dist[sl] = res
        else:
            for i in range(m):
                res = self._snap_grid(xy[i])
                piece[i], offset[i], snapped[i], dist[i] = res
        return self.rank[piece], offset, snapped, dist

    def _snap_grid(self, p):
        cx, cy = np.floor((p - self._origin) / self._cell).astype(int)
        seen = set()
        best = None
        # beyond this ring every grid cell has been visited
        max_ring = int(max(abs(cx), abs(cy), abs(self._grid_hi[0] - cx), abs(self._grid_hi[1] - cy))) + 1
        for ring in range(max_ring + 1):
            cand = []
            for ix in range(cx - ring, cx + ring + 1):
                for iy in range(cy - ring, cy + ring + 1):
                    if max(abs(ix - cx), abs(iy - cy)) != ring:
                        continue
                    for q in self._grid.get((ix, iy), ()):
                        if q not in seen:
                            seen.add(q)
                            cand.append(q)
            if cand:
                pieces = np.asarray(cand)
                dist, t, foot = self._project(p[None, :], pieces)
                k = int(np.argmin(dist[0]))
                d = float(dist[0, k])
                q = int(pieces[k])
                key = (d, self.rank[q], self.start[q] + t[0, k] * self.piece_len[q])
                if best is None or _better(key, best[0]):
                    best = (key, q, key[2], foot[0, k].copy(), d)
                # re-check ties inside this batch
                for j in np.flatnonzero(dist[0] <= d + TIE_TOL_M):
                    qj = int(pieces[j])
                    kj = (float(dist[0, j]), self.rank[qj], self.start[qj] + t[0, j] * self.piece_len[qj])
                    if _better(kj, best[0]):
                        best = (kj, qj, kj[2], foot[0, j].copy(), kj[0])
            # unseen pieces lie entirely outside the searched square
            if best is not None and best[4] + TIE_TOL_M < ring * self._cell:
                break
        _, q, off, foot, d = best
        return q, off, foot, d


def _better(key, other) -> bool:
    d, rank, off = key
    od, orank, ooff = other
    if d < od - TIE_TOL_M:
        return True
    if d > od + TIE_TOL_M:
        return False
    return (rank, off) < (orank, ooff)


_INDEX_CACHE: "weakref.WeakKeyDictionary[RoadNetwork, SegmentIndex]" = weakref.WeakKeyDictionary()


def _index(network) -> SegmentIndex:
    if isinstance(network, SegmentIndex):
        return network
    return SegmentIndex.for_network(network)


def snap_point(network, p) -> MappedPoint:
    """Closest point on any segment of ``network`` to planar point ``p``.

    The result is not tied to a route: ``on_route`` is False and ``arc_pos``
    holds the offset along the snapped segment.
    """
    index = _index(network)
    rank, offset, snapped, _ = index.snap(np.asarray(p, dtype=float)[None, :])
    return MappedPoint(index.seg_ids[rank[0]], float(offset[0]), float(snapped[0, 0]),
                       float(snapped[0, 1]), False)


@dataclass(eq=False)
class MappedTrajectory:
    """Map-matched records of one trajectory, stored column-wise."""

    traj_id: str
    timestamps: np.ndarray
    seg_ids: list
    arc_pos: np.ndarray
    xy: np.ndarray
    on_route: np.ndarray

    def __len__(self):
        return len(self.seg_ids)

    def __getitem__(self, j) -> MappedPoint:
        return MappedPoint(self.seg_ids[j], float(self.arc_pos[j]), float(self.xy[j, 0]),
                           float(self.xy[j, 1]), bool(self.on_route[j]), float(self.timestamps[j]))

    def __iter__(self):
        return (self[j] for j in range(len(self)))

    @property
    def points(self) -> list[MappedPoint]:
        return list(self)

    def same_as(self, other: "MappedTrajectory") -> bool:
        return (self.traj_id == other.traj_id
                and list(self.seg_ids) == list(other.seg_ids)
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.arc_pos, other.arc_pos)
                and np.array_equal(self.xy, other.xy)
                and np.array_equal(self.on_route, other.on_route))


def _assemble(index, route, traj_id, ts, rank, offset, snapped) -> MappedTrajectory:
    seg_ids = [index.seg_ids[r] for r in rank]
    on = np.zeros(len(seg_ids), dtype=bool)
    arc = np.asarray(offset, dtype=float).copy()
    if route is not None:
        for j, seg_id in enumerate(seg_ids):
            if route.contains(seg_id):
                on[j] = True
                arc[j] = route.arc_position(seg_id, offset[j])
    return MappedTrajectory(traj_id, np.asarray(ts, dtype=float).copy(), seg_ids, arc, snapped, on)


def map_trajectory(network, t: Trajectory, route: Route | None = None) -> MappedTrajectory:
    """Snap every record of ``t`` and flag membership in ``route``."""
    index = _index(network)
    rank, offset, snapped, _ = index.snap(t.xy)
    return _assemble(index, route, t.traj_id, t.timestamps, rank, offset, snapped)


def map_trajectories(network, trajectories: Sequence[Trajectory], route: Route | None = None) -> list[MappedTrajectory]:
    """Batch form of :func:`map_trajectory`; one vectorized snap for all records."""
    trajectories = list(trajectories)
    if not trajectories:
        return []
    index = _index(network)
    sizes = [len(t) for t in trajectories]
    rank, offset, snapped, _ = index.snap(np.concatenate([t.xy for t in trajectories]))
    out = []
    lo = 0
    for t, n in zip(trajectories, sizes):
        sl = slice(lo, lo + n)
        out.append(_assemble(index, route, t.traj_id, t.timestamps, rank[sl], offset[sl], snapped[sl]))
        lo += n
    return out


def signed_route_distance(route: Route, q_prev: MappedPoint, q_cur: MappedPoint) -> float:
    """Arc-length displacement from ``q_prev`` to ``q_cur`` along ``route``.

    Positive along the route direction, negative against it, zero when the
    two points coincide. Both points must be on the route.
    """
    return route_arc_position(route, q_cur) - route_arc_position(route, q_prev)
