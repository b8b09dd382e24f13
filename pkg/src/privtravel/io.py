"""Flat-file formats: network/route JSON, trace and mapped-record CSV, CDF output.

Trace CSV header: ``traj_id,timestamp,x,y`` (planar meters) or
``traj_id,timestamp,lat,lon`` (WGS84 degrees, projected about an origin).
Floats are written with ``repr`` so files reload bit-for-bit.
"""
from __future__ import annotations

import csv
import json
import math
import os
import sys
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, RoadNetwork, Route, Trajectory, inverse_project, project_latlon
from .mapmatch import MappedTrajectory
from .seeding import derive_rng
from .tracegen import subsample_records

TRACE_HEADER_PLANAR = ["traj_id", "timestamp", "x", "y"]
TRACE_HEADER_WGS84 = ["traj_id", "timestamp", "lat", "lon"]
MAPPED_HEADER = ["traj_id", "timestamp", "seg_id", "arc_pos", "on_route", "x_snap", "y_snap"]


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def _fmt(v: float) -> str:
    return repr(float(v))


def _parse_origin(origin):
    if origin is None:
        return None
    if isinstance(origin, str):
        origin = origin.split(",")
    lat0, lon0 = (float(v) for v in origin)
    return (lat0, lon0)


def read_network(path, origin=None) -> tuple[RoadNetwork, tuple | None]:
    """Load a network file; returns the network and the WGS84 origin used (if any).

    The file is a JSON list of ``{id, polyline, crs}`` objects, or an object
    ``{"origin": [lat, lon], "segments": [...]}``. WGS84 polylines list
    ``[lat, lon]`` pairs. Without an explicit origin, the file's origin or
    else the first WGS84 vertex is used.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: cannot read network: {exc}") from exc
    segments = doc.get("segments") if isinstance(doc, dict) else doc
    if not isinstance(segments, list):
        raise InputError(f"{path}: expected a list of segments")
    if origin is None and isinstance(doc, dict):
        origin = doc.get("origin")
    origin = _parse_origin(origin)
    items = []
    for k, seg in enumerate(segments):
        try:
            seg_id = seg["id"]
            pts = np.asarray(seg["polyline"], dtype=float).reshape(-1, 2)
            crs = seg.get("crs", "planar")
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: segment #{k} is malformed: {exc}") from exc
        if crs == "wgs84":
            if origin is None:
                origin = (float(pts[0, 0]), float(pts[0, 1]))
            try:
                x, y = project_latlon(pts[:, 0], pts[:, 1], origin, record_id=seg_id)
            except GeometryError as exc:
                raise InputError(f"{path}: {exc}") from exc
            pts = np.column_stack([x, y])
        elif crs != "planar":
            raise InputError(f"{path}: segment {seg_id!r} has unknown crs {crs!r}")
        items.append((seg_id, pts))
    try:
        return RoadNetwork(items), origin
    except GeometryError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_network(path, network: RoadNetwork):
    doc = [{"id": seg_id, "crs": "planar", "polyline": pts.tolist()} for seg_id, pts in network.items()]
    _write_text(path, json.dumps(doc, indent=1) + "\n")


def read_route(path, network: RoadNetwork) -> Route:
    try:
        with open(path) as fh:
            doc = json.load(fh)
        steps = [(s["id"], bool(s.get("reversed", False))) for s in doc["segments"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: cannot read route: {exc}") from exc
    try:
        return Route(network, steps)
    except GeometryError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_route(path, route: Route):
    doc = {"segments": [{"id": s.seg_id, "reversed": s.reversed} for s in route.steps]}
    _write_text(path, json.dumps(doc, indent=1) + "\n")


@dataclass
class TraceLoad:
    trajectories: list[Trajectory]
    diagnostics: list[str] = field(default_factory=list)
    origin: tuple | None = None

    def __iter__(self):
        return iter(self.trajectories)

    def __len__(self):
        return len(self.trajectories)


def load_traces(path, crs: str = "planar", n_max: int | None = None, strategy: str = "equal-spaced",
                rng=None, origin=None, lenient: bool = False) -> TraceLoad:
    """Read a trace CSV into time-sorted planar trajectories.

    Parameters
    ----------
    path : str or path-like
    crs : {"planar", "wgs84"}
    n_max : int, optional
        Subsample trajectories longer than this.
    strategy : {"equal-spaced", "random"}
    rng : int or numpy.random.Generator, optional
        For random subsampling. An integer is treated as a master seed and
        gives each trajectory its own derived stream.
    origin : (lat, lon), optional
        Projection origin for WGS84 input; defaults to the first record.
    lenient : bool
        Skip malformed rows (reported in ``diagnostics``) instead of raising.

    Returns
    -------
    TraceLoad
        Trajectories in order of first appearance. Trajectories with
        repeated timestamps are dropped with a diagnostic.
    """
    expected = TRACE_HEADER_WGS84 if crs == "wgs84" else TRACE_HEADER_PLANAR
    if crs not in ("planar", "wgs84"):
        raise InputError(f"unknown crs {crs!r}")
    origin = _parse_origin(origin)
    rows: "OrderedDict[str, list]" = OrderedDict()
    diagnostics = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected:
            raise InputError(f"{path}: line 1: expected header {','.join(expected)}, got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 4:
                    raise ValueError(f"expected 4 fields, got {len(row)}")
                tid = row[0].strip()
                if not tid:
                    raise ValueError("empty traj_id")
                ts, a, b = float(row[1]), float(row[2]), float(row[3])
                if not (math.isfinite(ts) and ts >= 0):
                    raise ValueError("timestamp must be finite and non-negative")
                if crs == "wgs84":
                    if origin is None:
                        origin = (a, b)
                    a, b = project_latlon(a, b, origin, record_id=f"{tid}@{ts}")
                elif not (math.isfinite(a) and math.isfinite(b)):
                    raise ValueError("non-finite coordinate")
            except (ValueError, GeometryError) as exc:
                msg = f"{path}: line {lineno}: {exc}"
                if not lenient:
                    raise InputError(msg) from exc
                diagnostics.append(msg)
                continue
            rows.setdefault(tid, []).append((ts, a, b))
    out = []
    for tid, recs in rows.items():
        arr = np.array(recs, dtype=float)
        arr = arr[np.argsort(arr[:, 0], kind="stable")]
        try:
            t = Trajectory(tid, arr[:, 0], arr[:, 1:])
        except GeometryError as exc:
            diagnostics.append(f"{path}: trajectory {tid!r} rejected: {exc}")
            continue
        if n_max is not None:
            sub_rng = rng
            if strategy == "random" and not isinstance(rng, np.random.Generator):
                sub_rng = derive_rng(0 if rng is None else int(rng), "subsample", tid)
            t = subsample_records(t, n_max, strategy, sub_rng)
        out.append(t)
    return TraceLoad(out, diagnostics, origin)


def write_traces(path, trajectories, crs: str = "planar", origin=None):
    """Write trajectories as trace CSV (WGS84 output needs the projection origin)."""
    lines = [",".join(TRACE_HEADER_WGS84 if crs == "wgs84" else TRACE_HEADER_PLANAR)]
    origin = _parse_origin(origin)
    for t in trajectories:
        if crs == "wgs84":
            if origin is None:
                raise InputError("writing WGS84 traces needs a projection origin")
            lat, lon = inverse_project(t.xy[:, 0], t.xy[:, 1], origin)
            cols = np.column_stack([lat, lon])
        else:
            cols = t.xy
        for ts, (a, b) in zip(t.timestamps, cols):
            lines.append(f"{t.traj_id},{_fmt(ts)},{_fmt(a)},{_fmt(b)}")
    _write_text(path, "\n".join(lines) + "\n")


def write_mapped(path, mapped):
    lines = [",".join(MAPPED_HEADER)]
    for m in mapped:
        for j in range(len(m)):
            lines.append(",".join([m.traj_id, _fmt(m.timestamps[j]), str(m.seg_ids[j]), _fmt(m.arc_pos[j]),
                                   "1" if m.on_route[j] else "0", _fmt(m.xy[j, 0]), _fmt(m.xy[j, 1])]))
    _write_text(path, "\n".join(lines) + "\n")


def read_mapped(path, network: RoadNetwork | None = None) -> list[MappedTrajectory]:
    """Load mapped records; segment ids are matched back to ``network`` ids when given."""
    lookup = {str(s): s for s in network.segment_ids} if network is not None else {}
    groups: "OrderedDict[str, list]" = OrderedDict()
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MAPPED_HEADER:
            raise InputError(f"{path}: line 1: expected header {','.join(MAPPED_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                tid, ts, sid, arc, on, xs, ys = row
                if on not in ("0", "1"):
                    raise ValueError(f"on_route must be 0 or 1, got {on!r}")
                if lookup and sid not in lookup:
                    raise ValueError(f"unknown segment {sid!r}")
                rec = (float(ts), lookup.get(sid, sid), float(arc), on == "1", float(xs), float(ys))
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from exc
            groups.setdefault(tid, []).append(rec)
    out = []
    for tid, recs in groups.items():
        recs.sort(key=lambda r: r[0])
        out.append(MappedTrajectory(
            tid, np.array([r[0] for r in recs]), [r[1] for r in recs], np.array([r[2] for r in recs]),
            np.array([[r[4], r[5]] for r in recs]).reshape(-1, 2), np.array([r[3] for r in recs], dtype=bool)))
    return out


def write_cdf(path, cdf, summary: dict | None = None):
    """Write ``t,F`` rows at the ECDF jump points; ``summary`` goes to ``<path>.json``."""
    t, f = cdf.steps()
    lines = ["t,F"] + [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(t, f)]
    _write_text(path, "\n".join(lines) + "\n")
    if summary is not None:
        write_json(sidecar_path(path), summary)


def sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def write_json(path, doc):
    _write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text: str):
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)
