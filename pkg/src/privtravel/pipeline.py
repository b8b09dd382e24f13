"""End-to-end driver: sanitize -> match -> TPU -> metrics over an epsilon sweep.

All randomness comes from one master seed. Stage streams are derived from
``(seed, stage, trajectory id)``; the sanitization stream does not depend
on epsilon, so every epsilon setting reuses the same underlying unit
noise, scaled by ``1 / epsilon``.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import io as pio
from .geometry import RoadNetwork, Route, Trajectory
from .mapmatch import map_trajectories
from .metrics import CpdReport, average_distance, cpd, cpd_exact_oracle, cpd_hit_probability, CPD_ORACLE_MAX_N
from .sanitizer import PrivacyBudget, sanitize_trajectory
from .seeding import derive_rng, derive_seed
from .tpu import TpuResult, run_tpu
from .tracegen import simulate_experiment

DEFAULT_EPSILONS = (0.05, 0.1, 0.3, 0.5, 0.8)
DEFAULT_CLIP_RADII = (20.0, 40.0, 80.0)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class SimulateSpec:
    experiment: int = 1
    trips: int = 1000
    mean: float = 24.0
    var: float = 8.0
    tau: float = 20.0
    n: int = 10
    length: float = 4800.0
    spacing: float = 100.0
    off_route_fraction: float = 0.0

    def generate(self, seed: int):
        return simulate_experiment(self.experiment, self.trips, self.mean, self.var, self.tau, self.n,
                                   rng=derive_rng(seed, "simulate"), length=self.length,
                                   spacing=self.spacing, off_route_fraction=self.off_route_fraction)


@dataclass
class ExperimentConfig:
    network: str | None = None
    route: str | None = None
    traces: str | None = None
    simulate: SimulateSpec | None = None
    epsilons: tuple = DEFAULT_EPSILONS
    n_max: int = 10
    strategy: str = "equal-spaced"
    seed: int = 0
    weighted: bool = False
    clip_radii: tuple = DEFAULT_CLIP_RADII
    repeats: int = 1
    crs: str = "planar"
    origin: tuple | None = None
    workers: int = 1

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "ExperimentConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise pio.InputError(f"unknown config keys: {sorted(unknown)}")
        for key in ("network", "route", "traces"):
            if doc.get(key) is not None:
                doc[key] = os.path.join(base_dir, doc[key])
        if doc.get("simulate") is not None:
            doc["simulate"] = SimulateSpec(**doc["simulate"])
        for key in ("epsilons", "clip_radii"):
            if key in doc:
                doc[key] = tuple(float(v) for v in doc[key])
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise pio.InputError(f"{path}: cannot read config: {exc}") from exc
        try:
            return cls.from_dict(doc, os.path.dirname(os.path.abspath(path)))
        except TypeError as exc:
            raise pio.InputError(f"{path}: {exc}") from exc

    def validate(self):
        if self.simulate is None and not (self.network and self.route and self.traces):
            raise pio.InputError("config needs either 'simulate' or all of network, route, traces")
        if not self.epsilons or any(not e > 0 for e in self.epsilons):
            raise pio.InputError("epsilons must be a non-empty list of positive values")
        if self.repeats < 1:
            raise pio.InputError("repeats must be >= 1")
        if self.crs not in ("planar", "wgs84"):
            raise pio.InputError(f"unknown crs {self.crs!r}")
        if self.strategy not in ("equal-spaced", "random"):
            raise pio.InputError(f"unknown subsampling strategy {self.strategy!r}")
        if self.n_max < 2:
            raise pio.InputError("n_max must be at least 2")


@dataclass
class Dataset:
    network: RoadNetwork
    route: Route
    trajectories: list[Trajectory]


@dataclass
class SettingResult:
    """Outcome for one privacy setting (``epsilon = None`` is the unsanitized baseline)."""

    epsilon: float | None
    tpu: TpuResult
    ad_mapped: float = math.nan
    ad_raw: float = math.nan
    cpd_raw: dict = field(default_factory=dict)
    cpd_mapped: dict = field(default_factory=dict)
    weighted_cdf: object = None


@dataclass
class CellResult:
    seed: int
    baseline: SettingResult
    settings: list[SettingResult]


def cell_seed(seed: int, repeat: int) -> int:
    return int(seed) if repeat == 0 else derive_seed(seed, "repeat", repeat)


def sanitize_all(trajectories: Sequence[Trajectory], epsilon_total: float, seed: int) -> list[Trajectory]:
    """Sanitize each trajectory on its own ``(seed, "sanitize", id)`` stream."""
    return [sanitize_trajectory(t, PrivacyBudget.for_trajectory(epsilon_total, len(t)),
                                derive_rng(seed, "sanitize", t.traj_id)) for t in trajectories]


def resample_rng(seed: int) -> np.random.Generator:
    return derive_rng(seed, "resample")


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        raise PipelineError(name, exc) from exc


def _common_length_subset(orig, san):
    """Pairs with the most frequent (then longest) record count; CPD needs a common n."""
    if not orig:
        return [], []
    lengths = np.array([len(t) for t in orig])
    values, counts = np.unique(lengths, return_counts=True)
    n = values[np.lexsort((values, counts))][-1]
    keep = [i for i, v in enumerate(lengths) if v == n]
    return [orig[i] for i in keep], [san[i] for i in keep]


def run_cell(data: Dataset, epsilons: Sequence[float], seed: int, clip_radii: Sequence[float] = (),
             weighted: bool = False) -> CellResult:
    """One full sweep on a fixed dataset."""
    net, route, trajs = data.network, data.route, data.trajectories
    mapped_orig = _stage("match", map_trajectories, net, trajs, route)
    base = SettingResult(None, _stage("tpu", run_tpu, route, mapped_orig))
    if weighted and base.tpu.times.size:
        base.weighted_cdf = _stage("tpu", base.tpu.cdf, True, resample_rng(seed))
    settings = []
    for eps in epsilons:
        san = _stage("sanitize", sanitize_all, trajs, eps, seed)
        mapped_san = _stage("match", map_trajectories, net, san, route)
        res = SettingResult(float(eps), _stage("tpu", run_tpu, route, mapped_san))
        if weighted and res.tpu.times.size:
            res.weighted_cdf = _stage("tpu", res.tpu.cdf, True, resample_rng(seed))
        res.ad_mapped = _stage("metrics", average_distance, mapped_orig, mapped_san)
        res.ad_raw = _stage("metrics", average_distance, trajs, san)
        o_raw, s_raw = _common_length_subset(trajs, san)
        o_map, s_map = _common_length_subset(mapped_orig, mapped_san)
        for c in clip_radii:
            if o_raw:
                res.cpd_raw[float(c)] = _stage("metrics", cpd, o_raw, s_raw, c)
                res.cpd_mapped[float(c)] = _stage("metrics", cpd, o_map, s_map, c)
        settings.append(res)
    return CellResult(int(seed), base, settings)


def load_dataset(cfg: ExperimentConfig, seed: int) -> Dataset:
    if cfg.simulate is not None:
        ds = cfg.simulate.generate(seed)
        return Dataset(ds.network, ds.route, ds.trajectories)
    net, origin = pio.read_network(cfg.network, origin=cfg.origin)
    route = pio.read_route(cfg.route, net)
    traces = pio.load_traces(cfg.traces, crs=cfg.crs, n_max=cfg.n_max, strategy=cfg.strategy,
                             rng=seed, origin=origin)
    return Dataset(net, route, traces.trajectories)


def _run_repeat(cfg: ExperimentConfig, repeat: int, shared: Dataset | None) -> CellResult:
    seed = cell_seed(cfg.seed, repeat)
    data = shared if shared is not None else _stage("load", load_dataset, cfg, seed)
    return run_cell(data, cfg.epsilons, seed, cfg.clip_radii, cfg.weighted)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    cells: list[CellResult]

    def labels(self):
        return ["baseline"] + [f"{e:g}" for e in self.config.epsilons]

    def keff_table(self) -> list[tuple]:
        """Rows ``(setting, K, usable_mean, K_eff_mean, K_eff_sd)``."""
        rows = []
        for k, label in enumerate(self.labels()):
            res = [c.baseline if k == 0 else c.settings[k - 1] for c in self.cells]
            keff = np.array([r.tpu.K_eff for r in res])
            rows.append((label, res[0].tpu.K, float(np.mean([r.tpu.usable_count for r in res])),
                         float(keff.mean()), float(keff.std(ddof=1)) if len(keff) > 1 else 0.0))
        return rows

    def ad_table(self) -> list[tuple]:
        """Rows ``(epsilon, ad_mapped_mean, ad_mapped_sd, ad_raw_mean, ad_raw_sd)``."""
        rows = []
        for k, eps in enumerate(self.config.epsilons):
            m = np.array([c.settings[k].ad_mapped for c in self.cells])
            r = np.array([c.settings[k].ad_raw for c in self.cells])
            sd = (lambda a: float(a.std(ddof=1)) if len(a) > 1 else 0.0)
            rows.append((f"{eps:g}", float(m.mean()), sd(m), float(r.mean()), sd(r)))
        return rows

    def summary(self) -> dict:
        return {
            "seed": self.config.seed,
            "repeats": self.config.repeats,
            "epsilons": list(self.config.epsilons),
            "keff": [dict(zip(("setting", "K", "usable_mean", "K_eff_mean", "K_eff_sd"), r))
                     for r in self.keff_table()],
            "ad": [dict(zip(("epsilon", "ad_mapped_mean", "ad_mapped_sd", "ad_raw_mean", "ad_raw_sd"), r))
                   for r in self.ad_table()],
        }

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        first = self.cells[0]
        for label, res in zip(self.labels(), [first.baseline] + first.settings):
            tag = "baseline" if res.epsilon is None else f"eps_{label}"
            summary = res.tpu.summary()
            if res.tpu.times.size == 0:
                summary["no_data"] = True
                pio.write_json(os.path.join(out_dir, f"cdf_{tag}.csv.json"), summary)
                continue
            pio.write_cdf(os.path.join(out_dir, f"cdf_{tag}.csv"), res.tpu.cdf(), summary)
            if res.weighted_cdf is not None:
                pio.write_cdf(os.path.join(out_dir, f"cdf_{tag}_weighted.csv"), res.weighted_cdf, summary)
        pio.write_csv(os.path.join(out_dir, "keff.csv"), ["setting", "K", "usable_mean", "K_eff_mean", "K_eff_sd"],
                      self.keff_table())
        pio.write_csv(os.path.join(out_dir, "ad.csv"),
                      ["epsilon", "ad_mapped_mean", "ad_mapped_sd", "ad_raw_mean", "ad_raw_sd"], self.ad_table())
        for k, eps in enumerate(self.config.epsilons):
            for c in self.config.clip_radii:
                reports = [cell.settings[k].cpd_raw.get(float(c)) for cell in self.cells]
                if any(r is None for r in reports):
                    continue
                write_cpd(os.path.join(out_dir, f"cpd_eps_{eps:g}_C_{c:g}.csv"), pool_cpd(reports),
                          epsilon_total=eps, clip=c)
        pio.write_json(os.path.join(out_dir, "summary.json"), self.summary())


def pool_cpd(reports: Sequence[CpdReport]) -> CpdReport:
    """Merge CPD reports from repeats into one over all their trajectories."""
    if len(reports) == 1:
        return reports[0]
    counts = np.concatenate([r.counts for r in reports])
    total = counts.sum()
    n = counts.shape[1] - 1
    m = sum(r.m_distribution * r.K for r in reports) / counts.shape[0]
    return CpdReport(counts, counts.sum(axis=0) / total if total else np.zeros(n + 1),
                     float((counts * np.arange(n + 1)).sum(axis=1).mean()), m)


def write_cpd(path, report: CpdReport, epsilon_total: float | None = None, clip: float | None = None,
              oracle: bool = True):
    """``l,p_l[,p_l_oracle]`` rows plus a JSON sidecar with the mean correct count."""
    n = report.n
    side = {"K": report.K, "n": n, "mean_correct": report.mean_correct}
    header = ["l", "p_l"]
    cols = [report.p_l]
    if oracle and epsilon_total is not None and clip is not None and n <= CPD_ORACLE_MAX_N:
        p = cpd_hit_probability(clip, epsilon_total, n)
        ref = cpd_exact_oracle(n, p)
        header.append("p_l_oracle")
        cols.append(ref.p_l)
        side.update({"hit_probability": p, "mean_correct_oracle": ref.mean_correct})
    if epsilon_total is not None:
        side["epsilon_total"] = epsilon_total
    if clip is not None:
        side["clip_radius"] = clip
    rows = [(l, *(float(c[l]) for c in cols)) for l in range(n + 1)]
    pio.write_csv(path, header, rows)
    if path != "-":
        pio.write_json(pio.sidecar_path(path), side)


def run_experiment(config, out_dir=None) -> ExperimentReport:
    """Run every repeat of ``config`` and optionally write all report files."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    cfg.validate()
    shared = None
    if cfg.simulate is None:
        shared = _stage("load", load_dataset, cfg, cfg.seed)
    if cfg.workers > 1 and cfg.repeats > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            cells = list(pool.map(_run_repeat, [cfg] * cfg.repeats, range(cfg.repeats),
                                  [shared] * cfg.repeats))
    else:
        cells = [_run_repeat(cfg, r, shared) for r in range(cfg.repeats)]
    report = ExperimentReport(cfg, cells)
    if out_dir is not None:
        _stage("report", report.write, out_dir)
    return report
