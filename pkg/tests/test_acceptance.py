"""Acceptance checks, one test per criterion.

Each test records a one-line verdict; the lines are printed together at the
end of the pytest run (see ``conftest.py``). A failing criterion stays red.
"""
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import optimize

from privtravel.mapmatch import map_trajectories
from privtravel.metrics import (cpd, hard_threshold, cpd_exact_oracle, cpd_hit_probability, deviation_moments, distance_usefulness,
                                gamma2_cdf, run_length_counts, squared_deviation_closed_form, usefulness_delta)
from privtravel.pipeline import Dataset, SimulateSpec, pool_cpd, resample_rng, run_cell, sanitize_all
from privtravel.sanitizer import sanitize_points
from privtravel.seeding import derive_rng
from privtravel.tpu import ks_distance, run_tpu, weighted_tpu

VERDICTS = {}
EPSILONS = (0.05, 0.1, 0.3, 0.5, 0.8)
SEEDS = range(20)


def verdict(n, ok, detail):
    VERDICTS[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, VERDICTS[n]


def _fmt(values, digits=4):
    return "[" + ", ".join(f"{v:.{digits}f}" for v in values) + "]"


# ---------------------------------------------------------------- utility metrics

EPS_ROWS = (0.01, 0.05, 0.25)
D_COLS = (50.0, 100.0, 200.0)


def test_criterion_01_closed_form_squared_deviation():
    expected = [48, 12, 3, 1.92, 0.48, 0.12, 0.0768, 0.0192, 0.0048]
    got = [squared_deviation_closed_form(d, e) for e in EPS_ROWS for d in D_COLS]
    ok = all(abs(g - x) <= 1e-12 * x for g, x in zip(got, expected))
    verdict(1, ok, f"12/(d eps)^2 = {got}")


@pytest.mark.slow
def test_criterion_02_deviation_moments():
    exp_dev = [5.00, 2.09, 0.75, 0.51, 0.13, 0.03, 0.02, 0.00, 0.00]
    exp_rmsd = [6.17, 2.80, 1.23, 0.95, 0.47, 0.24, 0.19, 0.10, 0.05]
    dev, rmsd = [], []
    for e in EPS_ROWS:
        for d in D_COLS:
            r = deviation_moments(d, e, 10_000_000, derive_rng(2, "deviation", e, d))
            dev.append(r.expected_deviation)
            rmsd.append(r.rmsd)
    worst = max(max(abs(a - b) for a, b in zip(dev, exp_dev)), max(abs(a - b) for a, b in zip(rmsd, exp_rmsd)))
    verdict(2, worst <= 0.05, f"dev {_fmt(dev, 3)} rmsd {_fmt(rmsd, 3)} max abs err {worst:.4f} (tol 0.05)")


def test_criterion_03_usefulness_anchors():
    analytic = usefulness_delta(2.0, 1.5)
    d1 = distance_usefulness(10.0, 1.0, 0.25, 1_000_000, derive_rng(3, "du", 10))
    d2 = distance_usefulness(5.0, 1.0, 0.5, 1_000_000, derive_rng(3, "du", 5))
    ok_a = abs(analytic - 0.8009) < 5e-5
    ok_d = abs(d1.value - 0.20) <= 0.01 and abs(d2.value - 0.20) <= 0.01
    verdict(3, ok_a and ok_d,
            f"1-delta(2, 1.5) = {analytic:.4f} ({'ok' if ok_a else 'off'}); "
            f"delta(10, 0.25) = {d1.value:.4f} +- {d1.stderr:.4f}, delta(5, 0.5) = {d2.value:.4f} +- {d2.stderr:.4f}"
            f" (target 0.20 +- 0.01)")


def test_criterion_04_distance_usefulness_shape():
    bad = []
    checked = 0
    for alpha in (0.1, 0.25, 0.5):
        for e in (0.5, 1.0, 2.0):
            est = [distance_usefulness(d, e, alpha, 1_000_000, derive_rng(4, alpha, e, d)) for d in (5.0, 10.0, 20.0)]
            for a, b in zip(est, est[1:]):
                checked += 1
                if not a.value - b.value > 3 * math.hypot(a.stderr, b.stderr):
                    bad.append((alpha, e))
    verdict(4, not bad, f"strictly decreasing in d at 3 SE for {checked - len(bad)}/{checked} steps "
                        f"(alpha in 0.1, 0.25, 0.5; eps in 0.5, 1, 2)")


# ---------------------------------------------------------------- adversary metrics

def _radius_for(p, eps_r):
    """Clip radius giving hit probability ``p`` at per-record epsilon ``eps_r``."""
    return optimize.brentq(lambda c: gamma2_cdf(c, eps_r) - p, 0.0, 100.0 / eps_r, xtol=1e-14)


def _simulated_cpd(n, eps_total, C, trajectories, seed, chunk=100_000):
    """Pooled CPD of simulated sanitized trajectories; also checks run-sum conservation."""
    reports, conserved = [], True
    rng = derive_rng(seed, "cpd", n, C)
    for lo in range(0, trajectories, chunk):
        k = min(chunk, trajectories - lo)
        orig = np.zeros((k, n, 2))
        san = sanitize_points(orig.reshape(-1, 2), eps_total / n, rng).reshape(orig.shape)
        rep = cpd(orig, san, C)
        hits = hard_threshold(orig, san, C).sum(axis=1)
        conserved &= bool(np.array_equal((rep.counts * np.arange(n + 1)).sum(axis=1), hits))
        reports.append(rep)
    return pool_cpd(reports), conserved


def _exact_count_variance(n, p):
    """Variance of each run count under independent hits, by full enumeration."""
    e = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    prob = p ** e.sum(axis=1) * (1 - p) ** (n - e.sum(axis=1))
    c = run_length_counts(e)
    mean = prob @ c
    return prob @ (c * c) - mean * mean


@pytest.mark.slow
def test_criterion_05_run_counting_against_oracle():
    eps_total = 1.0
    worst_z, conserved, mean_err = 0.0, True, 0.0
    for n in (1, 2, 5, 10):
        for p in (0.1, 0.5, 0.9):
            C = _radius_for(p, eps_total / n)
            assert cpd_hit_probability(C, eps_total, n) == pytest.approx(p, abs=1e-12)
            oracle = cpd_exact_oracle(n, p)
            rep, ok = _simulated_cpd(n, eps_total, C, 100_000, 5)
            conserved &= ok
            se = np.sqrt(_exact_count_variance(n, p) / rep.K)
            diff = np.abs(rep.mean_counts - oracle.expected_counts)
            z = np.divide(diff, se, out=np.where(diff > 1e-12, np.inf, 0.0), where=se > 0)
            if z.max() > worst_z:
                worst_z, worst = float(z.max()), (n, p, C, oracle, se)
            big, ok = _simulated_cpd(n, eps_total, C, 1_000_000, 55)
            conserved &= ok
            mean_err = max(mean_err, abs(big.mean_correct / (n * p) - 1))
    # conservation on explicit indicator matrices
    e = derive_rng(5, "indicators").random((100_000, 10)) < 0.6
    conserved &= bool(np.array_equal((run_length_counts(e) * np.arange(11)).sum(axis=1), e.sum(axis=1)))
    ok = worst_z <= 3 and conserved and mean_err <= 0.01
    detail = (f"max |MC - oracle| = {worst_z:.2f} SE over 66 compared counts (tol 3); run-sum conservation "
              f"{'holds' if conserved else 'broken'}; max rel err of mean correct vs n p = {mean_err:.4f} "
              f"(tol 0.01, 1e6 trajectories)")
    if worst_z > 3:
        # replicate the worst cell on fresh streams to separate bias from a tail draw
        n, p, C, oracle, se = worst
        z = np.array([(_simulated_cpd(n, eps_total, C, 100_000, 500 + r)[0].mean_counts - oracle.expected_counts) / se
                      for r in range(20)])
        detail += (f"; worst cell n={n} p={p} replicated on 20 fresh seeds: mean z {_fmt(z.mean(axis=0), 2)}, "
                   f"sd z {_fmt(z.std(axis=0), 2)}")
    verdict(5, ok, detail)


def test_criterion_06_full_run_probability():
    eps_total, n = max(EPSILONS), 10
    exact, mc = {}, {}
    for C in (80.0, 40.0, 20.0):
        exact[C] = cpd_exact_oracle(n, cpd_hit_probability(C, eps_total, n)).p_l[n]
        mc[C] = _simulated_cpd(n, eps_total, C, 100_000, 6)[0].p_l[n]
    shape = exact[80.0] > 0.8 and abs(exact[40.0] - 0.1) <= 0.05 and exact[20.0] < 0.01
    agree = all(abs(mc[C] - exact[C]) <= 0.02 for C in exact)
    verdict(6, shape and agree, "P(l=10) exact/MC at C=80: {:.4f}/{:.4f}, C=40: {:.4f}/{:.4f}, C=20: {:.4f}/{:.4f}"
            .format(exact[80.0], mc[80.0], exact[40.0], mc[40.0], exact[20.0], mc[20.0]))


# ---------------------------------------------------------------- regenerated experiments

def _sweep(experiment, length=4800.0, resamples=0):
    rows = {"keff": [], "usable": [], "K": [], "ad": [], "ad_raw": [], "ks": [], "wks": []}
    for seed in SEEDS:
        ds = SimulateSpec(experiment=experiment, length=length).generate(seed)
        cell = run_cell(Dataset(ds.network, ds.route, ds.trajectories), EPSILONS, seed)
        res = [cell.baseline] + cell.settings
        rows["keff"].append([r.tpu.K_eff for r in res])
        rows["usable"].append([r.tpu.usable_count for r in res])
        rows["K"].append([r.tpu.K for r in res])
        rows["ad"].append([s.ad_mapped for s in cell.settings])
        rows["ad_raw"].append([s.ad_raw for s in cell.settings])
        base = cell.baseline.tpu.times
        rows["ks"].append([ks_distance(s.tpu.times, base) for s in cell.settings])
        if resamples:
            wks = []
            for s in cell.settings:
                rng = resample_rng(seed)
                t, w = s.tpu.times, s.tpu.weights
                wks.append(np.mean([ks_distance(weighted_tpu(t, w, rng), t) for _ in range(resamples)]))
            rows["wks"].append(wks)
    return {k: np.array(v) for k, v in rows.items()}


@pytest.fixture(scope="module")
def exp1():
    return _sweep(1, resamples=100)


@pytest.fixture(scope="module")
def exp2():
    return _sweep(2)


def _non_decreasing(v):
    return bool(np.all(np.diff(v) >= 0))


@pytest.mark.slow
def test_criterion_07_keff_and_ad_properties(exp1, exp2):
    parts, ok = [], True
    for name, r in (("exp1", exp1), ("exp2", exp2)):
        keff = r["keff"].mean(axis=0)
        a = _non_decreasing(keff[1:]) and bool(np.all(keff[1:] <= keff[0]))
        b = bool(np.all(r["keff"] <= r["usable"] + 1e-9) and np.all(r["usable"] <= r["K"]))
        ad = r["ad"].mean(axis=0)
        c = _non_decreasing(-ad)
        ad_raw = r["ad_raw"].mean(axis=0)
        analytic = np.array([2 / (e / 10) for e in EPSILONS])
        d = bool(np.all(np.abs(ad_raw / analytic - 1) <= 0.01))
        ok &= a and b and c and d
        parts.append(f"{name}: K_eff {_fmt(keff, 1)} (a {a}, b {b}), AD {_fmt(ad, 1)} (c {c}), "
                     f"raw AD/analytic-1 max {np.max(np.abs(ad_raw / analytic - 1)):.4f} (d {d})")
    verdict(7, ok, "; ".join(parts))


def test_criterion_08_zero_noise_identity():
    seed = 8
    ds = SimulateSpec(experiment=1).generate(seed)
    trajs = ds.trajectories
    san = sanitize_all(trajs, math.inf, seed)
    same_points = all(a.same_as(b) for a, b in zip(trajs, san))
    m0 = map_trajectories(ds.network, trajs, ds.route)
    m1 = map_trajectories(ds.network, san, ds.route)
    r0, r1 = run_tpu(ds.route, m0), run_tpu(ds.route, m1)

    def fields(ev):
        return (ev.traj_id, ev.d_star, ev.delta_t, ev.usable, ev.s_star, ev.t_star, ev.weight)
    same_evals = all(fields(a) == fields(b) for a, b in zip(r0.evaluations, r1.evaluations))
    same_cdf = np.array_equal(r0.cdf().times, r1.cdf().times)
    same_keff = r0.K_eff == r1.K_eff and r0.usable_count == r1.usable_count
    d = ds.route.length
    free = [(ev, trip) for ev, trip in zip(r1.evaluations, ds.trips) if not trip.clamped]
    t_ok = all(abs(ev.t_star - d / trip.speed) <= 1e-12 * (d / trip.speed) for ev, trip in free)
    all_usable = r1.usable_count == r1.K
    ok = same_points and same_evals and same_cdf and same_keff and t_ok and all_usable
    verdict(8, ok, f"bit-exact points {same_points}, evaluations {same_evals}, ECDF {same_cdf}, K_eff {same_keff}; "
                   f"t* = d/speed on {len(free)} unclamped trips {t_ok}; |U| = K = {r1.K} {all_usable} "
                   f"(K_eff = {r1.K_eff:.2f}, the summed route coverage)")


@pytest.mark.slow
def test_criterion_09_ks_ordering(exp1):
    ks = exp1["ks"].mean(axis=0)
    wks = exp1["wks"].mean(axis=0)
    part1 = bool(np.all(np.diff(ks) < 0))
    part2 = bool(np.all(np.diff(wks) <= 0))
    detail = (f"KS(sanitized, baseline) {_fmt(ks)} strictly decreasing {part1}; "
              f"KS(weighted, unweighted) {_fmt(wks)} non-increasing {part2}")
    if not part1:
        long_road = _sweep(1, length=8000.0)["ks"].mean(axis=0)
        detail += f"; same sweep on an 8000 m road with no clamped trips: {_fmt(long_road)}"
    verdict(9, part1 and part2, detail)


# ---------------------------------------------------------------- determinism

def _cli(args, env_seed):
    env = dict(os.environ, PYTHONHASHSEED=str(env_seed))
    res = subprocess.run([sys.executable, "-m", "privtravel", *args], capture_output=True, env=env)
    assert res.returncode == 0, res.stderr.decode()
    return res.stdout


def _all_cli_outputs(d, env_seed):
    d.mkdir()
    f = lambda name: str(d / name)  # noqa: E731
    _cli(["simulate", "--experiment", "2", "--trips", "150", "--seed", "77", "--off-route-fraction", "0.1",
          "--out", f("tr.csv"), "--net-out", f("net.json"), "--route-out", f("route.json")], env_seed)
    _cli(["sanitize", "--eps-total", "0.3", "--seed", "77", "--in", f("tr.csv"), "--out", f("san.csv")], env_seed)
    for src, dst in (("tr.csv", "m0.csv"), ("san.csv", "m.csv")):
        _cli(["match", "--network", f("net.json"), "--route", f("route.json"), "--in", f(src), "--out", f(dst)],
             env_seed)
    _cli(["tpu", "--network", f("net.json"), "--route", f("route.json"), "--in", f("m.csv"), "--weighted",
          "--seed", "77", "--out", f("cdf.csv")], env_seed)
    _cli(["metrics", "cpd", "--orig", f("tr.csv"), "--san", f("san.csv"), "--clip", "40", "--eps-total", "0.3",
          "--oracle", "--out", f("cpd.csv")], env_seed)
    _cli(["metrics", "ad", "--orig", f("m0.csv"), "--san", f("m.csv"), "--mapped", "--network", f("net.json"),
          "--out", f("ad.csv")], env_seed)
    (d / "du.csv").write_bytes(_cli(["metrics", "dist-usefulness", "--d", "5,10", "--eps", "1", "--alpha", "0.25",
                                     "--samples", "50000", "--seed", "77"], env_seed))
    (d / "dev.csv").write_bytes(_cli(["metrics", "deviation", "--d", "50", "--eps", "0.05", "--samples", "50000",
                                      "--seed", "77"], env_seed))
    (d / "u.csv").write_bytes(_cli(["metrics", "usefulness", "--eps", "0.5,2", "--alpha", "1.5"], env_seed))
    (d / "cfg.json").write_text(json.dumps({"simulate": {"experiment": 1, "trips": 100}, "seed": 77,
                                            "weighted": True, "repeats": 2}))
    _cli(["run", "--config", f("cfg.json"), "--out-dir", f("run")], env_seed)
    out = {}
    for root, _, files in os.walk(d):
        for name in files:
            p = os.path.join(root, name)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, d)] = fh.read()
    return out


@pytest.mark.slow
def test_criterion_10_cli_determinism(tmp_path):
    a = _all_cli_outputs(tmp_path / "a", 1)
    b = _all_cli_outputs(tmp_path / "b", 2)
    differing = sorted(k for k in a if a.get(k) != b.get(k)) + sorted(set(b) - set(a))
    verdict(10, not differing, f"{len(a)} output files from 12 CLI invocations compared across two processes "
                               f"with different hash seeds; differing: {differing or 'none'}")
