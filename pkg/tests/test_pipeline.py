import json
import subprocess
import sys

import numpy as np
import pytest

from privtravel import io as pio
from privtravel.cli import main
from privtravel.pipeline import (Dataset, ExperimentConfig, PipelineError, SimulateSpec, run_cell, run_experiment,
                                 sanitize_all)
from privtravel.seeding import derive_rng, derive_seed

SIM = {"experiment": 2, "trips": 80}


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_derived_streams():
    a = derive_rng(5, "sanitize", "007").random(3)
    assert np.array_equal(a, derive_rng(5, "sanitize", "007").random(3))
    assert not np.array_equal(a, derive_rng(5, "sanitize", "008").random(3))
    assert not np.array_equal(a, derive_rng(6, "sanitize", "007").random(3))
    assert 0 <= derive_seed(1, "x") < 2 ** 63


def test_sanitize_noise_shared_across_epsilon():
    trajs = SimulateSpec(**SIM).generate(1).trajectories
    a = sanitize_all(trajs, 0.1, 3)
    b = sanitize_all(trajs, 0.4, 3)
    for t, x, y in zip(trajs, a, b):
        np.testing.assert_allclose((x.xy - t.xy) / 4, y.xy - t.xy, rtol=1e-9, atol=1e-9)


def test_experiment_outputs(tmp_path):
    report = run_experiment({"simulate": {"experiment": 1, "trips": 60}, "seed": 4, "weighted": True},
                            tmp_path / "out")
    names = set(_files(tmp_path / "out"))
    cdfs = {n for n in names if n.startswith("cdf_") and n.endswith(".csv") and "weighted" not in n}
    assert cdfs == {"cdf_baseline.csv"} | {f"cdf_eps_{e}.csv" for e in ("0.05", "0.1", "0.3", "0.5", "0.8")}
    assert {"summary.json", "keff.csv", "ad.csv", "cpd_eps_0.8_C_80.csv"} <= names
    assert len(report.keff_table()) == 6
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["keff"][0]["setting"] == "baseline"


def test_experiment_byte_identical(tmp_path):
    cfg = {"simulate": SIM, "seed": 11, "weighted": True, "repeats": 2}
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_config_file_paths_relative(tmp_path):
    ds = SimulateSpec(**SIM).generate(0)
    pio.write_network(tmp_path / "net.json", ds.network)
    pio.write_route(tmp_path / "route.json", ds.route)
    pio.write_traces(tmp_path / "tr.csv", ds.trajectories)
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"network": "net.json", "route": "route.json", "traces": "tr.csv", "epsilons": [0.3], "seed": 2}))
    cfg = ExperimentConfig.from_file(tmp_path / "cfg.json")
    rep = run_experiment(cfg)
    assert rep.cells[0].baseline.tpu.K == 80


def test_config_errors():
    with pytest.raises(pio.InputError):
        ExperimentConfig.from_dict({"simulate": SIM, "bogus": 1})
    with pytest.raises(pio.InputError):
        ExperimentConfig.from_dict({"epsilons": [0.1]})
    with pytest.raises(pio.InputError):
        ExperimentConfig.from_dict({"simulate": SIM, "epsilons": [0.0]})


def test_stage_failure_names_stage():
    ds = SimulateSpec(**SIM).generate(0)
    data = Dataset(ds.network, ds.route, ds.trajectories)
    with pytest.raises(PipelineError, match="'sanitize'"):
        run_cell(data, [-1.0], 0)


def test_baseline_bounds_sanitized_keff():
    ds = SimulateSpec(experiment=2, trips=300).generate(5)
    cell = run_cell(Dataset(ds.network, ds.route, ds.trajectories), (0.05, 0.8), 5)
    for s in cell.settings:
        assert s.tpu.K_eff <= s.tpu.usable_count <= s.tpu.K
    assert cell.baseline.tpu.K_eff >= cell.settings[0].tpu.K_eff


def _cli_chain(d, seed=9, eps="0.3"):
    d.mkdir(exist_ok=True)
    f = {k: str(d / k) for k in ("tr.csv", "net.json", "route.json", "san.csv", "m.csv", "cdf.csv", "cpd.csv")}
    assert main(["simulate", "--experiment", "1", "--trips", "60", "--seed", str(seed), "--out", f["tr.csv"],
                 "--net-out", f["net.json"], "--route-out", f["route.json"]]) == 0
    assert main(["sanitize", "--eps-total", eps, "--seed", str(seed), "--in", f["tr.csv"], "--out", f["san.csv"]]) == 0
    assert main(["match", "--network", f["net.json"], "--route", f["route.json"], "--in", f["san.csv"],
                 "--out", f["m.csv"]]) == 0
    assert main(["tpu", "--network", f["net.json"], "--route", f["route.json"], "--in", f["m.csv"],
                 "--out", f["cdf.csv"]]) == 0
    assert main(["metrics", "cpd", "--orig", f["tr.csv"], "--san", f["san.csv"], "--clip", "80",
                 "--eps-total", eps, "--oracle", "--out", f["cpd.csv"]]) == 0
    return d


def test_cli_chain_byte_reproducible(tmp_path):
    assert _files(_cli_chain(tmp_path / "a")) == _files(_cli_chain(tmp_path / "b"))


def test_cli_stages_equal_driver(tmp_path):
    chain = _cli_chain(tmp_path / "cli")
    run_experiment({"simulate": {"experiment": 1, "trips": 60}, "seed": 9, "epsilons": [0.3],
                    "clip_radii": [80.0]}, tmp_path / "drv")
    drv = tmp_path / "drv"
    assert (chain / "cdf.csv").read_bytes() == (drv / "cdf_eps_0.3.csv").read_bytes()
    assert (chain / "cdf.csv.json").read_bytes() == (drv / "cdf_eps_0.3.csv.json").read_bytes()
    assert (chain / "cpd.csv").read_bytes() == (drv / "cpd_eps_0.3_C_80.csv").read_bytes()


def test_cli_metrics_tables(tmp_path, capsys):
    assert main(["metrics", "usefulness", "--eps", "2", "--alpha", "1.5"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "epsilon,alpha,one_minus_delta" and out[1].startswith("2.0,1.5,0.8008")
    assert main(["metrics", "deviation", "--d", "50", "--eps", "0.01", "--samples", "20000"]) == 0
    assert capsys.readouterr().out.splitlines()[1].split(",")[4] == "48.0"
    assert main(["metrics", "dist-usefulness", "--d", "10", "--eps", "1", "--alpha", "0.25",
                 "--samples", "20000", "--out", str(tmp_path / "du.csv")]) == 0
    assert (tmp_path / "du.csv").read_text().startswith("d,epsilon,alpha,delta,stderr\n")


def test_cli_ad(tmp_path):
    d = _cli_chain(tmp_path / "c")
    assert main(["metrics", "ad", "--orig", str(d / "tr.csv"), "--san", str(d / "san.csv"),
                 "--out", str(tmp_path / "ad.csv")]) == 0
    side = json.loads((tmp_path / "ad.csv.json").read_text())
    assert side["K"] == 60 and side["ad"] > 0


def test_cli_exit_codes(tmp_path):
    (tmp_path / "bad.csv").write_text("nope\n")
    assert main(["sanitize", "--eps-total", "0.3", "--in", str(tmp_path / "bad.csv"),
                 "--out", str(tmp_path / "o.csv")]) == 2
    (tmp_path / "cfg.json").write_text(json.dumps({"simulate": SIM, "epsilons": [0.3], "crs": "nonsense"}))
    assert main(["run", "--config", str(tmp_path / "cfg.json"), "--out-dir", str(tmp_path / "o")]) == 2


def test_cli_pipeline_error_exit_code(tmp_path, monkeypatch):
    import privtravel.pipeline as pl

    def boom(*a, **k):
        raise RuntimeError("matcher exploded")
    monkeypatch.setattr(pl, "map_trajectories", boom)
    (tmp_path / "cfg.json").write_text(json.dumps({"simulate": SIM, "epsilons": [0.3]}))
    assert main(["run", "--config", str(tmp_path / "cfg.json"), "--out-dir", str(tmp_path / "o")]) == 3


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "privtravel", "metrics", "usefulness", "--eps", "1",
                          "--alpha", "0"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.splitlines()[1] == "1.0,0.0,0.0"
