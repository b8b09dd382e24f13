"""Command-line entry point: ``privtravel <command> ...``.

Exit codes: 0 success, 2 input error, 3 pipeline error.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io as pio
from .mapmatch import map_trajectories
from .metrics import (average_distance, cpd, deviation_moments, distance_usefulness, trajectory_distances,
                      usefulness_delta)
from .pipeline import ExperimentConfig, PipelineError, SimulateSpec, resample_rng, run_experiment, sanitize_all, \
    write_cpd
from .tpu import NoDataError, run_tpu

log = logging.getLogger("privtravel")

EXIT_INPUT = 2
EXIT_PIPELINE = 3


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _add_trace_opts(p, *, seed=False):
    p.add_argument("--crs", choices=["planar", "wgs84"], default="planar")
    p.add_argument("--origin", help="projection origin 'lat,lon' for wgs84 input")
    p.add_argument("--n-max", type=int, default=10, help="maximum records kept per trajectory")
    p.add_argument("--strategy", choices=["equal-spaced", "random"], default="equal-spaced")
    p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _load(args, path, origin=None):
    loaded = pio.load_traces(path, crs=args.crs, n_max=args.n_max, strategy=args.strategy,
                             rng=getattr(args, "seed", 0), origin=args.origin or origin, lenient=args.lenient)
    for msg in loaded.diagnostics:
        log.warning(msg)
    return loaded


def cmd_sanitize(args):
    loaded = _load(args, args.input)
    san = sanitize_all(loaded.trajectories, args.eps_total, args.seed)
    pio.write_traces(args.output, san, crs=args.crs, origin=loaded.origin)


def cmd_match(args):
    net, origin = pio.read_network(args.network, origin=args.origin)
    route = pio.read_route(args.route, net)
    loaded = _load(args, args.input, origin)
    pio.write_mapped(args.output, map_trajectories(net, loaded.trajectories, route))


def cmd_tpu(args):
    net, _ = pio.read_network(args.network)
    route = pio.read_route(args.route, net)
    result = run_tpu(route, pio.read_mapped(args.input, net))
    summary = result.summary()
    if result.times.size == 0:
        raise NoDataError("no data: no usable trajectory has a travel time")
    cdf = result.cdf(weighted=args.weighted, rng=resample_rng(args.seed))
    pio.write_cdf(args.output, cdf, summary)


def cmd_simulate(args):
    sim = SimulateSpec(args.experiment, args.trips, args.mean, args.var, args.tau, args.n, args.length,
                        args.spacing, args.off_route_fraction)
    ds = sim.generate(args.seed)
    pio.write_traces(args.output, ds.trajectories)
    pio.write_network(args.net_out, ds.network)
    pio.write_route(args.route_out, ds.route)


def cmd_run(args):
    cfg = ExperimentConfig.from_file(args.config)
    report = run_experiment(cfg, args.out_dir)
    for row in report.keff_table():
        log.info("K_eff %-9s K=%d usable=%.1f K_eff=%.2f (sd %.2f)", *row)


def cmd_metrics_usefulness(args):
    rows = [(e, a, usefulness_delta(e, a)) for e in _floats(args.eps) for a in _floats(args.alpha)]
    pio.write_csv(args.output, ["epsilon", "alpha", "one_minus_delta"], rows)


def cmd_metrics_dist_usefulness(args):
    rows = []
    rng = np.random.default_rng(args.seed)
    for d in _floats(args.d):
        for e in _floats(args.eps):
            for a in _floats(args.alpha):
                est = distance_usefulness(d, e, a, args.samples, rng)
                rows.append((d, e, a, est.value, est.stderr))
    pio.write_csv(args.output, ["d", "epsilon", "alpha", "delta", "stderr"], rows)


def cmd_metrics_deviation(args):
    rows = []
    rng = np.random.default_rng(args.seed)
    for e in _floats(args.eps):
        for d in _floats(args.d):
            r = deviation_moments(d, e, args.samples, rng)
            rows.append((d, e, r.expected_deviation, r.rmsd, r.squared_deviation_closed_form,
                         r.squared_deviation_mc))
    pio.write_csv(args.output, ["d", "epsilon", "expected_deviation", "rmsd",
                                "squared_deviation_closed_form", "squared_deviation_mc"], rows)


def _paired_inputs(args):
    if args.mapped:
        net = pio.read_network(args.network)[0] if args.network else None
        return pio.read_mapped(args.orig, net), pio.read_mapped(args.san, net)
    return _load(args, args.orig).trajectories, _load(args, args.san).trajectories


def cmd_metrics_ad(args):
    orig, san = _paired_inputs(args)
    per = trajectory_distances(orig, san)
    pio.write_csv(args.output, ["traj_id", "ad"], [(o.traj_id, float(v)) for o, v in zip(orig, per)])
    if args.output != "-":
        pio.write_json(pio.sidecar_path(args.output), {"K": len(orig), "ad": average_distance(orig, san)})


def cmd_metrics_cpd(args):
    orig, san = _paired_inputs(args)
    report = cpd(orig, san, args.clip)
    if args.oracle and args.eps_total is None:
        raise ValueError("--oracle needs --eps-total")
    write_cpd(args.output, report, epsilon_total=args.eps_total, clip=args.clip, oracle=args.oracle)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privtravel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sanitize", help="planar Laplace sanitization of a trace CSV")
    p.add_argument("--eps-total", type=float, required=True, help="per-trajectory loss, 1/m")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    _add_trace_opts(p, seed=True)
    p.set_defaults(func=cmd_sanitize)

    p = sub.add_parser("match", help="snap trace records onto a network")
    p.add_argument("--network", required=True)
    p.add_argument("--route", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    _add_trace_opts(p, seed=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("tpu", help="travel-time ECDF from mapped records")
    p.add_argument("--network", required=True)
    p.add_argument("--route", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tpu)

    p = sub.add_parser("simulate", help="synthetic single-road / parallel-road trips")
    p.add_argument("--experiment", type=int, choices=[1, 2], default=1)
    p.add_argument("--trips", type=int, default=1000)
    p.add_argument("--mean", type=float, default=24.0)
    p.add_argument("--var", type=float, default=8.0)
    p.add_argument("--tau", type=float, default=20.0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--length", type=float, default=4800.0)
    p.add_argument("--spacing", type=float, default=100.0)
    p.add_argument("--off-route-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--net-out", required=True)
    p.add_argument("--route-out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="full experiment driver from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="utility and adversary-error metrics")
    msub = p.add_subparsers(dest="metric", required=True)

    m = msub.add_parser("usefulness")
    m.add_argument("--eps", required=True, help="comma-separated")
    m.add_argument("--alpha", required=True, help="comma-separated")
    m.add_argument("--out", dest="output", default="-")
    m.set_defaults(func=cmd_metrics_usefulness)

    m = msub.add_parser("dist-usefulness")
    m.add_argument("--d", required=True)
    m.add_argument("--eps", required=True)
    m.add_argument("--alpha", required=True)
    m.add_argument("--samples", type=int, default=1_000_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", dest="output", default="-")
    m.set_defaults(func=cmd_metrics_dist_usefulness)

    m = msub.add_parser("deviation")
    m.add_argument("--d", required=True)
    m.add_argument("--eps", required=True)
    m.add_argument("--samples", type=int, default=1_000_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", dest="output", default="-")
    m.set_defaults(func=cmd_metrics_deviation)

    for name, func in (("ad", cmd_metrics_ad), ("cpd", cmd_metrics_cpd)):
        m = msub.add_parser(name)
        m.add_argument("--orig", required=True)
        m.add_argument("--san", required=True)
        m.add_argument("--mapped", action="store_true", help="inputs are mapped CSVs")
        m.add_argument("--network", help="network file to resolve ids of mapped inputs")
        m.add_argument("--out", dest="output", default="-")
        _add_trace_opts(m, seed=True)
        if name == "cpd":
            m.add_argument("--clip", type=float, required=True, help="clip radius C in meters")
            m.add_argument("--eps-total", type=float)
            m.add_argument("--oracle", action="store_true", help="add exact expectations (n <= 14)")
        m.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except PipelineError as exc:
        log.error("%s", exc)
        return EXIT_PIPELINE
    except (pio.InputError, NoDataError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
