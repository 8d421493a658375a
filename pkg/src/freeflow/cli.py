"""Command-line entry point: ``freeflow <command> ...``.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error,
4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import bounds, generators, io, solver
from .latency import parse_latency

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

log = logging.getLogger("freeflow")


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


# -- helpers ---------------------------------------------------------------------


def _theta(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if math.isnan(v):
        raise argparse.ArgumentTypeError("theta must not be NaN")
    return v


def _latency(text: str):
    try:
        return parse_latency(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _need_input(path: str | None) -> None:
    if path is not None and not Path(path).is_file():
        raise CliError(f"input file not found: {path}", EXIT_IO)


def _need_output(path: str | None) -> None:
    if path is None:
        return
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise CliError(f"output directory does not exist: {parent}", EXIT_IO)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    try:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc}", EXIT_IO) from None


def _dumps(data) -> str:
    return json.dumps(_finite(data), indent=2, default=str)


def _finite(data):
    """JSON has no infinity; spell it out."""
    if isinstance(data, float) and math.isinf(data):
        return "inf" if data > 0 else "-inf"
    if isinstance(data, dict):
        return {k: _finite(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [_finite(v) for v in data]
    return data


def _load_instance(path: str):
    _need_input(path)
    try:
        return io.load_game(path)
    except io.InstanceFormatError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None


# -- commands --------------------------------------------------------------------


def cmd_bounds(args) -> int:
    try:
        res = bounds.bound(args.p, args.q, args.theta, args.topology)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    _emit(
        _dumps(
            {
                "p": args.p,
                "q": args.q,
                "theta": args.theta,
                "topology": bounds.Topology.parse(args.topology).value,
                "value": round(res.value, 6),
                "components": {k: round(v, 6) for k, v in res.components.items()},
                "method": res.method.value,
            }
        ),
        args.output,
    )
    return EXIT_OK


def cmd_table1(args) -> int:
    _need_output(args.output)
    _emit(bounds.table1_csv(), args.output)
    return EXIT_OK


def cmd_curves(args) -> int:
    _need_output(args.output)
    try:
        rows = bounds.curves(args.p, args.q, args.theta_max, args.steps)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    _emit(bounds.curves_csv(rows), args.output)
    return EXIT_OK


def cmd_solve(args) -> int:
    _need_output(args.output)
    game = _load_instance(args.instance)
    fn = solver.solve_optimum if args.optimum else solver.solve_equilibrium
    rep = fn(game, tol=args.tol, max_iters=args.max_iters, seed=args.seed)
    _emit(_dumps(rep.to_json()), args.output)
    if not rep.converged:
        log.error("solver stopped at gap %.3g after %d iterations", rep.wardrop_gap, rep.iterations)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_poa(args) -> int:
    _need_output(args.output)
    game = _load_instance(args.instance)
    try:
        if args.brute_force:
            rep = solver.brute_force_poa(game, args.brute_force)
        else:
            rep = solver.price_of_anarchy(game, tol=args.tol, max_iters=args.max_iters, seed=args.seed)
    except solver.ConvergenceError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    data = rep.to_json()
    if not args.full:
        for k in ("eq", "opt"):
            data[k] = {key: data[k][key] for key in ("total_latency", "wardrop_gap", "iterations", "converged")}
    _emit(_dumps(data), args.output)
    return EXIT_OK


def _build_instance(args) -> generators.GeneratedInstance:
    kind = args.kind
    if kind == "pigou":
        return generators.gen_pigou_like(args.c)
    if kind == "multilevel":
        return generators.gen_multilevel_lb(args.k, args.l, args.latency, args.theta, args.n, args.m)
    if kind == "parallel-gamma":
        return generators.gen_parallel_gamma(args.k1, args.l1, args.f1, args.k2, args.l2, args.f2, args.n)
    if kind == "twolink-eta":
        return generators.gen_twolink_eta(args.k, args.l, args.latency, args.theta)
    base = generators.gen_multilevel_lb(args.k, args.l, args.latency, args.theta, args.n, args.m)
    h = args.h if args.h is not None else generators.minimal_h(base, args.beta)
    return generators.gen_network_expansion(base, h, args.beta)


def cmd_generate(args) -> int:
    _need_output(args.output)
    try:
        inst = _build_instance(args)
    except (ValueError, TypeError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    instance = io.game_to_json(inst.game)
    meta = inst.sidecar()
    if args.output is None:
        _emit(_dumps({"instance": instance, "meta": meta}), None)
        return EXIT_OK
    sidecar = Path(args.output).with_suffix(".meta.json")
    _emit(json.dumps(instance, indent=2), args.output)
    _emit(_dumps(meta), str(sidecar))
    print(_dumps({"predicted_poa": inst.predicted_poa, "instance": args.output, "sidecar": str(sidecar)}))
    return EXIT_OK


def cmd_estimate_theta(args) -> int:
    from .estimator import (
        EstimatorConfig,
        deviation_distribution,
        estimate_all,
        load_road_graph,
        load_traces_csv,
    )
    from .estimator.pipeline import summary_json, write_estimates_csv

    for p in (args.nodes, args.edges, args.traces):
        _need_input(p)
    _need_output(args.output)
    _need_output(args.summary)
    try:
        cfg = EstimatorConfig(args.snap_radius, args.small_gap)
        graph = load_road_graph(args.nodes, args.edges)
        traces = load_traces_csv(args.traces)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    estimates, failed = estimate_all(graph, traces, cfg)
    if not estimates:
        raise CliError("no trip could be estimated", EXIT_USAGE)
    summary = summary_json(deviation_distribution(estimates), failed)
    try:
        if args.output is None:
            write_estimates_csv(estimates, sys.stdout)
        else:
            with open(args.output, "w", newline="") as fh:
                write_estimates_csv(estimates, fh)
    except OSError as exc:
        raise CliError(f"cannot write {args.output}: {exc}", EXIT_IO) from None
    summary_path = args.summary
    if summary_path is None and args.output is not None:
        summary_path = str(Path(args.output).with_suffix(".summary.json"))
    if summary_path is None:
        sys.stderr.write(summary + "\n")
    else:
        _emit(summary, summary_path)
    return EXIT_OK


def cmd_synth_fleet(args) -> int:
    from .estimator import synth_fleet, write_road_graph, write_traces_csv

    outdir = Path(args.outdir)
    if not outdir.is_dir():
        raise CliError(f"output directory does not exist: {outdir}", EXIT_IO)
    try:
        mixture = [(float(t), float(w)) for t, w in (item.split(":") for item in args.mixture)]
        fleet = synth_fleet(
            args.rows,
            args.cols,
            args.trips,
            mixture,
            args.sample_interval,
            args.noise,
            args.drop,
            args.seed,
        )
    except ValueError as exc:
        raise CliError(f"bad fleet parameters: {exc}", EXIT_USAGE) from None
    try:
        write_road_graph(fleet.graph, outdir / "nodes.csv", outdir / "edges.csv")
        write_traces_csv(fleet.traces, outdir / "traces.csv")
        with open(outdir / "planted.csv", "w") as fh:
            fh.write("trip_id,theta\n")
            for tr, th in zip(fleet.traces, fleet.planted_theta):
                fh.write(f"{tr.trip_id},{th!r}\n")
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    print(_dumps({"trips": len(fleet.traces), "outdir": str(outdir)}))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="freeflow",
        description="Price-of-Anarchy bounds, equilibrium solving, worst-case instances and trip θ estimation.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "Instance JSON (explicit): {\"resources\": [{\"id\", \"latency\": {\"coeffs\": {deg: a}, \"beta\"}}],\n"
            "  \"types\": [{\"demand\", \"strategies\": [[ids]]}]}\n"
            "Instance JSON (network): {\"nodes\", \"edges\": [{\"id\", \"from\", \"to\", \"latency\"}],\n"
            "  \"commodities\": [{\"source\", \"sink\", \"demand\"}]}\n"
            "Latency mini-language: x, x^p, a*x^p and sums such as '2*x^4 + x + 0.5'.\n"
            "Exit codes: 0 ok, 2 usage/validation, 3 I/O, 4 non-convergence."
        ),
    )
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def out(p):
        p.add_argument("-o", "--output", help="write to this file instead of stdout")

    p = sub.add_parser("bounds", help="tight PoA bound for polynomial latencies of degrees q..p")
    p.add_argument("-p", type=int, required=True, help="maximum degree")
    p.add_argument("-q", type=int, required=True, help="minimum degree (1 <= q <= p)")
    p.add_argument("-t", "--theta", type=_theta, required=True, help="free-flow ratio θ >= 0 or 'inf'")
    p.add_argument("-T", "--topology", default="general", choices=[t.value for t in bounds.Topology])
    out(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("table1", help="CSV of the bound table for p<=4, θ in {0, 1/2, 1, inf}")
    out(p)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("curves", help="CSV theta,general,path_disjoint,gamma_inf on an even θ grid")
    p.add_argument("-p", type=int, required=True)
    p.add_argument("-q", type=int, required=True)
    p.add_argument("-M", "--theta-max", type=_theta, default=1.0)
    p.add_argument("-s", "--steps", type=int, default=101)
    out(p)
    p.set_defaults(func=cmd_curves)

    for name, func, helptext in (
        ("solve", cmd_solve, "equilibrium (or optimum) of an instance file; prints a solve report"),
        ("poa", cmd_poa, "price of anarchy of an instance file"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("instance", help="instance JSON file")
        p.add_argument("--tol", type=float, default=solver.DEFAULT_TOL, help="normalized gap tolerance")
        p.add_argument("-i", "--max-iters", type=int, default=solver.DEFAULT_MAX_ITERS)
        p.add_argument("-S", "--seed", type=int, default=None, help="random initial profile")
        out(p)
        p.set_defaults(func=func)
        if name == "solve":
            p.add_argument("--optimum", action="store_true", help="minimize total latency instead")
        else:
            p.add_argument("-b", "--brute-force", type=int, metavar="RES", help="grid search with this resolution")
            p.add_argument("-F", "--full", action="store_true", help="include flow profiles")

    p = sub.add_parser("generate", help="worst-case instance plus a .meta.json sidecar")
    gsub = p.add_subparsers(dest="kind", required=True)

    g = gsub.add_parser("pigou", help="links 1 and x + c")
    g.add_argument("-c", type=float, required=True)
    out(g)

    for kind in ("multilevel", "network"):
        g = gsub.add_parser(kind, help="multi-level load-balancing instance" + (" as a network" if kind == "network" else ""))
        g.add_argument("-k", type=float, required=True)
        g.add_argument("-l", type=float, required=True)
        g.add_argument("-t", "--theta", type=_theta, required=True)
        g.add_argument("-n", type=int, required=True)
        g.add_argument("-m", type=int, required=True)
        g.add_argument("-f", "--latency", type=_latency, default=parse_latency("x"))
        if kind == "network":
            g.add_argument("-B", "--beta", type=float, default=1.0, help="constant latency of padding edges")
            g.add_argument("-H", "--h", type=int, default=None, help="path scale (default: smallest valid)")
        out(g)

    g = gsub.add_parser("parallel-gamma", help="parallel links attaining the variational bound")
    for name in ("k1", "l1", "k2", "l2"):
        g.add_argument(f"--{name}", type=float, required=True)
    g.add_argument("--f1", type=_latency, default=parse_latency("x"))
    g.add_argument("--f2", type=_latency, default=parse_latency("x"))
    g.add_argument("-n", type=int, required=True)
    out(g)

    g = gsub.add_parser("twolink-eta", help="two links attaining the path-disjoint θ-bound")
    g.add_argument("-k", type=float, required=True)
    g.add_argument("-l", type=float, required=True)
    g.add_argument("-t", "--theta", type=_theta, required=True)
    g.add_argument("-f", "--latency", type=_latency, default=parse_latency("x"))
    out(g)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser(
        "estimate-theta",
        help="per-trip θ from a road graph and traces",
        description=(
            "nodes CSV: id,lat,lon; edges CSV: id,from,to,length_m,speed_mps,road_type "
            "(blank speed falls back to the road type); traces CSV: trip_id,timestamp,lat,lon. "
            "Writes trip_id,best_ff_s,data_ff_s,deviation,theta_hat,n_small_gaps,n_large_gaps "
            "and a JSON summary (deciles and fractions below 0.25, 0.5, 0.88, 1)."
        ),
    )
    p.add_argument("-N", "--nodes", required=True)
    p.add_argument("-E", "--edges", required=True)
    p.add_argument("-r", "--traces", required=True)
    p.add_argument("-R", "--snap-radius", type=float, default=30.0, help="meters (default 30)")
    p.add_argument("-g", "--small-gap", type=float, default=300.0, help="small/large gap threshold, meters")
    p.add_argument("-s", "--summary", help="summary JSON path (default: <output>.summary.json or stderr)")
    out(p)
    p.set_defaults(func=cmd_estimate_theta)

    p = sub.add_parser("synth-fleet", help="write a synthetic grid, traces and planted θ values")
    p.add_argument("-d", "--outdir", required=True)
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--cols", type=int, default=20)
    p.add_argument("-n", "--trips", type=int, default=100)
    p.add_argument("-x", "--mixture", nargs="+", default=["0:1"], help="theta:weight pairs")
    p.add_argument("-i", "--sample-interval", type=float, default=4.0)
    p.add_argument("--noise", type=float, default=0.0, help="positional noise std, meters")
    p.add_argument("--drop", type=float, default=0.0, help="independent point-drop probability")
    p.add_argument("-S", "--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_fleet)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"freeflow: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
