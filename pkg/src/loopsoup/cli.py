"""Command line harness: sampling, verification experiments and report merging.

    loopsoup sample loops|field|gff [--graph G] [--seed S] [--out DIR]
    loopsoup verify EXPERIMENT [--graph G] [--reps N] [--seed S] [--eps E]
                               [--grid M] [--caps a,b,c] [--out DIR]
    loopsoup report merge A.json B.json ... --out DIR

A graph is a JSON file or one of the built-in names listed by --help.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import graph_core as gc
from .conditioning import (ConditionWindow, check_outside_gamma, compare_direct_limit, crossed_twice_fraction,
                           sample_n_rejection, verify_domain_markov, verify_markovn_poisson,
                           verify_star_correspondence)
from .currents import verify_cluster_uniformity
from .gff_iso import explore_cluster, lejan_check, lejan_samples, sample_gff, sample_replays, sde_drift_check
from .harmonic import green_function
from .loop_soup import sample_discrete_soup, sample_vertex_local_times
from .occupation import dump_field_csv, sample_occupation
from .one_dim import crossing_law_check
from .rebuild import roundtrip_check
from .stats import StatReport
from .streams import map_chunks, stream

BUILTIN = {
    "single-edge": gc.single_edge,
    "path": gc.path_graph,
    "triangle": gc.triangle_graph,
    "triangle-all-sinks": lambda: gc.triangle_graph(sink_at=("v1", "v2", "v3")),
    "theta": gc.theta_graph,
    "parallel-pair": gc.parallel_pair_graph,
    "two-boundary": gc.two_boundary_graph,
    "figure": gc.figure_graph,
}

DEFAULT_GRAPH = {
    "lejan": "path", "cluster-uniformity": "theta", "markov": "two-boundary", "star": "triangle",
    "n-measure": "triangle", "kingman": None, "roundtrip": "triangle", "sde": "parallel-pair",
}
DEFAULT_REPS = {
    "lejan": 100_000, "cluster-uniformity": 100_000, "markov": 1_000_000, "star": 100_000,
    "n-measure": 400_000, "kingman": 20_000, "roundtrip": 40_000, "sde": 10_000,
}


def load(spec: str | None, experiment: str | None = None) -> gc.MetricGraph:
    name = spec or DEFAULT_GRAPH.get(experiment or "", None) or "path"
    if name in BUILTIN:
        return BUILTIN[name]()
    return gc.load_graph(name)


def _vertices(g: gc.MetricGraph, text: str) -> list[int]:
    """Vertex labels, falling back to integer indices."""
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if tok in g.labels:
            out.append(g.index(tok))
        else:
            out.append(int(tok))
    return out


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# ---------------------------------------------------------------- experiments


def run_experiment(name: str, args) -> tuple[StatReport, dict]:
    """Returns the report and a dict of CSV tables {filename: (header, rows)}."""
    seed = args.seed
    reps = args.reps or DEFAULT_REPS[name]
    rng = stream(seed, name)
    tables: dict = {}
    if name == "lejan":
        g = load(args.graph, name)
        report = _lejan_chunked(g, reps, seed)
    elif name == "cluster-uniformity":
        g = load(args.graph, name)
        report = verify_cluster_uniformity(g, reps, rng, grid=args.grid, seed=seed)
    elif name == "markov":
        g = load(args.graph, name)
        inside = [int(e) for e in (args.inside or "0").split(",")]
        verts = sorted({int(g.edge_a[e]) for e in inside} | {int(g.edge_b[e]) for e in inside})
        sub = gc.subgraph_boundary(g, verts, inside)
        centers = [tuple(_floats(c)) for c in (args.centers or "0.5,0.5;1,1;0.5,1.5").split(";")]
        report = verify_domain_markov(g, sub, reps, rng, centers, eps=args.eps, grid=args.grid, seed=seed)
    elif name == "star":
        g = load(args.graph, name)
        W = _vertices(g, args.star or "1")
        xs = _floats(args.x or ",".join(["1.0"] * len(W)))
        report = verify_star_correspondence(g, W, dict(zip(W, xs)), args.eps, reps, rng, stub_length=args.stub or 2.0,
                                            seed=seed)
    elif name == "n-measure":
        report, tables = _n_measure(args, reps, rng, seed)
    elif name == "kingman":
        report = crossing_law_check(args.rho, args.l1, args.l2, reps, rng, grid=257, seed=seed)
    elif name == "roundtrip":
        g = load(args.graph, name)
        report = roundtrip_check(g, reps, rng, seed=seed)
    elif name == "sde":
        g = load(args.graph, name)
        replays = sample_replays(g, reps, rng)
        start = _vertices(g, args.start or "0")[0]
        trajectories = [explore_cluster(g, start, r) for r in replays]
        report = sde_drift_check(trajectories, seed=seed, config={"graph": args.graph or "parallel-pair"})
        first = trajectories[0]
        tables["trajectory.csv"] = (["t", "edge", "X"], list(zip(first.times, first.edge, first.x)))
    else:
        raise ValueError(f"unknown experiment {name!r}")
    report.config.setdefault("graph", args.graph or DEFAULT_GRAPH.get(name))
    return report, tables


def _lejan_chunk(size, rng, g):
    return lejan_samples(g, size, rng)


def _lejan_chunked(g, reps, seed) -> StatReport:
    """Chunks draw from their own indexed streams and are stacked in chunk
    order, so serial and parallel runs see the same samples."""
    chunks = map_chunks(_lejan_chunk, seed, "lejan", reps, args=(g,))
    times = np.concatenate([c[0] for c in chunks])
    half_sq = np.concatenate([c[1] for c in chunks])
    report = lejan_check(g, reps, None, seed=seed, samples=(times, half_sq))
    report.config["chunks"] = len(chunks)
    return report


def _n_measure(args, reps, rng, seed):
    g = load(args.graph, "n-measure")
    W = _vertices(g, args.star or "1")
    stub = args.stub or 4.0
    star = gc.star_extend(g, W, stub)
    caps = _floats(args.caps or "0.4,0.2,0.1")
    report = StatReport("n-measure", seed, {"caps": caps, "W": W, "stub": stub, "reps": reps})
    parts = [crossed_twice_fraction(star, caps, reps, rng, seed=seed)]
    window = ConditionWindow({v: min(caps) for v in W})
    sample = sample_n_rejection(star, window, args.accepted, rng)
    parts.append(check_outside_gamma(sample, star, seed=seed))
    level = float(np.median(sample.times[:, list(star.replicas)]))
    centers = [{r: level for r in star.replicas}]
    parts.append(verify_markovn_poisson(star, sample, centers, eps=max(args.eps, 0.25), seed=seed))
    parts.append(compare_direct_limit(star, {v: 1.0 for v in W}, args.eps, reps, rng, seed=seed))
    for part in parts:
        for r in part.rows:
            report.rows.append(r)
        report.config[f"{part.experiment}_passed"] = part.passed
    tables = {"caps.csv": (["cap", "fraction"], [(r.name, r.statistic) for r in parts[0].rows])}
    return report, tables


# ---------------------------------------------------------------- output


def write_outputs(report: StatReport, tables: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    rows = [(r.name, r.statistic, r.p_value, r.n, r.passed) for r in report.rows]
    _write_csv(out / "rows.csv", ["name", "statistic", "p_value", "n", "passed"], rows)
    for name, (header, data) in tables.items():
        _write_csv(out / name, header, data)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def cmd_sample(args) -> int:
    g = load(args.graph)
    rng = stream(args.seed, f"sample-{args.what}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.what == "loops":
        config = sample_discrete_soup(g, rng)
        text = config.dump(g)
        target = Path(args.emit) if args.emit else out / "loops.txt"
        target.write_text(text + ("\n" if text else ""))
        _write_csv(out / "crossings.csv", ["edge", "crossings"], list(enumerate(config.crossings.tolist())))
    elif args.what == "field":
        config = sample_discrete_soup(g, rng)
        times = sample_vertex_local_times(config.visits, g, rng)
        field = sample_occupation(g, config.crossings, times, rng, args.grid)
        dump_field_csv(field, out / "field.csv")
        _write_csv(out / "vertex_times.csv", ["vertex", "local_time"],
                   [(str(g.labels[v]), float(times[v])) for v in range(g.n_vertices)])
    elif args.what == "gff":
        phi = sample_gff(g, rng, args.reps or 1)
        _write_csv(out / "gff.csv", [str(l) for l in g.labels], phi.tolist())
        green = green_function(g)
        _write_csv(out / "green.csv", [str(l) for l in g.labels], green.tolist())
    return 0


def cmd_verify(args) -> int:
    report, tables = run_experiment(args.experiment, args)
    write_outputs(report, tables, Path(args.out))
    print(report.summary())
    return 0 if report.passed else 1


def cmd_report(args) -> int:
    bodies = []
    for path in args.inputs:
        data = json.loads(Path(path).read_text())
        bodies.append(data["body"] if "body" in data else data)
    merged = {"experiment": "merged", "reports": bodies, "passed": all(b.get("passed", False) for b in bodies)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps({"body": merged, "meta": {"inputs": list(args.inputs)}},
                                                indent=2, sort_keys=True) + "\n")
    rows = [(b.get("experiment"), r["name"], r["statistic"], r["p_value"], r["n"], r["passed"])
            for b in bodies for r in b.get("rows", [])]
    _write_csv(out / "rows.csv", ["experiment", "name", "statistic", "p_value", "n", "passed"], rows)
    print(f"merged {len(bodies)} reports: {'PASS' if merged['passed'] else 'FAIL'}")
    return 0 if merged["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopsoup", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--graph", help="graph JSON path or built-in: " + ", ".join(BUILTIN))
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--grid", type=int, default=33, help="grid points per edge")
        p.add_argument("--out", default="out")

    s = sub.add_parser("sample", help="draw one sample")
    s.add_argument("what", choices=["loops", "field", "gff"])
    s.add_argument("--emit", help="file for the loop dump")
    common(s)
    s.set_defaults(func=cmd_sample)

    v = sub.add_parser("verify", help="run a statistical experiment")
    v.add_argument("experiment", choices=list(DEFAULT_REPS))
    common(v)
    v.add_argument("--eps", type=float, default=0.05, help="window half-width")
    v.add_argument("--caps", help="comma-separated cap schedule")
    v.add_argument("--star", help="conditioned vertices (labels or ids)")
    v.add_argument("--x", help="local-time targets for the star vertices")
    v.add_argument("--stub", type=float, default=None,
                   help="stub length of star edges (default 2 for star, 4 for n-measure)")
    v.add_argument("--accepted", type=int, default=10_000, help="windowed samples to accept")
    v.add_argument("--inside", help="inside edge ids for the domain Markov check")
    v.add_argument("--centers", help="boundary-time bin centers, e.g. '0.5,0.5;1,1'")
    v.add_argument("--start", help="start vertex of the exploration")
    v.add_argument("--rho", type=float, default=1.0)
    v.add_argument("--l1", type=float, default=1.0)
    v.add_argument("--l2", type=float, default=1.0)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="combine reports")
    r.add_argument("action", choices=["merge"])
    r.add_argument("inputs", nargs="+")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (gc.GraphError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
