"""Gaussian free field, the isomorphism with loop-soup local times, cluster
signs, and the exploration of a cluster with its drift check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .graph_core import MetricGraph
from .harmonic import green_function, hitting_probability, vertex_rates
from .loop_soup import sample_crossing_counts, sample_vertex_local_times
from .occupation import ClusterSet, edge_field_batch
from .stats import StatReport, ks_one_sample, ks_two_sample


# ---------------------------------------------------------------- GFF


def sample_gff(g: MetricGraph, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """(size, V) centered Gaussian vectors with covariance G; zero at the sink."""
    green = green_function(g)
    idx = g.interior
    cov = green[np.ix_(idx, idx)]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("Green function is not positive definite") from None
    out = np.zeros((size, g.n_vertices))
    out[:, idx] = rng.standard_normal((size, len(idx))) @ chol.T
    return out


def soup_local_times(g: MetricGraph, size: int, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    res = sample_crossing_counts(g, size, rng)
    return sample_vertex_local_times(res["k"], g, rng), res


def lejan_samples(g: MetricGraph, reps: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Soup vertex local times and independent half squared GFF values."""
    times, _ = soup_local_times(g, reps, rng)
    phi = sample_gff(g, rng, reps)
    return times, 0.5 * phi * phi


def lejan_check(g: MetricGraph, reps: int, rng: np.random.Generator, seed: int = 0,
                samples: tuple | None = None) -> StatReport:
    """Vertex local times of the soup against half the squared GFF."""
    times, half_sq = samples if samples is not None else lejan_samples(g, reps, rng)
    reps = len(times)
    green = green_function(g)
    report = StatReport("lejan", seed, {"reps": reps, "vertices": [str(l) for l in g.labels]})
    inner = [int(v) for v in g.interior]
    for v in inner:
        stat, p = ks_two_sample(times[:, v], half_sq[:, v])
        report.add(f"KS {g.labels[v]}", stat, p, reps)
    for i, u in enumerate(inner):
        for w in inner[i:]:
            prod = times[:, u] * times[:, w]
            target = 0.25 * (green[u, u] * green[w, w] + 2 * green[u, w] ** 2)
            se = prod.std(ddof=1) / math.sqrt(reps)
            report.add(f"E[L({g.labels[u]})L({g.labels[w]})]", prod.mean(), None, reps,
                       passed=abs(prod.mean() - target) <= 3 * se, expected=target, se=se, explicit=True)
    return report.finalize()


def lupu_signs(g: MetricGraph, clusters: ClusterSet, rng: np.random.Generator) -> np.ndarray:
    """One fair sign per cluster; a vertex outside every cluster forms its
    own cluster. The sink gets 0."""
    signs = np.zeros(g.n_vertices, dtype=np.int64)
    for c in clusters.clusters:
        signs[c["vertices"]] = rng.choice((-1, 1))
    for v in g.interior:
        if signs[v] == 0:
            signs[v] = rng.choice((-1, 1))
    return signs


def signed_field_check(g: MetricGraph, reps: int, rng: np.random.Generator, grid=33, seed: int = 0) -> StatReport:
    """sign * sqrt(2 L(v)) against N(0, G(v, v)) at every vertex."""
    from .occupation import extract_clusters, sample_occupation_batch

    times, res = soup_local_times(g, reps, rng)
    fields = sample_occupation_batch(g, res["n"], times, rng, grid)
    zero = np.stack([fields[e].zero_hit for e in range(g.n_edges)], axis=1)
    signed = np.zeros((reps, g.n_vertices))
    for i in range(reps):
        signs = lupu_signs(g, extract_clusters(g, zero[i], times[i]), rng)
        signed[i] = signs * np.sqrt(2 * times[i])
    green = green_function(g)
    report = StatReport("signed-field", seed, {"reps": reps})
    for v in g.interior:
        stat, p = ks_one_sample(signed[:, v], sps.norm(scale=math.sqrt(green[v, v])).cdf)
        report.add(f"KS {g.labels[v]}", stat, p, reps)
    return report.finalize()


# ---------------------------------------------------------------- exploration


@dataclass
class Phase:
    """One traversal of an edge segment. While it runs the explored set is
    fixed, the drift is (target - X) / R with R = remaining length + 1/C, and
    H(frontier, p) = sigma_p / (2 R)."""

    edge: int
    start: int
    target_end: int
    segment: float
    escape: float           # 1/C, zero when the far end is already explored
    target: float           # harmonic average M of explored values seen from the far end
    sigma: dict


@dataclass
class ExplorationState:
    start_vertex: int
    times: np.ndarray        # frontier clock at the start of each step
    x: np.ndarray            # X at the start of each step
    dx: np.ndarray
    dt: np.ndarray
    drift: np.ndarray        # conditional mean of dx
    variance: np.ndarray     # conditional variance of dx
    edge: np.ndarray
    phases: list = field(default_factory=list)
    explored: list = field(default_factory=list)

    @property
    def zeta(self) -> float:
        return float(self.times[-1] + self.dt[-1]) if len(self.times) else 0.0

    def dump_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "edge", "X"])
            for t, e, x in zip(self.times, self.edge, self.x):
                w.writerow([repr(float(t)), int(e), repr(float(x))])


@dataclass
class FieldReplay:
    """A sampled field: vertex local times and per-edge traces on grids."""

    times: np.ndarray                 # (V,)
    grids: dict                       # edge -> grid positions from endpoint a
    values: dict                      # edge -> field values on the grid
    first_zero: dict
    last_zero: dict


def sample_replays(g: MetricGraph, reps: int, rng: np.random.Generator, step: float | None = None) -> list:
    """Soups with fields on grids of spacing `step` (default: shortest edge / 32)."""
    if step is None:
        step = float(g.lengths.min()) / 32.0
    times, res = soup_local_times(g, reps, rng)
    per_edge = {}
    for e in range(g.n_edges):
        m = max(2, int(round(g.lengths[e] / step)) + 1)
        grid = np.linspace(0.0, g.lengths[e], m)
        per_edge[e] = edge_field_batch(times[:, g.edge_a[e]], times[:, g.edge_b[e]], g.lengths[e],
                                       res["n"][:, e], grid, rng)
    out = []
    for i in range(reps):
        out.append(FieldReplay(
            times[i],
            {e: b.grid for e, b in per_edge.items()},
            {e: b.values[i] for e, b in per_edge.items()},
            {e: (float(b.first_zero[i]) if b.zero_hit[i] else math.nan) for e, b in per_edge.items()},
            {e: (float(b.last_zero[i]) if b.zero_hit[i] else math.nan) for e, b in per_edge.items()},
        ))
    return out


def _subgraph(g: MetricGraph, edges: list, remainders: dict) -> MetricGraph:
    """Unexplored graph: listed edges in full plus remainders rooted at the sink."""
    ea, eb, ln = [], [], []
    for e in edges:
        ea.append(int(g.edge_a[e]))
        eb.append(int(g.edge_b[e]))
        ln.append(float(g.lengths[e]))
    for e, (live, length) in remainders.items():
        ea.append(g.sink)
        eb.append(live)
        ln.append(length)
    return MetricGraph(g.labels, g.sink, np.array(ea, dtype=int), np.array(eb, dtype=int), np.array(ln, dtype=float))


def _escape(g_rest: MetricGraph, far: int, absorbing: set, values: dict) -> tuple[float, float, dict]:
    """From `far`, conductance to the absorbing set (C) and the harmonic
    measure sigma of the absorbing points; returns (1/C, M, sigma)."""
    rates = vertex_rates(g_rest)
    if rates[far] == 0:
        return math.inf, 0.0, {}
    dead = {v for v in range(g_rest.n_vertices) if rates[v] == 0}
    flux = {}
    for p in sorted(absorbing):
        h = hitting_probability(g_rest, p, (absorbing - {p}) | {far} | dead)
        total = 0.0
        for e, root, tip in g_rest.directed_edges():
            if root == far and tip != far:
                total += h[tip] / g_rest.lengths[e]
        if total > 0:
            flux[p] = total
    conductance = sum(flux.values())
    if conductance <= 0:
        return math.inf, 0.0, {}
    sigma = {p: f / conductance for p, f in flux.items()}
    target = sum(s * values[p] for p, s in sigma.items())
    return 1.0 / conductance, target, sigma


def explore_cluster(g: MetricGraph, start: int, replay: FieldReplay) -> ExplorationState:
    """Depth-first exploration of the cluster of `start` along a replayed
    field, lowest edge id first. A zero cuts the edge; the part beyond the
    cut is re-rooted at the sink and can be explored later from its other
    end up to the zero nearest to that end."""
    if any(g.is_self_loop(e) for e in range(g.n_edges)):
        raise ValueError("exploration does not handle self-loops")
    X = {g.sink: 0.0, start: math.sqrt(replay.times[start])}
    status = {e: "fresh" for e in range(g.n_edges)}
    remainders: dict = {}   # edge -> (live end, length from live end to the root)
    stack = [start]
    rows = {k: [] for k in ("t", "x", "dx", "dt", "drift", "var", "edge")}
    phases = []
    clock = 0.0
    while stack:
        u = stack[-1]
        choice = None
        for e in g.edges_at(u):
            if status[e] == "fresh" or (status[e] == "remainder" and remainders[e][0] == u):
                choice = e
                break
        if choice is None:
            stack.pop()
            continue
        e = choice
        rho = float(g.lengths[e])
        from_a = int(g.edge_a[e]) == u
        if status[e] == "fresh":
            far = int(g.other_end(e, u))
            segment = rho
        else:
            far = g.sink
            segment = remainders[e][1]
        # positions measured from u
        grid = replay.grids[e] if from_a else (rho - replay.grids[e][::-1])
        vals = replay.values[e] if from_a else replay.values[e][::-1]
        fz = replay.first_zero[e] if from_a else rho - replay.last_zero[e]
        stop = segment if math.isnan(fz) else min(fz, segment)
        if far == g.sink or far in X:
            escape, target, sigma = 0.0, X.get(far, 0.0), {far: 1.0}
        else:
            rest_edges = [f for f in range(g.n_edges) if f != e and status[f] == "fresh"]
            rest_rem = {f: r for f, r in remainders.items() if status[f] == "remainder"}
            absorbing = set(X)
            escape, target, sigma = _escape(_subgraph(g, rest_edges, rest_rem), far, absorbing, X)
        phases.append(Phase(e, u, far, segment, escape, target, sigma))
        inside = grid < stop - 1e-12
        pos = np.append(grid[inside], stop)
        xs = np.sqrt(np.maximum(vals[inside], 0.0))
        x_end = 0.0 if stop < segment or far == g.sink else math.sqrt(max(vals[-1], 0.0))
        xs = np.append(xs, x_end)
        ds = np.diff(pos)
        keep = ds > 0
        r = segment - pos[:-1]
        big_r = r + escape
        with np.errstate(divide="ignore", invalid="ignore"):
            drift = np.where(np.isinf(big_r), 0.0, (target - xs[:-1]) * ds / big_r)
            var = np.where(np.isinf(big_r), ds, ds * (big_r - ds) / big_r)
        rows["t"].append(clock + pos[:-1][keep])
        rows["x"].append(xs[:-1][keep])
        rows["dx"].append(np.diff(xs)[keep])
        rows["dt"].append(ds[keep])
        rows["drift"].append(drift[keep])
        rows["var"].append(np.maximum(var[keep], 0.0))
        rows["edge"].append(np.full(int(keep.sum()), e))
        clock += stop
        if stop < segment:
            # cut: what lies beyond is rooted at the sink
            if status[e] == "fresh" and far != g.sink:
                status[e] = "remainder"
                remainders[e] = (far, rho - stop)
            else:
                status[e] = "done"
                remainders.pop(e, None)
        else:
            status[e] = "done"
            remainders.pop(e, None)
            if far != g.sink and far not in X:
                X[far] = math.sqrt(replay.times[far])
                stack.append(far)
    cat = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in rows.items()}
    return ExplorationState(start, cat["t"], cat["x"], cat["dx"], cat["dt"], cat["drift"], cat["var"],
                            cat["edge"].astype(int), phases, sorted(v for v in X if v != g.sink))


def sde_drift_check(trajectories, seed: int = 0, z: float = 3.0, config: dict | None = None) -> StatReport:
    """Slope of dX on the predicted drift, and the ratio of squared
    residuals to the predicted variance; both should be 1."""
    dx = np.concatenate([t.dx for t in trajectories])
    drift = np.concatenate([t.drift for t in trajectories])
    var = np.concatenate([t.variance for t in trajectories])
    report = StatReport("sde", seed, dict(config or {}, steps=int(len(dx)), trajectories=len(trajectories)))
    if len(dx) < 1000:
        raise RuntimeError("too few increments")
    sxx = float(np.sum(drift * drift))
    slope = float(np.sum(dx * drift) / sxx)
    resid = dx - slope * drift
    se = math.sqrt(float(np.sum(drift * drift * resid * resid))) / sxx
    report.add("drift slope", slope, None, len(dx), passed=abs(slope - 1) <= z * se, se=se,
               ci=[slope - z * se, slope + z * se], explicit=True)
    sq = (dx - drift) ** 2
    ratio = float(sq.sum() / var.sum())
    se_r = math.sqrt(float(np.sum((sq - ratio * var) ** 2))) / float(var.sum())
    report.add("quadratic variation rate", ratio, None, len(dx), passed=abs(ratio - 1) <= z * se_r, se=se_r,
               ci=[ratio - z * se_r, ratio + z * se_r], explicit=True)
    return report.finalize()
