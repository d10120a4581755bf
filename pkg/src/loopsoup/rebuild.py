"""Rebuild loops from edge-level data: uniform matching of crossing ends at
each vertex, and the split of each vertex's excursion labels between
crossing loops and point-loops."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph_core import MetricGraph
from .loop_soup import DiscreteLoop, build_stage_tables, canonical_loop, loop_weight, sample_discrete_soup
from .stats import StatReport, chi_square_two_sample

PD_RESIDUAL = 1e-9


class ParityError(ValueError):
    pass


@dataclass
class GluingPlan:
    pairing: dict            # vertex -> list of matched end pairs
    beta_share: np.ndarray   # per vertex share of labels kept by point-loops
    point_masses: dict       # vertex -> PD(0, 1/2) masses summing to beta_share
    split_points: dict       # vertex -> sorted uniforms on [beta_share, 1]


@dataclass
class ReconstructedLoops:
    loops: list                                      # DiscreteLoop per crossing loop
    visit_labels: list = field(default_factory=list)  # per loop: list of (vertex, lo, hi)
    point_loops: dict = field(default_factory=dict)   # vertex -> list of (lo, hi)
    plan: GluingPlan | None = None

    def visits_at(self, v: int) -> int:
        return sum(1 for labels in self.visit_labels for (u, _, _) in labels if u == v)


def poisson_dirichlet_half(total: float, rng: np.random.Generator, residual: float = PD_RESIDUAL) -> np.ndarray:
    """Stick-breaking masses of PD(0, 1/2) scaled to `total`, in size-biased
    order, stopping once the unbroken stick is below `residual` of the total."""
    masses = []
    left = 1.0
    while left >= residual:
        v = rng.beta(1.0, 0.5)
        masses.append(left * v)
        left *= 1.0 - v
    masses[-1] += left
    return total * np.array(masses)


def glue(g: MetricGraph, crossings, rng: np.random.Generator) -> ReconstructedLoops:
    """Loops from crossing counts with fresh gluing randomness."""
    n = np.asarray(crossings, dtype=np.int64)
    if np.any(n[g.sink_adjacent] > 0):
        raise ValueError("loops never cross an edge at the sink")
    inc = g.incidence()
    ends_per_vertex = inc @ n
    if np.any(ends_per_vertex % 2):
        raise ParityError("odd number of crossing ends at a vertex")
    k = ends_per_vertex // 2

    # end (e, j, s): crossing j of edge e, s = 0 at endpoint a, 1 at endpoint b
    ends_at: dict = {v: [] for v in range(g.n_vertices)}
    for e in range(g.n_edges):
        a, b = int(g.edge_a[e]), int(g.edge_b[e])
        for j in range(int(n[e])):
            ends_at[a].append((e, j, 0))
            ends_at[b].append((e, j, 1))
    partner: dict = {}
    pairing: dict = {}
    for v, ends in ends_at.items():
        if not ends:
            continue
        perm = rng.permutation(len(ends))
        pairs = [(ends[perm[i]], ends[perm[i + 1]]) for i in range(0, len(ends), 2)]
        pairing[v] = pairs
        for x, y in pairs:
            partner[x], partner[y] = y, x

    beta = np.ones(g.n_vertices)
    point_masses, split_points = {}, {}
    for v in range(g.n_vertices):
        if v == g.sink:
            continue
        if k[v] > 0:
            beta[v] = rng.beta(0.5, k[v])
        point_masses[v] = poisson_dirichlet_half(beta[v], rng)
        split_points[v] = np.sort(rng.uniform(beta[v], 1.0, max(int(k[v]) - 1, 0)))
    plan = GluingPlan(pairing, beta, point_masses, split_points)

    intervals: dict = {}
    for v, pairs in pairing.items():
        cuts = np.concatenate([[beta[v]], split_points[v], [1.0]])
        for i, (x, y) in enumerate(pairs):
            intervals[x] = intervals[y] = (v, float(cuts[i]), float(cuts[i + 1]))

    used: set = set()
    loops, labels = [], []
    for e in range(g.n_edges):
        for j in range(int(n[e])):
            if (e, j) in used:
                continue
            steps, visit = [], []
            cur = (e, j, 0)
            while True:
                ce, cj, side = cur
                used.add((ce, cj))
                steps.append((ce, side))
                far = (ce, cj, 1 - side)
                visit.append(intervals[far])
                cur = partner[far]
                if cur == (e, j, 0):
                    break
            loops.append(canonical_loop(steps))
            labels.append(visit)

    points = {}
    for v, masses in point_masses.items():
        edges_ = np.concatenate([[0.0], np.cumsum(masses)])
        points[v] = [(float(lo), float(hi)) for lo, hi in zip(edges_[:-1], edges_[1:])]
    return ReconstructedLoops(loops, labels, points, plan)


# ---------------------------------------------------------------- round trip


def _loop_summaries(loop_lists) -> dict:
    counts = np.array([len(ls) for ls in loop_lists])
    lengths = [l.length for ls in loop_lists for l in ls]
    multisets = [tuple(sorted(e for e, _ in l.steps)) for ls in loop_lists for l in ls]
    return {"counts": counts, "lengths": lengths, "multisets": multisets}


def roundtrip_check(g: MetricGraph, reps: int, rng: np.random.Generator, seed: int = 0) -> StatReport:
    """Independent halves: loops sampled directly against loops rebuilt from
    the crossing counts of other direct samples."""
    tables = build_stage_tables(g)
    half = reps // 2
    direct = [sample_discrete_soup(g, rng, tables=tables).loops for _ in range(half)]
    rebuilt = []
    for _ in range(reps - half):
        config = sample_discrete_soup(g, rng, tables=tables)
        rebuilt.append(glue(g, config.crossings, rng).loops)
    a, b = _loop_summaries(direct), _loop_summaries(rebuilt)
    report = StatReport("roundtrip", seed, {"reps": reps})

    width = int(max(a["counts"].max(initial=0), b["counts"].max(initial=0))) + 1
    stat, p, df = chi_square_two_sample(np.bincount(a["counts"], minlength=width),
                                        np.bincount(b["counts"], minlength=width))
    report.add("loop count law", stat, p, reps, df=df)
    mean_a, mean_b = a["counts"].mean(), b["counts"].mean()
    se = math.sqrt(a["counts"].var(ddof=1) / len(a["counts"]) + b["counts"].var(ddof=1) / len(b["counts"]))
    report.add("loop count mean difference", mean_b - mean_a, None, reps,
               passed=abs(mean_b - mean_a) <= 3 * se + 1e-12, se=se, explicit=True)
    if a["lengths"] or b["lengths"]:
        width = max(a["lengths"] + b["lengths"]) + 1
        stat, p, df = chi_square_two_sample(np.bincount(a["lengths"], minlength=width),
                                            np.bincount(b["lengths"], minlength=width))
        report.add("loop length histogram", stat, p, len(a["lengths"]) + len(b["lengths"]), df=df)
        keys = sorted(set(a["multisets"]) | set(b["multisets"]))
        index = {key: i for i, key in enumerate(keys)}
        ca = np.bincount([index[m] for m in a["multisets"]], minlength=len(keys))
        cb = np.bincount([index[m] for m in b["multisets"]], minlength=len(keys))
        stat, p, df = chi_square_two_sample(ca, cb)
        report.add("edge multisets", stat, p, len(a["multisets"]) + len(b["multisets"]), df=df)

    triangle = _triangle_loop(g)
    if triangle is not None:
        nu = loop_weight(triangle, g)
        hits = np.array([sum(1 for l in ls if l == triangle) for ls in rebuilt])
        se = math.sqrt(nu / len(hits))
        report.add("triangle loop mean (rebuilt)", hits.mean(), None, len(hits),
                   passed=abs(hits.mean() - nu) <= 3 * se, expected=nu, se=se, explicit=True)
    return report.finalize()


def _triangle_loop(g: MetricGraph) -> DiscreteLoop | None:
    """The loop around the first 3-cycle of inner edges, if any."""
    inner = [int(e) for e in g.inner_edges if not g.is_self_loop(int(e))]
    for i, e1 in enumerate(inner):
        for e2 in inner[i + 1:]:
            for e3 in inner:
                if e3 in (e1, e2):
                    continue
                steps = _close_cycle(g, [e1, e2, e3])
                if steps is not None:
                    return canonical_loop(steps)
    return None


def _close_cycle(g, edges):
    start = int(g.edge_a[edges[0]])
    pos, steps = start, []
    for e in edges:
        a, b = int(g.edge_a[e]), int(g.edge_b[e])
        if pos == a:
            steps.append((e, 0))
            pos = b
        elif pos == b:
            steps.append((e, 1))
            pos = a
        else:
            return None
    return steps if pos == start else None
