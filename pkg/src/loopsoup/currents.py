"""Parity configurations on clusters: the cycle space, uniform sampling,
counting, and the random-current parity weights."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .graph_core import MetricGraph
from .loop_soup import DiscreteLoopConfig, sample_crossing_counts, sample_vertex_local_times
from .occupation import ClusterSet, sample_occupation_batch
from .stats import StatReport, chi_square, correlation_z

MAX_ENUMERATION = 2 ** 20


@dataclass
class CycleBasis:
    edges: list
    vertices: list
    tree: list
    chords: list

    @property
    def dimension(self) -> int:
        return len(self.chords)


def cycle_basis(g: MetricGraph, edges, vertices=None) -> CycleBasis:
    """Spanning forest by Kruskal over edges in increasing id; the rest are
    chords. Self-loops are always chords."""
    edges = sorted(int(e) for e in edges)
    if vertices is None:
        vertices = sorted({int(g.edge_a[e]) for e in edges} | {int(g.edge_b[e]) for e in edges})
    parent = {v: v for v in vertices}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree, chords = [], []
    for e in edges:
        ra, rb = find(int(g.edge_a[e])), find(int(g.edge_b[e]))
        if ra == rb:
            chords.append(e)
        else:
            parent[max(ra, rb)] = min(ra, rb)
            tree.append(e)
    return CycleBasis(edges, list(vertices), tree, chords)


def _complete_tree(g: MetricGraph, basis: CycleBasis, alpha: np.ndarray) -> None:
    """Set tree-edge bits so every vertex has even parity, peeling leaves."""
    need = {v: 0 for v in basis.vertices}
    for e in basis.chords:
        if alpha[e] and g.edge_a[e] != g.edge_b[e]:
            need[int(g.edge_a[e])] ^= 1
            need[int(g.edge_b[e])] ^= 1
    incident: dict = {v: [] for v in basis.vertices}
    for e in basis.tree:
        incident[int(g.edge_a[e])].append(e)
        incident[int(g.edge_b[e])].append(e)
    remaining = set(basis.tree)
    leaves = [v for v in basis.vertices if len(incident[v]) == 1]
    while leaves:
        v = leaves.pop()
        live = [e for e in incident[v] if e in remaining]
        if not live:
            continue
        e = live[0]
        remaining.discard(e)
        alpha[e] = need[v]
        u = int(g.other_end(e, v))
        need[u] ^= need[v]
        need[v] = 0
        if sum(1 for f in incident[u] if f in remaining) == 1:
            leaves.append(u)
    if any(need.values()):
        raise RuntimeError("parity completion failed")


def admissible_uniform(g: MetricGraph, clusters: ClusterSet, rng: np.random.Generator) -> np.ndarray:
    """Uniform admissible configuration: fair bits on chords, tree edges
    forced. Zero off the clusters."""
    alpha = np.zeros(g.n_edges, dtype=np.int64)
    for c in clusters.clusters:
        basis = cycle_basis(g, c["edges"], c["vertices"])
        alpha[basis.chords] = rng.integers(0, 2, len(basis.chords))
        _complete_tree(g, basis, alpha)
    return alpha


def count_admissible(g: MetricGraph, clusters: ClusterSet) -> int:
    total = 0
    for c in clusters.clusters:
        total += len(c["edges"]) - len(c["vertices"]) + 1
    return 2 ** total


def is_admissible(g: MetricGraph, alpha) -> bool:
    alpha = np.asarray(alpha)
    return bool(np.all((g.incidence() @ alpha) % 2 == 0))


def parity_of_config(config: DiscreteLoopConfig | np.ndarray) -> np.ndarray:
    counts = config.crossings if isinstance(config, DiscreteLoopConfig) else np.asarray(config)
    return counts % 2


def enumerate_admissible(g: MetricGraph, edges) -> list[tuple]:
    """Every admissible configuration supported on `edges`, as 0/1 tuples
    over all edges, via the cycle space of a Kruskal basis."""
    basis = cycle_basis(g, edges)
    if 2 ** basis.dimension > MAX_ENUMERATION:
        raise ValueError("state space too large")
    out = []
    for bits in itertools.product((0, 1), repeat=basis.dimension):
        alpha = np.zeros(g.n_edges, dtype=np.int64)
        alpha[basis.chords] = bits
        _complete_tree(g, basis, alpha)
        out.append(tuple(int(a) for a in alpha))
    return sorted(out)


def current_parity_weights(g: MetricGraph, beta: dict) -> dict:
    """Exact parity law proportional to prod cosh(b)^(1 - a) sinh(b)^a over
    admissible configurations on the edges listed in `beta`."""
    edges = sorted(beta)
    configs = enumerate_admissible(g, edges)
    logw = []
    for alpha in configs:
        s = 0.0
        for e in edges:
            b = beta[e]
            if alpha[e]:
                s += math.log(math.sinh(b)) if b > 0 else -math.inf
            else:
                s += math.log(math.cosh(b))
        logw.append(s)
    logw = np.array(logw)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return {c: float(p) for c, p in zip(configs, w)}


def parity_bitstring(alpha) -> str:
    return "".join(str(int(a)) for a in alpha)


def verify_cluster_uniformity(g: MetricGraph, reps: int, rng: np.random.Generator, grid=33,
                              seed: int = 0, batch: int = 50_000) -> StatReport:
    """Loop soups with fields; on the event that every edge off the sink lies
    in one cluster, the crossing parities are uniform over admissible configs
    and uncorrelated with the field midpoint of the first such edge."""
    inner = [int(e) for e in g.inner_edges]
    e0 = inner[0]
    configs = enumerate_admissible(g, inner)
    index = {c: i for i, c in enumerate(configs)}
    counts = np.zeros(len(configs), dtype=np.int64)
    parity_bits, midpoints = [], []
    done = 0
    while done < reps:
        size = min(batch, reps - done)
        res = sample_crossing_counts(g, size, rng)
        times = sample_vertex_local_times(res["k"], g, rng)
        fields = sample_occupation_batch(g, res["n"], times, rng, grid)
        zero = np.stack([fields[e].zero_hit for e in inner], axis=1)
        full = ~zero.any(axis=1)
        alpha = res["n"][full] % 2
        for row in alpha:
            counts[index[tuple(int(a) for a in row)]] += 1
        parity_bits.append(alpha[:, e0])
        midpoints.append(fields[e0].values[full, fields[e0].values.shape[1] // 2])
        done += size
    n_full = int(counts.sum())
    report = StatReport("cluster-uniformity", seed, {"reps": reps, "grid": grid})
    if n_full < 50 * len(configs):
        raise RuntimeError("full-cluster event too rare")
    stat, p, df = chi_square(counts, np.ones(len(configs)))
    report.add("parity uniform", stat, p, n_full, df=df, counts=counts.tolist(),
               configs=[parity_bitstring(c) for c in configs])
    for c, k in zip(configs, counts):
        se = math.sqrt(n_full / len(configs) * (1 - 1 / len(configs)))
        z = (k - n_full / len(configs)) / se
        report.add(f"freq {parity_bitstring(c)}", k / n_full, None, n_full, passed=abs(z) <= 3, z=z, explicit=True)
    r, z = correlation_z(np.concatenate(parity_bits), np.concatenate(midpoints))
    report.add(f"corr(parity edge {e0}, midpoint field)", r, None, n_full, passed=abs(z) <= 3, z=z, explicit=True)
    return report.finalize()
