"""Potential theory of the walk killed at the sink: rates, hitting
probabilities, Green function and excursion masses.

The embedded walk at v takes a directed edge e rooted at v with probability
(1/rho(e)) / a_v, where a_v sums 1/rho over all directed edges at v
(edges to the sink included, a self-loop counted twice).
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .graph_core import MetricGraph


def vertex_rates(g: MetricGraph) -> np.ndarray:
    rates = np.zeros(g.n_vertices)
    inv = 1.0 / g.lengths
    np.add.at(rates, g.edge_a, inv)
    np.add.at(rates, g.edge_b, inv)
    return rates


def conductance_matrix(g: MetricGraph) -> np.ndarray:
    """C[u, w] = sum of 1/rho over directed edges u -> w (self-loops give 2/rho)."""
    c = np.zeros((g.n_vertices, g.n_vertices))
    inv = 1.0 / g.lengths
    np.add.at(c, (g.edge_a, g.edge_b), inv)
    np.add.at(c, (g.edge_b, g.edge_a), inv)
    return c


def transition_matrix(g: MetricGraph) -> np.ndarray:
    return conductance_matrix(g) / vertex_rates(g)[:, None]


def hitting_probability(g: MetricGraph, target: int, killed: Iterable[int],
                        forbidden_edges: Iterable[int] = ()) -> np.ndarray:
    """h(x) = P_x(walk reaches `target` before `killed`), h(target) = 1.

    Taking a forbidden edge kills the walk. Vertices that cannot reach the
    target get 0.
    """
    killed = set(int(k) for k in killed) - {int(target)}
    c = _allowed_conductance(g, forbidden_edges)
    rates = vertex_rates(g)
    h = np.zeros(g.n_vertices)
    h[target] = 1.0
    free = [x for x in range(g.n_vertices) if x != target and x not in killed]
    if free:
        p = c / rates[:, None]
        a = np.eye(len(free)) - p[np.ix_(free, free)]
        h[free] = np.linalg.solve(a, p[free, target])
    return np.clip(h, 0.0, 1.0)


def _allowed_conductance(g: MetricGraph, forbidden_edges: Iterable[int]) -> np.ndarray:
    forbidden = set(int(e) for e in forbidden_edges)
    if not forbidden:
        return conductance_matrix(g)
    c = np.zeros((g.n_vertices, g.n_vertices))
    for e in range(g.n_edges):
        if e in forbidden:
            continue
        a, b = g.edge_a[e], g.edge_b[e]
        c[a, b] += 1.0 / g.lengths[e]
        c[b, a] += 1.0 / g.lengths[e]
    return c


def return_probability(g: MetricGraph, v: int, killed_at: Iterable[int] | None = None) -> float:
    """Probability that the walk from v comes back to v before `killed_at`
    (default: the sink alone)."""
    killed = {g.sink} if killed_at is None else set(int(k) for k in killed_at) | {g.sink}
    if v in killed:
        return 0.0
    h = hitting_probability(g, v, killed)
    p = transition_matrix(g)
    return float(p[v] @ h)


def excursion_kernel(g: MetricGraph, source: int, targets: Iterable[int],
                     killed: Iterable[int] = (), forbidden_edges: Iterable[int] = ()) -> dict[int, float]:
    """Excursion-measure mass at `source` of excursions first absorbed at w.

    The walk is absorbed on targets, on the source itself, on the sink and
    on `killed`.
    Mass through a first edge e is 1/(2 rho(e)). Returns {w: H(source, w)}
    for each target; `source` may itself be a target (returning excursions).
    """
    targets = [int(t) for t in targets]
    absorbing = set(targets) | {int(source), g.sink} | set(int(k) for k in killed)
    forbidden = set(int(e) for e in forbidden_edges)
    out = {}
    for w in targets:
        others = absorbing - {w}
        h = hitting_probability(g, w, others, forbidden)
        total = 0.0
        for e, root, tip in g.directed_edges():
            if root != source or e in forbidden:
                continue
            if tip == w:
                total += 0.5 / g.lengths[e]
            elif tip not in absorbing:
                total += 0.5 / g.lengths[e] * h[tip]
        out[w] = total
    return out


def laplacian(g: MetricGraph) -> np.ndarray:
    """Dirichlet Laplacian on the interior vertices (self-loops cancel)."""
    c = conductance_matrix(g)
    np.fill_diagonal(c, 0.0)
    lap = np.diag(c.sum(axis=1)) - c
    idx = g.interior
    return lap[np.ix_(idx, idx)]


def green_function(g: MetricGraph) -> np.ndarray:
    """G over all vertices, zero on the sink row and column, equal to twice
    the inverse Dirichlet Laplacian with conductances 1/rho."""
    idx = g.interior
    green = np.zeros((g.n_vertices, g.n_vertices))
    inv = np.linalg.inv(laplacian(g))
    green[np.ix_(idx, idx)] = 2.0 * (inv + inv.T) / 2.0
    return green


def dump_matrix_csv(matrix: np.ndarray, labels, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + [str(l) for l in labels])
        for lab, row in zip(labels, matrix):
            writer.writerow([str(lab)] + [repr(float(x)) for x in row])
