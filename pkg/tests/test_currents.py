import math

import numpy as np
import pytest

from loopsoup import graph_core as gc
from loopsoup.currents import (admissible_uniform, count_admissible, current_parity_weights, cycle_basis,
                               enumerate_admissible, is_admissible, parity_of_config)
from loopsoup.loop_soup import DiscreteLoopConfig, canonical_loop, sample_discrete_soup
from loopsoup.occupation import ClusterSet


def grid_graph(n=3):
    verts = [(i, j) for i in range(n) for j in range(n)]
    edges = [((i, j), (i + 1, j), 1.0) for i in range(n - 1) for j in range(n)]
    edges += [((i, j), (i, j + 1), 1.0) for i in range(n) for j in range(n - 1)]
    edges += [((0, 0), "sink", 1.0)]
    return gc.build_graph(edges, "sink", verts + ["sink"])


def cluster_of(g, edges):
    verts = sorted({int(g.edge_a[e]) for e in edges} | {int(g.edge_b[e]) for e in edges})
    return ClusterSet([{"edges": sorted(edges), "vertices": verts}])


def test_counts():
    tri = gc.triangle_graph()
    assert count_admissible(tri, cluster_of(tri, [0, 1, 2])) == 2
    theta = gc.theta_graph()
    assert count_admissible(theta, cluster_of(theta, [0, 1, 2])) == 4
    grid = grid_graph()
    inner = [int(e) for e in grid.inner_edges]
    assert count_admissible(grid, cluster_of(grid, inner)) == 2 ** (12 - 9 + 1)


def test_theta_configs():
    g = gc.theta_graph()
    configs = enumerate_admissible(g, [0, 1, 2])
    on = sorted(tuple(e for e in range(3) if c[e]) for c in configs)
    assert on == [(), (0, 1), (0, 2), (1, 2)]


def test_tree_cluster_is_zero(rng):
    g = gc.path_graph()
    assert admissible_uniform(g, cluster_of(g, [0]), rng).tolist() == [0, 0]


def test_uniform_frequencies(rng):
    g = gc.theta_graph()
    cs = cluster_of(g, [0, 1, 2])
    n = 40000
    seen = {}
    for _ in range(n):
        a = admissible_uniform(g, cs, rng)
        assert is_admissible(g, a)
        seen[tuple(a)] = seen.get(tuple(a), 0) + 1
    assert len(seen) == 4
    se = math.sqrt(n * 0.25 * 0.75)
    assert all(abs(k - n / 4) <= 3.5 * se for k in seen.values())


def test_basis_is_deterministic():
    g = gc.theta_graph()
    assert cycle_basis(g, [2, 0, 1]).tree == [0]


def test_parity_of_configs(rng):
    g = gc.triangle_graph()
    empty = DiscreteLoopConfig([], g.n_edges, g.n_vertices, g.incidence())
    assert parity_of_config(empty).tolist() == [0, 0, 0, 0]
    tri = DiscreteLoopConfig([canonical_loop([(0, 0), (1, 0), (2, 0)])], g.n_edges, g.n_vertices, g.incidence())
    assert parity_of_config(tri).tolist() == [1, 1, 1, 0]
    f = gc.figure_graph()
    for _ in range(30):
        assert is_admissible(f, parity_of_config(sample_discrete_soup(f, rng)))


def test_current_weights():
    g = gc.triangle_graph()
    w = current_parity_weights(g, {0: 0.0, 1: 0.0, 2: 0.0})
    assert w[(0, 0, 0, 0)] == pytest.approx(1.0)
    w = current_parity_weights(g, {0: 0.7, 1: 0.7, 2: 0.7})
    assert w[(1, 1, 1, 0)] / w[(0, 0, 0, 0)] == pytest.approx(math.tanh(0.7) ** 3)
    w = current_parity_weights(g, {0: 30.0, 1: 30.0, 2: 30.0})
    assert w[(1, 1, 1, 0)] == pytest.approx(0.5)
