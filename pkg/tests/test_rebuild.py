import math

import numpy as np
import pytest

from loopsoup import graph_core as gc
from loopsoup.rebuild import ParityError, glue, poisson_dirichlet_half


def test_pd_masses_sum(rng):
    m = poisson_dirichlet_half(0.4, rng)
    assert m.sum() == pytest.approx(0.4) and np.all(m > 0)


def test_no_crossings_gives_point_loops_only(rng):
    g = gc.triangle_graph()
    r = glue(g, np.zeros(g.n_edges, int), rng)
    assert r.loops == []
    assert np.all(r.plan.beta_share[:3] == 1.0)
    for v in range(3):
        assert r.point_loops[v][-1][1] == pytest.approx(1.0)


def test_two_parallel_crossings_make_one_loop(rng):
    g = gc.theta_graph()
    r = glue(g, np.array([1, 1, 0, 0, 0]), rng)
    assert len(r.loops) == 1 and r.loops[0].length == 2


def test_parity_violation(rng):
    g = gc.triangle_graph()
    with pytest.raises(ParityError):
        glue(g, np.array([1, 0, 0, 0]), rng)


def test_sink_edge_crossings_rejected(rng):
    g = gc.path_graph()
    with pytest.raises(ValueError):
        glue(g, np.array([2, 2]), rng)


def test_matching_uniform_at_two_visits(rng):
    # crossings of edges 0 and 1 of the theta graph: four ends at v, k = 2
    g = gc.theta_graph()
    n = 30000
    counts = np.zeros(3)
    for _ in range(n):
        r = glue(g, np.array([2, 2, 0, 0, 0]), rng)
        pairs = r.plan.pairing[0]
        same = [a[0] == b[0] for a, b in pairs]
        if all(same):
            counts[0] += 1
        else:
            # both mixed pairs match equal crossing indices, or both differ
            a, b = next(p for p in pairs if p[0][0] != p[1][0])
            end0 = a if a[0] == 0 else b
            end1 = b if a[0] == 0 else a
            counts[1 + int(end0[1] == end1[1])] += 1
    # three perfect matchings of four ends, each 1/3
    se = math.sqrt(2 / 9 / n)
    assert np.all(np.abs(counts / n - 1 / 3) <= 3 * se)


def test_conservation_and_even_usage(rng):
    g = gc.figure_graph()
    from loopsoup.loop_soup import sample_discrete_soup

    for _ in range(50):
        c = sample_discrete_soup(g, rng)
        r = glue(g, c.crossings, rng)
        total = np.zeros(g.n_vertices, int)
        for loop in r.loops:
            total += (g.incidence() @ loop.crossings(g.n_edges)) // 2
        assert np.array_equal(total, c.visits)
        for v in range(g.n_vertices):
            assert r.visits_at(v) == c.visits[v]
