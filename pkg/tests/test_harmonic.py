import numpy as np
import pytest

from loopsoup import graph_core as gc
from loopsoup.harmonic import excursion_kernel, green_function, return_probability, vertex_rates


def test_triangle_rates():
    assert vertex_rates(gc.triangle_graph())[:3].tolist() == [3.0, 2.0, 2.0]


def test_return_probabilities():
    assert return_probability(gc.single_edge(), 0) == 0.0
    assert return_probability(gc.path_graph(), 0) == pytest.approx(0.5)
    g = gc.path_graph()
    assert return_probability(g, 0, killed_at=[1]) == 0.0


def test_return_probability_matches_linear_solve():
    # triangle, sink at v1: from v1 reach v2 w.p. 3/5, from v3 w.p. 4/5
    g = gc.triangle_graph()
    assert return_probability(g, 1) == pytest.approx(0.5 * (3 / 5) + 0.5 * (4 / 5))


@pytest.mark.parametrize("rho", [0.5, 1.0, 3.0])
def test_single_edge_kernel(rho):
    g = gc.single_edge(rho)
    assert excursion_kernel(g, 0, [g.sink])[g.sink] == pytest.approx(1 / (2 * rho))


def test_single_outside_link():
    g = gc.build_graph([("u", "w", 2.0), ("u", "sink", 1.0), ("w", "sink", 1.0)], "sink")
    assert excursion_kernel(g, 0, [1])[1] == pytest.approx(0.25)


def test_kernel_with_no_exit_is_zero():
    g = gc.path_graph()
    h = excursion_kernel(g, 0, [1], forbidden_edges=[0])
    assert h[1] == 0.0


def test_two_boundary_kernel_is_one_sixth():
    g = gc.two_boundary_graph()
    assert excursion_kernel(g, 0, [0, 1], forbidden_edges=[0])[1] == pytest.approx(1 / 6)


def test_green_values():
    assert green_function(gc.single_edge(1.5))[0, 0] == pytest.approx(3.0)
    g = gc.path_graph()
    green = green_function(g)
    assert green[0, 0] == pytest.approx(4.0)
    assert np.all(green[g.sink] == 0) and np.all(green[:, g.sink] == 0)
