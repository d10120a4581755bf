import json

import numpy as np
import pytest

from loopsoup import graph_core as gc
from loopsoup.harmonic import vertex_rates


def test_single_edge_shape():
    g = gc.single_edge()
    assert list(g.interior) == [0]
    assert len(g.sink_adjacent) == 1 and len(g.inner_edges) == 0


def test_triangle_counts():
    g = gc.triangle_graph()
    assert g.n_vertices == 4 and g.n_edges == 4
    assert sorted(g.inner_edges.tolist()) == [0, 1, 2]


def test_path_rates():
    assert vertex_rates(gc.path_graph())[:2].tolist() == [1.0, 2.0]


def test_star_extend_empty_is_identity():
    g = gc.triangle_graph()
    s = gc.star_extend(g, [])
    assert s.graph.labels == g.labels and s.replicas == ()
    assert np.array_equal(s.graph.edge_a, g.edge_a)


def test_figure_replica_counts():
    g = gc.figure_graph()
    s = gc.star_extend(g, [g.index(1), g.index(2), g.index(3)])
    counts = [len(s.replicas_of(g.index(v))) for v in (1, 2, 3)]
    assert counts == [4, 3, 5]


def test_star_vertex_of_degree_d():
    g = gc.theta_graph()
    s = gc.star_extend(g, [0])
    assert len(s.replicas) == 4 and len(s.star_edges) == 4
    # the star vertex keeps only its stubs
    assert sorted(s.graph.edges_at(0)) == sorted(s.star_edges)


def test_star_extend_rejects_sink():
    g = gc.single_edge()
    with pytest.raises(gc.GraphError):
        gc.star_extend(g, [g.sink])


def test_detach_counts_and_inverse():
    g = gc.triangle_graph()
    d = gc.detach_vertex(g, 1, 0)
    assert d.graph.n_vertices == g.n_vertices + 2
    assert d.graph.n_edges == g.n_edges + 2
    back = gc.contract_edges(d.graph, d.star_edges)
    assert gc.canonical_edge_multiset(back) == gc.canonical_edge_multiset(g)


def test_detach_self_loop_moves_both_ends():
    g = gc.figure_graph()
    loop = next(e for e in range(g.n_edges) if g.is_self_loop(e))
    v = int(g.edge_a[loop])
    d = gc.detach_vertex(g, v, loop)
    assert d.graph.edge_a[loop] == d.duplicate == d.graph.edge_b[loop]


def test_subgraph_boundary_path():
    g = gc.path_graph()
    sub = gc.subgraph_boundary(g, [0, 1], [0])
    assert sub.boundary == (1,)


def test_subgraph_boundary_own_edges():
    g = gc.triangle_graph()
    sub = gc.subgraph_boundary(g, [1], [])
    assert sub.boundary == (1,)


def test_graph_json_roundtrip(tmp_path):
    g = gc.figure_graph()
    path = tmp_path / "g.json"
    path.write_text(json.dumps(g.to_spec()))
    h = gc.load_graph(path)
    assert gc.canonical_edge_multiset(h) == gc.canonical_edge_multiset(g)


def test_invalid_graph_rejected():
    with pytest.raises(gc.GraphError):
        gc.build_graph([("v", "w", -1.0), ("w", "sink", 1.0)], "sink")
