"""Metric graphs with a distinguished sink, and the surgeries used on them.

Vertices and edges are stored by integer index in input order. Labels are
kept only for I/O and display.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class MetricGraph:
    labels: tuple
    sink: int
    edge_a: np.ndarray
    edge_b: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        for arr in (self.edge_a, self.edge_b, self.lengths):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self.lengths)

    @property
    def interior(self) -> np.ndarray:
        """Indices of all vertices other than the sink, in id order."""
        return np.array([v for v in range(self.n_vertices) if v != self.sink], dtype=int)

    @property
    def sink_adjacent(self) -> np.ndarray:
        return (self.edge_a == self.sink) | (self.edge_b == self.sink)

    @property
    def inner_edges(self) -> np.ndarray:
        """The edge set E: edges not touching the sink."""
        return np.flatnonzero(~self.sink_adjacent)

    def index(self, label: Hashable) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise GraphError(f"unknown vertex {label!r}") from None

    def other_end(self, edge: int, v: int) -> int:
        a, b = int(self.edge_a[edge]), int(self.edge_b[edge])
        return b if a == v else a

    def is_self_loop(self, edge: int) -> bool:
        return self.edge_a[edge] == self.edge_b[edge]

    def directed_edges(self) -> list[tuple[int, int, int]]:
        """All directed edges as (edge id, root, tip); a self-loop appears twice."""
        out = []
        for e in range(self.n_edges):
            a, b = int(self.edge_a[e]), int(self.edge_b[e])
            out.append((e, a, b))
            out.append((e, b, a))
        return out

    def edges_at(self, v: int) -> list[int]:
        """Edge ids incident to v, one entry per edge end (self-loops twice)."""
        ends = []
        for e in range(self.n_edges):
            if self.edge_a[e] == v:
                ends.append(e)
            if self.edge_b[e] == v:
                ends.append(e)
        return ends

    def degree_excluding_sink(self, v: int) -> int:
        """d_v: directed edges rooted at v, not counting edges to the sink."""
        return sum(1 for e in self.edges_at(v) if not self.sink_adjacent[e])

    def incidence(self) -> np.ndarray:
        """Vertex-by-edge matrix counting edge ends (2 for a self-loop)."""
        m = np.zeros((self.n_vertices, self.n_edges), dtype=np.int64)
        np.add.at(m, (self.edge_a, np.arange(self.n_edges)), 1)
        np.add.at(m, (self.edge_b, np.arange(self.n_edges)), 1)
        return m

    def to_spec(self) -> dict:
        return {
            "vertices": list(self.labels),
            "sink": self.labels[self.sink],
            "edges": [
                {"a": self.labels[a], "b": self.labels[b], "len": float(l)}
                for a, b, l in zip(self.edge_a, self.edge_b, self.lengths)
            ],
        }


def build_graph(edges: Sequence[tuple], sink: Hashable, vertices: Iterable | None = None) -> MetricGraph:
    """Validate and build a graph from (a, b, length) triples.

    Vertex order follows `vertices` when given, otherwise first appearance in
    the edge list. Raises GraphError on bad input.
    """
    if not edges:
        raise GraphError("edge list is empty")
    labels: list = list(vertices) if vertices is not None else []
    if len(set(labels)) != len(labels):
        raise GraphError("duplicate vertex labels")
    seen = set(labels)
    for a, b, _ in edges:
        for x in (a, b):
            if x not in seen:
                if vertices is not None:
                    raise GraphError(f"edge endpoint {x!r} not among vertices")
                seen.add(x)
                labels.append(x)
    if sink not in seen:
        raise GraphError(f"sink {sink!r} is not a vertex")
    pos = {lab: i for i, lab in enumerate(labels)}
    ea = np.array([pos[a] for a, _, _ in edges], dtype=int)
    eb = np.array([pos[b] for _, b, _ in edges], dtype=int)
    ln = np.array([float(l) for _, _, l in edges])
    if not np.all(np.isfinite(ln)) or np.any(ln <= 0):
        raise GraphError("edge lengths must be positive and finite")
    g = MetricGraph(tuple(labels), pos[sink], ea, eb, ln)
    if len(components(g.n_vertices, ea, eb)) != 1:
        raise GraphError("graph is not connected")
    return g


def components(n: int, ea: Sequence[int], eb: Sequence[int]) -> list[list[int]]:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(ea, eb):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return list(groups.values())


def load_graph(path: str | Path) -> MetricGraph:
    spec = json.loads(Path(path).read_text())
    return graph_from_spec(spec)


def graph_from_spec(spec: dict) -> MetricGraph:
    """Edges are {"a", "b", "len"} objects or [a, b, len] triples."""
    try:
        edges = [(e["a"], e["b"], e["len"]) if isinstance(e, dict) else tuple(e) for e in spec["edges"]]
        if any(len(e) != 3 for e in edges):
            raise GraphError("each edge needs two endpoints and a length")
        return build_graph(edges, spec["sink"], spec.get("vertices"))
    except KeyError as exc:
        raise GraphError(f"graph spec missing field {exc}") from None
    except TypeError as exc:
        raise GraphError(f"malformed graph spec: {exc}") from None


# ---------------------------------------------------------------- surgeries


@dataclass(frozen=True)
class StarGraph:
    base: MetricGraph
    graph: MetricGraph
    star_vertices: tuple[int, ...]
    replicas: tuple[int, ...]
    replica_owner: dict
    star_edges: tuple[int, ...]
    old_edge_map: dict = field(default_factory=dict)  # new edge id -> base edge id

    def replicas_of(self, v: int) -> list[int]:
        return [r for r in self.replicas if self.replica_owner[r] == v]

    def star_edge_of(self, replica: int) -> int:
        for e in self.star_edges:
            if replica in (self.graph.edge_a[e], self.graph.edge_b[e]):
                return e
        raise GraphError("not a replica")


def star_extend(g: MetricGraph, star: Iterable[int], stub_length: float = 1.0) -> StarGraph:
    """Give each edge end at a star vertex its own replica joined by a stub.

    Vertex ids of the base graph are preserved; replicas are appended in
    (star vertex, edge id, end) order. Old edges keep their ids and lengths,
    star edges are appended after them.
    """
    star = sorted(set(int(v) for v in star))
    if g.sink in star:
        raise GraphError("the sink cannot be a star vertex")
    if stub_length <= 0:
        raise GraphError("stub length must be positive")
    labels = list(g.labels)
    ea, eb = g.edge_a.copy(), g.edge_b.copy()
    replicas, owner = [], {}
    new_a, new_b, new_len, star_edges = [], [], [], []
    for v in star:
        count = 0
        for e in range(g.n_edges):
            for side, ends in (("a", ea), ("b", eb)):
                base_end = g.edge_a[e] if side == "a" else g.edge_b[e]
                if base_end != v:
                    continue
                r = len(labels)
                labels.append(f"{g.labels[v]}~{count}")
                count += 1
                ends[e] = r
                replicas.append(r)
                owner[r] = v
                star_edges.append(g.n_edges + len(new_a))
                new_a.append(v)
                new_b.append(r)
                new_len.append(stub_length)
    graph = MetricGraph(
        tuple(labels),
        g.sink,
        np.concatenate([ea, np.array(new_a, dtype=int)]),
        np.concatenate([eb, np.array(new_b, dtype=int)]),
        np.concatenate([g.lengths, np.array(new_len, dtype=float)]),
    )
    return StarGraph(g, graph, tuple(star), tuple(replicas), owner, tuple(star_edges),
                     {e: e for e in range(g.n_edges)})


@dataclass(frozen=True)
class Detached:
    graph: MetricGraph
    star_vertex: int
    duplicate: int
    star_edges: tuple[int, int]


def detach_vertex(g: MetricGraph, v0: int, e0: int, stub_length: float = 1.0) -> Detached:
    """Detach edge e0 at v0 onto a fresh copy of v0, and join both copies to a
    new star vertex. For a self-loop both of its ends move to the copy.

    Adds two vertices and two edges; e0 keeps its id.
    """
    a, b = int(g.edge_a[e0]), int(g.edge_b[e0])
    if v0 not in (a, b):
        raise GraphError("edge is not adjacent to the vertex")
    if v0 == g.sink:
        raise GraphError("cannot detach at the sink")
    labels = list(g.labels)
    dup = len(labels)
    labels.append(f"{g.labels[v0]}~bar")
    star = len(labels)
    labels.append(f"{g.labels[v0]}*")
    ea, eb = g.edge_a.copy(), g.edge_b.copy()
    if a == v0:
        ea[e0] = dup
    if b == v0:
        eb[e0] = dup
    ea = np.concatenate([ea, [star, star]])
    eb = np.concatenate([eb, [v0, dup]])
    ln = np.concatenate([g.lengths, [stub_length, stub_length]])
    graph = MetricGraph(tuple(labels), g.sink, ea.astype(int), eb.astype(int), ln)
    return Detached(graph, star, dup, (g.n_edges, g.n_edges + 1))


def contract_edges(g: MetricGraph, edges: Iterable[int]) -> MetricGraph:
    """Collapse the given edges to points. Each merged class keeps the label
    of its lowest-index vertex; the sink class stays the sink."""
    drop = set(int(e) for e in edges)
    parent = list(range(g.n_vertices))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for e in drop:
        ra, rb = find(int(g.edge_a[e])), find(int(g.edge_b[e]))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = sorted({find(v) for v in range(g.n_vertices)})
    new_id = {r: i for i, r in enumerate(roots)}
    keep = [e for e in range(g.n_edges) if e not in drop]
    return MetricGraph(
        tuple(g.labels[r] for r in roots),
        new_id[find(g.sink)],
        np.array([new_id[find(int(g.edge_a[e]))] for e in keep], dtype=int),
        np.array([new_id[find(int(g.edge_b[e]))] for e in keep], dtype=int),
        g.lengths[keep].copy(),
    )


def canonical_edge_multiset(g: MetricGraph) -> list:
    """Label-level edge multiset; equal for graphs identical up to edge order."""
    out = []
    for a, b, l in zip(g.edge_a, g.edge_b, g.lengths):
        pair = sorted([str(g.labels[a]), str(g.labels[b])])
        out.append((pair[0], pair[1], round(float(l), 12)))
    return sorted(out) + [("sink", str(g.labels[g.sink]), 0.0)]


@dataclass(frozen=True)
class Subgraph:
    parent: MetricGraph
    vertices: tuple[int, ...]
    edges: tuple[int, ...]
    boundary: tuple[int, ...]


def subgraph_boundary(g: MetricGraph, vertex_subset: Iterable[int], edge_subset: Iterable[int]) -> Subgraph:
    verts = sorted(set(int(v) for v in vertex_subset))
    eds = sorted(set(int(e) for e in edge_subset))
    vs = set(verts)
    for e in eds:
        if g.edge_a[e] not in vs or g.edge_b[e] not in vs:
            raise GraphError(f"edge {e} has an endpoint outside the vertex subset")
    es = set(eds)
    boundary = [v for v in verts if any(e not in es for e in g.edges_at(v))]
    return Subgraph(g, tuple(verts), tuple(eds), tuple(boundary))


# ------------------------------------------------------------ test graphs


def single_edge(length: float = 1.0) -> MetricGraph:
    return build_graph([("v", "sink", length)], "sink")


def path_graph(lengths=(1.0, 1.0)) -> MetricGraph:
    """v - w - sink."""
    return build_graph([("v", "w", lengths[0]), ("w", "sink", lengths[1])], "sink")


def triangle_graph(sink_at=("v1",), sink_length: float = 1.0) -> MetricGraph:
    """Unit triangle v1 v2 v3 with sink edges at the listed vertices."""
    edges = [("v1", "v2", 1.0), ("v2", "v3", 1.0), ("v3", "v1", 1.0)]
    edges += [(v, "sink", sink_length) for v in sink_at]
    return build_graph(edges, "sink", ["v1", "v2", "v3", "sink"])


def theta_graph(n_parallel: int = 3, sink_length: float = 1.0) -> MetricGraph:
    """Two vertices joined by parallel unit edges, each with a sink edge."""
    edges = [("v", "w", 1.0)] * n_parallel
    edges += [("v", "sink", sink_length), ("w", "sink", sink_length)]
    return build_graph(edges, "sink", ["v", "w", "sink"])


def figure_graph() -> MetricGraph:
    """Five vertices with a double edge, a self-loop and one sink edge; used to
    exercise star extension (replica counts 4, 3, 5 at vertices 1, 2, 3)."""
    edges = [
        (1, 2, 1.0), (1, 2, 1.0), (1, 4, 1.0), (1, 5, 1.0), (2, 3, 1.0),
        (4, 3, 1.0), (4, 5, 1.0), (5, 3, 1.0), (3, 3, 1.0), (5, "sink", 1.0),
    ]
    return build_graph(edges, "sink", [1, 2, 3, 4, 5, "sink"])


def two_boundary_graph(outside_length: float = 1.0) -> MetricGraph:
    """Inside edge v - w, outside path v - m - w, sink edge at m.

    With the subgraph ({v, w}, {v - w}) both v and w are boundary vertices,
    and the outside boundary kernel between them is 1/6 at unit lengths.
    """
    edges = [("v", "w", 1.0), ("v", "m", outside_length), ("m", "w", outside_length), ("m", "sink", 1.0)]
    return build_graph(edges, "sink", ["v", "w", "m", "sink"])


def parallel_pair_graph(length: float = 1.0) -> MetricGraph:
    """v and w joined by two parallel edges, with a sink edge at w."""
    edges = [("v", "w", length), ("v", "w", length), ("w", "sink", length)]
    return build_graph(edges, "sink", ["v", "w", "sink"])
