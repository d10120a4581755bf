"""Loop soups on metric graphs: discrete loops, edge occupation fields,
conditioned measures, parity currents, loop reconstruction and the
isomorphism with the free field."""

from .graph_core import MetricGraph, build_graph, load_graph, star_extend
from .harmonic import excursion_kernel, green_function
from .loop_soup import sample_crossing_counts, sample_discrete_soup, sample_vertex_local_times
from .occupation import extract_clusters, sample_occupation

__all__ = [
    "MetricGraph", "build_graph", "load_graph", "star_extend",
    "excursion_kernel", "green_function",
    "sample_crossing_counts", "sample_discrete_soup", "sample_vertex_local_times",
    "extract_clusters", "sample_occupation",
]
__version__ = "0.1.0"
