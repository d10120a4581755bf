"""Edge occupation fields: squared Bessel bridges glued to the vertex local
times, the closed-form zero law, and clusters of the positive field."""

import math

import numpy as np

from loopsoup import graph_core as gc
from loopsoup.loop_soup import sample_crossing_counts, sample_vertex_local_times
from loopsoup.occupation import edge_field_batch, extract_clusters, sample_occupation_batch

rng = np.random.default_rng(2)

print("probability that an uncrossed edge trace avoids zero:")
for a, b, rho in [(1, 1, 1), (0.5, 2, 1), (1, 1, 2)]:
    n = 40_000
    batch = edge_field_batch(np.full(n, a), np.full(n, b), rho, np.zeros(n, int), 33, rng)
    print(f"  a={a} b={b} rho={rho}: simulated {1 - batch.zero_hit.mean():.4f}, "
          f"closed form {1 - math.exp(-math.sqrt(a * b) / rho):.4f}")

g = gc.theta_graph()
res = sample_crossing_counts(g, 2000, rng)
times = sample_vertex_local_times(res["k"], g, rng)
fields = sample_occupation_batch(g, res["n"], times, rng, 17)
sizes = []
for i in range(2000):
    zero = np.array([fields[e].zero_hit[i] for e in range(g.n_edges)])
    sizes.append(sum(len(c["edges"]) for c in extract_clusters(g, zero, times[i]).clusters))
print("\nedges covered by clusters on the theta graph (0..3):", np.bincount(sizes, minlength=4).tolist())
