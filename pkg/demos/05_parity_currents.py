"""Crossing parities on a full cluster are uniform over the even subgraphs,
whatever the field looks like."""

import numpy as np

from loopsoup import graph_core as gc
from loopsoup.currents import count_admissible, current_parity_weights, enumerate_admissible, verify_cluster_uniformity

g = gc.theta_graph()
configs = enumerate_admissible(g, [0, 1, 2])
print("admissible parity patterns on the three parallel edges:", [c[:3] for c in configs])

weights = current_parity_weights(g, {0: 0.8, 1: 0.8, 2: 0.8})
print("random-current parity law at beta = 0.8:", {k[:3]: round(v, 4) for k, v in weights.items()})

report = verify_cluster_uniformity(g, 40_000, np.random.default_rng(5), grid=17)
print(report.summary())
