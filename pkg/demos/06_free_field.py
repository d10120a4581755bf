"""Vertex local times against half the squared free field, cluster signs,
and the exploration process that grows a cluster from one vertex."""

import numpy as np

from loopsoup import graph_core as gc
from loopsoup.gff_iso import explore_cluster, lejan_check, sample_replays, sde_drift_check, signed_field_check
from loopsoup.harmonic import green_function

rng = np.random.default_rng(6)
g = gc.triangle_graph()
print("Green function on the triangle:\n", np.round(green_function(g)[:3, :3], 4))
print(lejan_check(g, 50_000, rng).summary())
print(signed_field_check(gc.path_graph(), 20_000, rng, grid=9).summary())

pair = gc.parallel_pair_graph()
replays = sample_replays(pair, 2000, rng)
trajectories = [explore_cluster(pair, 0, r) for r in replays]
print(f"\nexploration length, mean over runs: {np.mean([t.zeta for t in trajectories]):.3f}")
print(sde_drift_check(trajectories).summary())
