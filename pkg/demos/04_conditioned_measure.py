"""The soup conditioned on vanishing local time at a vertex, through the
star graph: rejection at shrinking caps against the direct sampler."""

import numpy as np

from loopsoup import graph_core as gc
from loopsoup.conditioning import (ConditionWindow, DirectSampler, boundary_kernel, crossed_twice_fraction,
                                   sample_n_rejection)

rng = np.random.default_rng(4)
g = gc.triangle_graph()
star = gc.star_extend(g, [g.index("v2")], stub_length=2.0)
print("replicas:", [star.graph.labels[r] for r in star.replicas])
print("boundary kernel between replicas:\n", np.round(boundary_kernel(star), 4))

frac = crossed_twice_fraction(star, [0.4, 0.2, 0.1], 100_000, rng)
for row in frac.rows[:3]:
    print(f"{row.name}: {row.statistic:.4f}")

sample = sample_n_rejection(star, ConditionWindow({1: 0.2}), 2000, rng)
print(f"\nrejection acceptance rate at cap 0.2: {sample.extra['acceptance_rate']:.4f}")

times = {r: 1.0 for r in star.replicas}
direct = DirectSampler(star).sample(times, 20_000, rng)
print("mean excursion count between the two replicas at unit times:",
      round(float(direct.pairs[:, 0, 1].mean()), 4), "expected", round(2 * boundary_kernel(star)[0, 1], 4))
