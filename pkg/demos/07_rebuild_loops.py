"""Loops rebuilt from crossing counts alone, by uniform pairing of crossing
ends at each vertex, compared with loops sampled directly."""

import numpy as np

from loopsoup import graph_core as gc
from loopsoup.loop_soup import sample_discrete_soup
from loopsoup.rebuild import glue, roundtrip_check

rng = np.random.default_rng(7)
g = gc.figure_graph()
config = sample_discrete_soup(g, rng)
while not config.loops:
    config = sample_discrete_soup(g, rng)
print("sampled loops:\n" + config.dump(g))
rebuilt = glue(g, config.crossings, rng)
print("rebuilt from the crossing counts:", len(rebuilt.loops), "loops of lengths",
      [l.length for l in rebuilt.loops])
print(roundtrip_check(gc.triangle_graph(), 20_000, rng).summary())
