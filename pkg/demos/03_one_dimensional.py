"""One-dimensional soups on a segment and the killed coalescent that counts
their crossings at the time given by the integral of 1 / field."""

import numpy as np

from loopsoup.one_dim import kingman_pmf, kingman_pmf_chain, sample_B, sample_C

rng = np.random.default_rng(3)
b = sample_B(1.0, 1.0, 1.0, grid=129, rng=rng, size=5000)
c = sample_C(1.0, 1.0, 1.0, grid=129, rng=rng, size=5000)
print("even soup crossings:", np.bincount(b.crossings)[:7].tolist())
print("odd soup crossings: ", np.bincount(c.crossings)[:7].tolist())

positive = np.isfinite(b.time_change)
print(f"\nfraction of even traces that stay positive: {positive.mean():.3f}")
T = np.median(b.time_change[positive])
print(f"median time change T = {T:.3f}")
print("block-count law at T from infinity, kill rate 1:", np.round(kingman_pmf(T, 1.0, jmax=5)[:5], 4).tolist())
print("same from 2048 blocks by the matrix exponential:  ",
      np.round(kingman_pmf_chain(T, 1.0, 2048)[:5], 4).tolist())
