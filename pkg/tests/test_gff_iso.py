import math

import numpy as np
import pytest

from loopsoup import graph_core as gc
from loopsoup.gff_iso import (explore_cluster, lejan_check, lupu_signs, sample_gff, sample_replays,
                              sde_drift_check, signed_field_check)
from loopsoup.harmonic import green_function
from loopsoup.occupation import ClusterSet
from loopsoup.stats import ks_one_sample
from scipy import stats as sps


def test_single_edge_gff(rng):
    phi = sample_gff(gc.single_edge(), rng, 20000)
    assert np.all(phi[:, 1] == 0)
    assert ks_one_sample(phi[:, 0], sps.norm(0, math.sqrt(2)).cdf)[1] > 1e-3


def test_gff_covariance(rng):
    g = gc.triangle_graph()
    n = 100000
    phi = sample_gff(g, rng, n)
    green = green_function(g)
    for u in range(3):
        for w in range(3):
            prod = phi[:, u] * phi[:, w]
            assert abs(prod.mean() - green[u, w]) <= 3.5 * prod.std() / math.sqrt(n)


def test_lejan_single_edge(rng):
    assert lejan_check(gc.single_edge(), 20000, rng).passed


def test_signs(rng):
    g = gc.theta_graph()
    cs = ClusterSet([{"edges": [0], "vertices": [0, 1]}])
    s = np.array([lupu_signs(g, cs, rng) for _ in range(4000)])
    assert np.all(s[:, 0] == s[:, 1]) and np.all(s[:, 2] == 0)
    assert abs(np.mean(s[:, 0] == 1) - 0.5) < 3 * math.sqrt(0.25 / 4000)


def test_signed_field(rng):
    assert signed_field_check(gc.path_graph(), 20000, rng, grid=9).passed


def test_exploration_starts_at_root_and_ends(rng):
    g = gc.single_edge()
    for replay in sample_replays(g, 20, rng):
        state = explore_cluster(g, 0, replay)
        assert state.x[0] == pytest.approx(math.sqrt(replay.times[0]))
        assert math.isfinite(state.zeta)


def test_exploration_single_edge_is_bessel(rng):
    g = gc.single_edge()
    trajs = [explore_cluster(g, 0, r) for r in sample_replays(g, 3000, rng)]
    # empty explored set: no pull toward explored values, unit variance rate
    assert sde_drift_check(trajs).passed


def test_exploration_continuity(rng):
    g = gc.path_graph()
    for replay in sample_replays(g, 10, rng):
        s = explore_cluster(g, 0, replay)
        same = s.edge[1:] == s.edge[:-1]
        jumps = np.abs(s.x[1:] - (s.x[:-1] + s.dx[:-1]))[same]
        assert np.all(jumps < 1e-9)
