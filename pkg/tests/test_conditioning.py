import math

import numpy as np
import pytest

from loopsoup import graph_core as gc
from loopsoup.conditioning import (ConditionWindow, DirectSampler, boundary_kernel, check_outside_gamma, crossed_twice_fraction,
                                   sample_n_rejection, star_acceptance, verify_domain_markov,
                                   verify_star_correspondence)


def loop_star(rho_out):
    """Star vertex s carrying a self-loop of length rho_out: its two replicas
    are joined outside the star by that single edge."""
    g = gc.build_graph([("s", "s", rho_out), ("s", "sink", 1.0)], "sink")
    return gc.star_extend(g, [g.index("s")])


@pytest.mark.parametrize("rho_out", [0.5, 2.0])
def test_single_link_pair_mean(rho_out, rng):
    star = loop_star(rho_out)
    r1, r2, r3 = star.replicas
    assert boundary_kernel(star)[0, 1] == pytest.approx(1 / (2 * rho_out))
    n = 20000
    s = DirectSampler(star).sample({r1: 1.0, r2: 1.0, r3: 0.5}, n, rng)
    counts = s.pairs[:, 0, 1]
    assert abs(counts.mean() - 1 / rho_out) <= 3.5 * math.sqrt(1 / rho_out / n)


def test_zero_boundary_time_gives_no_pairs(rng):
    star = loop_star(1.0)
    r1, r2, r3 = star.replicas
    s = DirectSampler(star).sample({r1: 0.0, r2: 1.0, r3: 1.0}, 500, rng)
    assert np.all(s.pairs[:, 0, :] == 0) and np.all(s.pairs[:, :, 0] == 0)


def test_pair_counts_uncorrelated(rng):
    # one star vertex: parity holds automatically, no rejection couples pairs
    g = gc.triangle_graph()
    star = gc.star_extend(g, [1], 2.0)
    times = {r: 1.0 for r in star.replicas}
    s = DirectSampler(star).sample(times, 20000, rng)
    x, y = s.pairs[:, 0, 1], s.pairs[:, 0, 0]
    assert x.any() and y.any()
    r = np.corrcoef(x, y)[0, 1]
    assert abs(r) * math.sqrt(len(x)) < 3.5


def test_rejection_sample_respects_window(rng):
    g = gc.triangle_graph()
    star = gc.star_extend(g, [1], 2.0)
    window = ConditionWindow({1: 0.4})
    s = sample_n_rejection(star, window, 300, rng, fields=True, grid=9)
    assert len(s) == 300
    assert np.all(s.times[:, 1] <= 0.4)
    for e, values in s.star_fields.items():
        assert np.all(values[:, 1:-1] > 0)


def test_acceptance_is_a_probability(rng):
    g = gc.triangle_graph()
    star = gc.star_extend(g, [1], 1.0)
    crossings = np.zeros((4, star.graph.n_edges), int)
    visits = np.zeros((4, star.graph.n_vertices), int)
    times = np.ones((4, star.graph.n_vertices))
    p = star_acceptance(star, {1: 0.3}, crossings, visits, times)
    assert np.all((0 <= p) & (p <= 1))


def test_gamma_report_shape(rng):
    g = gc.triangle_graph()
    star = gc.star_extend(g, [1], 2.0)
    s = sample_n_rejection(star, ConditionWindow({1: 0.4}), 2000, rng)
    rep = check_outside_gamma(s, star, min_stratum=100)
    assert rep.rows and all(r.name.count("k=") == 1 for r in rep.rows)


def test_window_reject_bad_caps():
    with pytest.raises(ValueError):
        ConditionWindow({0: 0.0})


def test_star_correspondence_empty_set(rng):
    g = gc.triangle_graph()
    rep = verify_star_correspondence(g, [], {}, 0.05, 2000, rng)
    assert rep.passed and rep.rows[0].statistic == pytest.approx(0.0, abs=0.05)


def test_domain_markov_plug():
    # H = 1/2 and unit boundary times: mean 2 H sqrt(x x') = 1
    assert 2 * 0.5 * math.sqrt(1.0 * 1.0) == 1.0


def test_domain_markov_small(rng):
    g = gc.two_boundary_graph()
    sub = gc.subgraph_boundary(g, [0, 1], [0])
    rep = verify_domain_markov(g, sub, 100000, rng, [(1.0, 1.0)], eps=0.25, grid=9)
    assert rep.passed


def test_rescaled_acceptance_settles(rng):
    star = gc.star_extend(gc.triangle_graph(), [1], 4.0)
    rep = crossed_twice_fraction(star, [0.4, 0.2, 0.1, 0.05], 100_000, rng)
    rows = [r for r in rep.rows if "rescaled" in r.name]
    assert rows[0].detail["power"] == 1.5
    values = [r.statistic for r in rows[:4]]
    assert max(values) / min(values) < 1.15
    assert rows[-1].passed
