import math

import numpy as np
import pytest
from scipy.linalg import expm

from loopsoup.one_dim import (KingmanTable, crossing_pmf, death_rates, kingman_killed, kingman_pmf,
                              kingman_pmf_chain, mu_process_trace, sample_B, sample_C)
from loopsoup.occupation import besq_bridge
from loopsoup.stats import chi_square_two_sample, ks_two_sample


def test_crossing_pmf_parity():
    vals, probs = crossing_pmf(1.3, odd=False)
    assert np.all(vals % 2 == 0) and probs.sum() == pytest.approx(1.0)
    assert probs[0] == pytest.approx(1 / math.cosh(1.3))
    vals, probs = crossing_pmf(1.3, odd=True)
    assert np.all(vals % 2 == 1) and probs[0] == pytest.approx(1.3 / math.sinh(1.3))


def test_zero_budgets(rng):
    b = sample_B(1.0, 0.0, 0.0, rng=rng, size=20)
    assert np.all(b.crossings == 0)
    c = sample_C(1.0, 0.0, 0.0, rng=rng, size=20)
    assert np.all(c.crossings == 1)


def test_endpoint_values(rng):
    b = sample_B(1.0, 0.7, 1.2, rng=rng, size=10)
    assert np.allclose(b.field[:, 0], 0.7) and np.allclose(b.field[:, -1], 1.2)


def test_B_total_field_is_besq1(rng):
    n = 4000
    b = sample_B(1.0, 0.8, 0.5, grid=3, rng=rng, size=n)
    direct = besq_bridge(1, 0.8, 0.5, 1.0, 3, rng, size=n)
    assert ks_two_sample(b.field[:, 1], direct[:, 1])[1] > 1e-3


def test_C_midpoint_is_besq3(rng):
    n = 4000
    c = sample_C(1.0, 0.8, 0.5, grid=3, rng=rng, size=n)
    direct = besq_bridge(3, 0.8, 0.5, 1.0, 3, rng, size=n)
    assert ks_two_sample(c.field[:, 1], direct[:, 1])[1] > 1e-3


def test_two_blocks_survive():
    # from two blocks the exit rate is 4 (merge) + 2 (deaths at rate 1)
    p = kingman_pmf_chain(0.1, 1.0, 2)
    assert p[2] == pytest.approx(math.exp(-0.6))
    assert death_rates(2, 1.0) == pytest.approx(6.0)


def test_chain_matches_generator():
    p = kingman_pmf_chain(0.3, 3.0, 3)
    q = np.zeros((4, 4))
    for m in range(1, 4):
        q[m, m - 1] = 2 * m * (m - 1) + 3.0 * m
        q[m, m] = -q[m, m - 1]
    start = np.zeros(4)
    start[3] = 1
    assert np.allclose(p[:4], start @ expm(0.3 * q))


def test_series_from_infinity_matches_large_chain():
    p_series = kingman_pmf(0.5, 1.0, jmax=10)
    p_chain = kingman_pmf_chain(0.5, 1.0, 400)[:10]
    assert np.allclose(p_series[:10], p_chain, atol=2e-3)


def test_table_interpolates():
    table = KingmanTable(1.0, t_min=0.5, t_max=2.0, points=20, jmax=10)
    assert np.allclose(table.pmf(1.0)[0, :10], kingman_pmf(1.0, 1.0, jmax=10)[:10], atol=1e-3)


def test_absorbed_at_large_time(rng):
    assert np.all(kingman_killed(np.full(100, 50.0), 1.0, n0=64, rng=rng) == 0)


def test_larger_kill_rate_lowers_blocks():
    p1 = kingman_pmf_chain(0.2, 1.0, 200)
    p3 = kingman_pmf_chain(0.2, 3.0, 200)
    k = np.arange(len(p1))
    assert (k * p3).sum() < (k * p1).sum()


def test_mu_process_trace(rng):
    t = mu_process_trace(1.0, 0.3, rng, dt=(1 / 64) ** 2, grid=17)
    assert t.crossings % 2 == 0
    assert t.local_time_zero == pytest.approx(0.3, rel=0.05)


@pytest.mark.parametrize("T", [0.05, 0.2])
def test_coalescent_start_size_beyond_horizon(T, rng):
    a = kingman_killed(np.full(20_000, T), 1.0, n0=2048, rng=rng)
    b = kingman_killed(np.full(20_000, T), 1.0, n0=4096, rng=rng)
    width = int(max(a.max(), b.max())) + 1
    _, p, _ = chi_square_two_sample(np.bincount(a, minlength=width), np.bincount(b, minlength=width))
    assert p > 0.01
