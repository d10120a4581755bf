import numpy as np
import pytest

from loopsoup.stats import (StatReport, chi_square, chi_square_two_sample, ks_two_sample, poisson_dispersion,
                            tv_distance, weighted_pmf)
from loopsoup.streams import chunk_sizes, map_chunks, stream


def test_ks_identical_samples():
    x = np.arange(100.0)
    assert ks_two_sample(x, x)[0] == 0.0


def test_chi_square_exact_match():
    stat, p, df = chi_square([10, 20, 30], [1, 2, 3])
    assert stat == 0.0 and p == 1.0 and df == 2


def test_small_samples_rejected():
    with pytest.raises(ValueError):
        ks_two_sample(np.ones(10), np.ones(10))


def test_poisson_dispersion_sanity(rng):
    d = poisson_dispersion(rng.poisson(1.0, 20000), 1.0)
    assert abs(d["z_mean"]) < 4 and abs(d["z_ratio"]) < 4


def test_two_sample_chi_square_identical():
    stat, p, _ = chi_square_two_sample([50, 30, 20], [50, 30, 20])
    assert stat == pytest.approx(0.0) and p == pytest.approx(1.0)


def test_tv():
    p = weighted_pmf(["a", "a", "b"])
    q = weighted_pmf(["a", "b"], [1, 3])
    assert tv_distance(p, q) == pytest.approx(2 / 3 - 1 / 4)


def test_bonferroni():
    r = StatReport("x", 0)
    r.add("a", 1.0, 0.004)
    r.add("b", 1.0, 0.5)
    r.finalize()
    assert not r.rows[0].passed and r.rows[1].passed and not r.passed


def _draw(size, rng):
    return rng.random(size)


def test_streams_are_addressable():
    assert stream(3, "tag", 2).random() == stream(3, "tag", 2).random()
    assert stream(3, "tag", 2).random() != stream(3, "tag", 1).random()
    assert chunk_sizes(25, 10) == [10, 10, 5]


def test_parallel_matches_serial(monkeypatch):
    monkeypatch.setenv("LOOPSOUP_THREADS", "1")
    serial = np.concatenate(map_chunks(_draw, 5, "t", 25, chunk=10))
    monkeypatch.setenv("LOOPSOUP_THREADS", "3")
    parallel = np.concatenate(map_chunks(_draw, 5, "t", 25, chunk=10))
    assert np.array_equal(serial, parallel)
