"""The twelve acceptance criteria at their stated sizes and tolerances.

Each test records one pass/fail line, printed in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from conftest import record
from loopsoup import graph_core as gc
from loopsoup.cli import main
from loopsoup.conditioning import (ConditionWindow, check_outside_gamma, crossed_twice_fraction, sample_n_rejection,
                                   verify_domain_markov, verify_markovn_poisson, verify_star_correspondence)
from loopsoup.currents import verify_cluster_uniformity
from loopsoup.gff_iso import explore_cluster, lejan_check, sample_replays, sde_drift_check
from loopsoup.loop_soup import (oracle_crossing_pmf, sample_crossing_counts, sample_soup_oracle, truncated_mass,
                                visits_pmf)
from loopsoup.occupation import edge_field_batch
from loopsoup.one_dim import crossing_law_check
from loopsoup.rebuild import roundtrip_check
from loopsoup.stats import chi_square, chi_square_two_sample, tv_distance, weighted_pmf
from loopsoup.streams import stream

pytestmark = pytest.mark.slow


def rng_for(number: int) -> np.random.Generator:
    return stream(2024, f"acceptance-{number}")


def failed_rows(report) -> str:
    bad = [r.name for r in report.rows if not r.passed]
    return "" if not bad else " failing: " + "; ".join(bad[:4])


@pytest.fixture(scope="module")
def star_v2():
    # the replica laws hold in the small-cap limit; a long stub shrinks the
    # finite-cap bias at cap 0.1 below what 10^4 samples resolve
    return gc.star_extend(gc.triangle_graph(), [1], 4.0)


@pytest.fixture(scope="module")
def windowed_sample(star_v2):
    """10^4 accepted samples of the windowed law at cap 0.1 on the triangle
    with W = {v2}; shared by criteria 6 and 7."""
    return sample_n_rejection(star_v2, ConditionWindow({1: 0.1}), 10_000, rng_for(7))


def test_criterion_01_visit_law():
    t0 = time.time()
    g = gc.path_graph()
    k = sample_crossing_counts(g, 100_000, rng_for(1))["k"][:, 0]
    pmf = visits_pmf(0.5)
    observed = np.bincount(k, minlength=len(pmf))[: len(pmf)]
    observed[-1] += int(np.sum(k >= len(pmf)))
    stat, p, df = chi_square(observed, pmf)
    elapsed = time.time() - t0
    ok = p > 0.01 and elapsed < 60
    record(1, ok, f"chi-square p={p:.3g} (df={df}), {elapsed:.1f}s")
    assert ok


def test_criterion_02_sampler_vs_oracle():
    t0 = time.time()
    g = gc.triangle_graph()
    # any cap with truncated mass below 1e-3 qualifies; the exact pmf is cheap
    # enough for a far longer cap, which keeps the chi-square blind to truncation
    cap = next(c for c in range(2, 200) if truncated_mass(g, c) < 1e-3)
    long_cap = next(c for c in range(cap, 400) if truncated_mass(g, c) < 1e-6)
    reps = 100_000
    direct = sample_crossing_counts(g, reps, rng_for(2))["n"]
    oracle_draws = sample_soup_oracle(g, cap, reps, rng_for(2), by_crossings=True)
    exact = oracle_crossing_pmf(g, long_cap, size=128)
    p_direct = weighted_pmf([tuple(r) for r in direct])
    tv_exact = tv_distance(p_direct, exact)
    tv_samples = tv_distance(p_direct, weighted_pmf([tuple(r) for r in oracle_draws]))
    keys = sorted(exact, key=lambda k: -exact[k])
    index = {k: i for i, k in enumerate(keys)}
    counts = np.zeros(len(keys) + 1)
    for row in direct:
        counts[index.get(tuple(row), len(keys))] += 1
    expected = np.append([exact[k] for k in keys], max(1e-12, 1 - sum(exact.values())))
    _, p, _ = chi_square(counts, expected)
    elapsed = time.time() - t0
    ok = tv_exact < 0.02 and p > 0.01 and elapsed < 300
    record(2, ok, f"TV to exact oracle pmf (cap {long_cap}) {tv_exact:.4f}, "
                  f"to oracle draws (cap {cap}) {tv_samples:.4f}, "
                  f"chi-square p={p:.3g}, {elapsed:.1f}s")
    assert ok


def test_criterion_03_lejan():
    t0 = time.time()
    graphs = {"single-edge": gc.single_edge(), "path": gc.path_graph(), "triangle": gc.triangle_graph()}
    reports = {name: lejan_check(g, 100_000, rng_for(3)) for name, g in graphs.items()}
    elapsed = time.time() - t0
    ok = all(r.passed for r in reports.values()) and elapsed < 300
    min_p = min(row.p_value for r in reports.values() for row in r.rows if row.p_value is not None)
    record(3, ok, f"3 graphs, min KS p={min_p:.3g}, {elapsed:.1f}s"
                  + "".join(failed_rows(r) for r in reports.values()))
    assert ok


def test_criterion_04_cluster_parity():
    t0 = time.time()
    report = verify_cluster_uniformity(gc.theta_graph(), 100_000, rng_for(4), grid=33)
    elapsed = time.time() - t0
    chi = report.rows[0]
    corr = report.rows[-1]
    ok = chi.p_value > 0.01 and corr.passed and elapsed < 300
    record(4, ok, f"{chi.n} full-cluster events, chi-square p={chi.p_value:.3g}, "
                  f"corr z={corr.detail['z']:.2f}, {elapsed:.1f}s")
    assert ok


@pytest.mark.parametrize("a,b,rho", [(1.0, 1.0, 1.0), (0.5, 2.0, 1.0), (1.0, 1.0, 2.0)])
def test_criterion_05_zero_hit(a, b, rho):
    n = 100_000
    batch = edge_field_batch(np.full(n, a), np.full(n, b), rho, np.zeros(n, int), 33, rng_for(5))
    freq = 1 - batch.zero_hit.mean()
    q = 1 - math.exp(-math.sqrt(a * b) / rho)
    se = math.sqrt(q * (1 - q) / n)
    ok = abs(freq - q) <= 3 * se
    prev = test_criterion_05_zero_hit.__dict__.setdefault("rows", [])
    prev.append((ok, f"({a},{b},{rho}): {freq:.4f} vs {q:.4f}"))
    record(5, all(o for o, _ in prev), "; ".join(d for _, d in prev))
    assert ok


def test_criterion_06_poisson_counts(windowed_sample, star_v2):
    g = gc.two_boundary_graph()
    sub = gc.subgraph_boundary(g, [0, 1], [0])
    centers = [(0.5, 0.5), (1.0, 1.0), (0.5, 1.5)]
    domain = verify_domain_markov(g, sub, 1_000_000, rng_for(6), centers, eps=0.05, grid=17)
    thin = [r for r in domain.rows if r.detail.get("skipped")]
    # the limit measure: too few windowed samples per 2-d bin at this size, so
    # only the unbinned conditional-Poisson identities are checked
    limit = verify_markovn_poisson(star_v2, windowed_sample, [], eps=0.05)
    ok = domain.passed and not thin and limit.passed
    sizes = sorted({r.n for r in domain.rows})
    record(6, ok, f"domain Markov bins n={sizes}; limit measure residual z={limit.rows[0].statistic:.2f}, "
                  f"dispersion z={limit.rows[1].statistic:.2f}"
                  + failed_rows(domain) + failed_rows(limit) + (" thin bins" if thin else ""))
    assert ok


def test_criterion_07_cap_schedule(windowed_sample, star_v2):
    frac = crossed_twice_fraction(star_v2, [0.4, 0.2, 0.1], 400_000, rng_for(7))
    f = [r.statistic for r in frac.rows[:3]]
    ratios = [f[1] / f[0], f[2] / f[1]]
    monotone = f[0] > f[1] > f[2]
    in_band = all(0.3 <= r <= 0.7 for r in ratios)
    gamma = check_outside_gamma(windowed_sample, star_v2)
    settle = [r for r in frac.rows if "rescaled" in r.name]
    ok = monotone and in_band and gamma.passed
    record(7, ok, f"fractions {f[0]:.4f} > {f[1]:.4f} > {f[2]:.4f}, ratios {ratios[0]:.3f}, {ratios[1]:.3f} "
                  f"(band [0.3, 0.7]); gamma KS {len(gamma.rows)} strata "
                  f"{'pass' if gamma.passed else 'fail'}; rescaled acceptance "
                  + ", ".join(f"{r.statistic:.4g}" for r in settle[:-1])
                  + f" ({'settles' if settle[-1].passed else 'drifts'})" + failed_rows(gamma))
    assert ok


def test_criterion_08_star_correspondence():
    t0 = time.time()
    g = gc.triangle_graph()
    one = verify_star_correspondence(g, [1], {1: 1.0}, 0.05, 500_000, rng_for(8), stub_length=2.0)
    two = verify_star_correspondence(g, [1, 2], {1: 1.0, 2: 0.8}, 0.05, 2_000_000, rng_for(8), stub_length=2.0)
    elapsed = time.time() - t0
    tv = [one.rows[0].statistic, two.rows[0].statistic]
    ess = [min(r.rows[0].detail["ess_plain"], r.rows[0].detail["ess_star"]) for r in (one, two)]
    ok = max(tv) < 0.05 and min(ess) >= 1e5 and elapsed < 1200
    record(8, ok, f"TV |W|=1: {tv[0]:.4f}, |W|=2: {tv[1]:.4f}; effective samples "
                  f"{ess[0]:.0f}, {ess[1]:.0f}; {elapsed:.1f}s")
    assert ok


def test_criterion_09_killed_kingman():
    report = crossing_law_check(1.0, 1.0, 1.0, 60_000, rng_for(9))
    chi = [r for r in report.rows if r.p_value is not None]
    record(9, report.passed, f"{len(chi)} per-bin chi-square rows, min p={min(r.p_value for r in chi):.3g}"
                             + failed_rows(report))
    assert report.passed


def test_criterion_10_exploration_sde():
    parts = []
    for name, g, start in (("path", gc.path_graph(), 0), ("parallel pair", gc.parallel_pair_graph(), 0)):
        replays = sample_replays(g, 10_000, rng_for(10))
        report = sde_drift_check([explore_cluster(g, start, r) for r in replays])
        slope, qv = report.rows[0], report.rows[1]
        parts.append((report.passed, f"{name}: slope {slope.statistic:.4f}, QV rate {qv.statistic:.4f}"))
    ok = all(p for p, _ in parts)
    record(10, ok, "; ".join(d for _, d in parts))
    assert ok


def test_criterion_11_roundtrip():
    report = roundtrip_check(gc.triangle_graph(), 40_000, rng_for(11))
    law = {r.name: r for r in report.rows}
    tri = law["triangle loop mean (rebuilt)"]
    record(11, report.passed, f"loop count p={law['loop count law'].p_value:.3g}, "
                              f"length p={law['loop length histogram'].p_value:.3g}, "
                              f"triangle mean {tri.statistic:.4f} vs {tri.detail['expected']:.4f}"
                              + failed_rows(report))
    assert report.passed


SMALL_RUNS = {
    "lejan": ["--reps", "20000"],
    "cluster-uniformity": ["--reps", "20000", "--grid", "9"],
    "markov": ["--reps", "50000", "--grid", "9", "--eps", "0.25"],
    "star": ["--reps", "20000"],
    "n-measure": ["--reps", "20000", "--accepted", "2000", "--caps", "0.4,0.2"],
    "kingman": ["--reps", "2000"],
    "roundtrip": ["--reps", "2000"],
    "sde": ["--reps", "300"],
}


def test_criterion_12_determinism(tmp_path):
    same = []
    for name, extra in SMALL_RUNS.items():
        bodies = []
        for run in range(2):
            out = tmp_path / f"{name}-{run}"
            main(["verify", name, "--seed", "5", "--out", str(out)] + extra)
            bodies.append((out / "report.json").read_text())
        a, b = (json.loads(x)["body"] for x in bodies)
        same.append((name, a == b))
    ok = all(s for _, s in same)
    record(12, ok, f"{sum(s for _, s in same)}/{len(same)} verify subcommands reproduce their report body"
                   + "".join(f" [{n} differs]" for n, s in same if not s))
    assert ok
