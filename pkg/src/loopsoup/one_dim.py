"""One-dimensional conditioned soups B(rho, l1, l2) and C(rho, l1, l2), the
killed coalescent that governs their crossing numbers, and the mu-process
construction used as an independent cross-check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .occupation import DEFAULT_GRID, edge_field_batch, make_grid
from .stats import StatReport, chi_square

SMALL_FIELD = 1e-12


# ---------------------------------------------------------------- crossing laws


def crossing_pmf(beta: float, odd: bool, tail: float = 1e-16) -> tuple[np.ndarray, np.ndarray]:
    """Crossing numbers with weights beta^c / c! over even c (divided by
    cosh beta) or odd c (divided by sinh beta). Returns (values, probs)."""
    parity = 1 if odd else 0
    if beta == 0.0:
        return np.array([parity]), np.array([1.0])
    values, logs = [], []
    c = parity
    while True:
        values.append(c)
        logs.append(c * math.log(beta) - gammaln(c + 1))
        if c > beta and logs[-1] - max(logs) < math.log(tail):
            break
        c += 2
    w = np.exp(np.array(logs) - max(logs))
    return np.array(values), w / w.sum()


def sample_crossings(beta, odd: bool, rng: np.random.Generator) -> np.ndarray:
    beta = np.atleast_1d(np.asarray(beta, float))
    out = np.empty(beta.shape, dtype=np.int64)
    for b in np.unique(beta):
        sel = beta == b
        vals, probs = crossing_pmf(float(b), odd)
        out[sel] = rng.choice(vals, size=int(sel.sum()), p=probs)
    return out


# ---------------------------------------------------------------- traces


@dataclass
class OneDimTrace:
    crossings: np.ndarray
    budgets: tuple
    grid: np.ndarray
    field: np.ndarray
    zero_hit: np.ndarray
    time_change: np.ndarray


def time_change(field: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Trapezoid value of the integral of ds / field; inf where the field
    touches (numerically) zero."""
    field = np.atleast_2d(field)
    out = np.full(field.shape[0], np.inf)
    ok = np.all(field > SMALL_FIELD, axis=1)
    if ok.any():
        out[ok] = np.trapezoid(1.0 / field[ok], grid, axis=1)
    return out


def _sample_soup(rho, l1, l2, grid, rng, size, odd):
    times = make_grid(rho, grid)
    beta = math.sqrt(l1 * l2) / rho
    crossings = sample_crossings(np.full(size, beta), odd, rng)
    batch = edge_field_batch(np.full(size, float(l1)), np.full(size, float(l2)), rho, crossings, times, rng)
    t = time_change(batch.values, times)
    t[batch.zero_hit] = np.inf
    return OneDimTrace(crossings, (l1, l2), times, batch.values, batch.zero_hit, t)


def sample_B(rho: float, l1: float, l2: float, grid=DEFAULT_GRID, rng=None, size: int = 1) -> OneDimTrace:
    """Soup on [0, rho] with local times l1, l2 at the ends; even crossings."""
    return _sample_soup(rho, l1, l2, grid, rng, size, odd=False)


def sample_C(rho: float, l1: float, l2: float, grid=DEFAULT_GRID, rng=None, size: int = 1) -> OneDimTrace:
    """Same with one extra crossing: odd crossing numbers, BESQ^3 field."""
    return _sample_soup(rho, l1, l2, grid, rng, size, odd=True)


# ---------------------------------------------------------------- coalescent


def death_rates(m, kill_rate: float):
    """Total jump rate with m blocks: pairs merge at rate 4, blocks die at
    kill_rate. Either event lowers the count by one."""
    m = np.asarray(m, float)
    return 2.0 * m * (m - 1.0) + kill_rate * m


def kingman_killed(T, kill_rate: float, n0: int = 2048, rng: np.random.Generator | None = None,
                   size: int | None = None, chunk: int = 2000) -> np.ndarray:
    """Block counts at time(s) T of the chain started from n0 blocks."""
    T = np.atleast_1d(np.asarray(T, float))
    if np.any(T <= 0):
        raise ValueError("T must be positive")
    if size is not None:
        T = np.broadcast_to(T, (size,))
    rates = death_rates(np.arange(n0, 0, -1), kill_rate)
    out = np.empty(len(T), dtype=np.int64)
    for start in range(0, len(T), chunk):
        t = T[start : start + chunk]
        holding = rng.standard_exponential((len(t), n0)) / rates
        events = np.cumsum(holding, axis=1) <= t[:, None]
        out[start : start + chunk] = n0 - events.sum(axis=1)
    return out


def kingman_pmf_chain(T: float, kill_rate: float, n0: int) -> np.ndarray:
    """Exact law of the block count at T from n0 blocks (matrix exponential)."""
    q = np.zeros((n0 + 1, n0 + 1))
    for m in range(1, n0 + 1):
        r = death_rates(m, kill_rate)
        q[m, m] = -r
        q[m, m - 1] = r
    row = expm(q * T)[n0]
    return row


def kingman_pmf(T: float, kill_rate: float, jmax: int | None = None, digits: int = 40) -> np.ndarray:
    """Block-count law at T for the chain entering from infinity.

    Time-scaled to pairwise rate 1, the killing rate per block becomes
    theta/2 with theta = kill_rate/2, and the classical lines-of-descent
    series applies. Double precision is used when the alternating terms
    stay small; otherwise the sum is done in multiprecision.
    """
    if kill_rate <= 0:
        raise ValueError("kill_rate must be positive")
    theta = kill_rate / 2.0
    t = 4.0 * T
    kmax = 2
    while -kmax * (kmax - 1 + theta) * t / 2 + kmax * math.log(4.0) > -digits * math.log(10) + 12:
        kmax += 1
    if jmax is None:
        jmax = kmax
    fast = _series_float(t, theta, jmax, kmax)
    if fast is not None:
        return fast
    return _series_mp(t, theta, jmax, kmax, digits)


def _log_terms(t, theta, jmax, kmax):
    j = np.arange(0, jmax + 1)[:, None].astype(float)
    k = np.arange(1, kmax + 1)[None, :].astype(float)
    valid = k >= np.maximum(j, 1)
    with np.errstate(invalid="ignore"):
        log_mag = (-k * (k - 1 + theta) * t / 2 + np.log(2 * k - 1 + theta)
                   + gammaln(j + theta + k - 1) - gammaln(j + theta)
                   - gammaln(j + 1) - gammaln(np.where(valid, k - j, 1) + 1))
    sign = np.where(((k - j) % 2) == 0, 1.0, -1.0)
    return np.where(valid, log_mag, -np.inf), sign


def _series_float(t, theta, jmax, kmax):
    log_mag, sign = _log_terms(t, theta, jmax, kmax)
    if np.max(log_mag) > math.log(1e6):
        return None
    terms = sign * np.exp(log_mag)
    probs = terms.sum(axis=1)
    probs[0] = 1.0 + probs[0]  # the j = 0 row carries the opposite sign
    return np.clip(probs, 0.0, 1.0)


def _series_mp(t, theta, jmax, kmax, digits):
    with mpmath.workdps(digits):
        th = mpmath.mpf(theta)
        tt = mpmath.mpf(t)

        def rho_k(k):
            return mpmath.exp(-k * (k - 1 + th) * tt / 2)

        probs = []
        total0 = mpmath.mpf(0)
        for k in range(1, kmax + 1):
            total0 += rho_k(k) * (-1) ** (k - 1) * (2 * k - 1 + th) * mpmath.rf(th, k - 1) / mpmath.factorial(k)
        probs.append(1 - total0)
        for j in range(1, jmax + 1):
            s = mpmath.mpf(0)
            for k in range(j, kmax + 1):
                s += (rho_k(k) * (-1) ** (k - j) * (2 * k - 1 + th) * mpmath.rf(j + th, k - 1)
                      / (mpmath.factorial(j) * mpmath.factorial(k - j)))
            probs.append(s)
    return np.clip(np.array([float(p) for p in probs]), 0.0, 1.0)


class KingmanTable:
    """Cached block-count laws on a fine log grid of times, linearly
    interpolated in between."""

    def __init__(self, kill_rate: float, t_min: float = 1e-2, t_max: float = 50.0, points: int = 400, jmax: int = 40):
        self.kill_rate = kill_rate
        self.times = np.geomspace(t_min, t_max, points)
        self.table = np.array([_pad(kingman_pmf(t, kill_rate, jmax), jmax + 1) for t in self.times])
        self.t_min, self.t_max = t_min, t_max

    def pmf(self, T) -> np.ndarray:
        T = np.atleast_1d(np.asarray(T, float))
        if np.any(T < self.t_min):
            raise ValueError("time below the tabulated range")
        x = np.log(np.clip(T, self.t_min, self.t_max))
        xs = np.log(self.times)
        i = np.clip(np.searchsorted(xs, x) - 1, 0, len(xs) - 2)
        w = ((x - xs[i]) / (xs[i + 1] - xs[i]))[:, None]
        return (1 - w) * self.table[i] + w * self.table[i + 1]


def _pad(p, n):
    out = np.zeros(n)
    out[: min(n, len(p))] = p[:n]
    out[-1] += max(0.0, 1.0 - out.sum())
    return out


def crossing_law_check(rho: float, l1: float, l2: float, reps: int, rng: np.random.Generator,
                       grid=257, n_bins: int = 6, seed: int = 0) -> StatReport:
    """Within bins of T, compare half the crossings of positive B traces with
    the coalescent killed at rate 1, and (crossings - 1)/2 for C with rate 3."""
    if l1 * l2 <= 0:
        raise ValueError("both budgets must be positive")
    report = StatReport("kingman", seed, {"rho": rho, "l1": l1, "l2": l2, "reps": reps, "grid": grid})
    for label, odd, kill in (("even", False, 1.0), ("odd", True, 3.0)):
        trace = _sample_soup(rho, l1, l2, grid, rng, reps, odd)
        keep = np.isfinite(trace.time_change)
        if keep.sum() < 200:
            raise RuntimeError("too few positive traces")
        t = trace.time_change[keep]
        blocks = (trace.crossings[keep] - (1 if odd else 0)) // 2
        table = KingmanTable(kill, t_min=min(1e-2, t.min() * 0.99), t_max=max(50.0, t.max() * 1.01))
        expected_all = table.pmf(t)
        edges = np.quantile(t, np.linspace(0, 1, n_bins + 1))
        which = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, n_bins - 1)
        for b in range(n_bins):
            sel = which == b
            if sel.sum() < 200:
                continue
            width = expected_all.shape[1]
            observed = np.bincount(np.minimum(blocks[sel], width - 1), minlength=width)
            expected = expected_all[sel].sum(axis=0)
            stat, p, df = chi_square(observed, expected)
            report.add(f"{label} T-bin {b} [{edges[b]:.3g},{edges[b + 1]:.3g}]", stat, p, int(sel.sum()), df=df)
            zero_obs = observed[0] / sel.sum()
            zero_exp = expected[0] / sel.sum()
            se = math.sqrt(max(zero_exp * (1 - zero_exp), 1e-12) / sel.sum())
            report.add(f"{label} T-bin {b} P(no block)", zero_obs, None, int(sel.sum()),
                       passed=abs(zero_obs - zero_exp) <= 3 * se + 1e-12, expected=zero_exp, se=se, explicit=True)
    return report.finalize()


# ---------------------------------------------------------------- mu-process


@dataclass
class MuTrace:
    crossings: int
    local_time_zero: float
    local_time_far: float
    occupation: np.ndarray
    grid: np.ndarray


def mu_process_trace(rho: float, l1: float, rng: np.random.Generator, dt: float | None = None,
                     grid: int = 65, max_steps: int = 50_000_000) -> MuTrace:
    """Euler path of X = W + min(0, running min of W) on t >= 0 (the process
    |B| - 2 x local time of B at 0), run until its local time at 0 reaches l1.

    Local times are occupation densities on a histogram of [0, rho] with
    `grid` points. Crossings count passages between 0 and rho.
    """
    if dt is None:
        dt = (rho / 256.0) ** 2
    edges = np.linspace(0.0, rho, grid)
    width = edges[1] - edges[0]
    occupation = np.zeros(grid)
    w = 0.0
    running_min = 0.0
    x = 0.0
    lt0 = 0.0
    side = 0  # last boundary touched: 0 or rho
    crossings = 0
    block = 100_000
    steps = 0
    sd = math.sqrt(dt)
    while lt0 < l1 and steps < max_steps:
        inc = rng.standard_normal(block) * sd
        path_w = w + np.cumsum(inc)
        mins = np.minimum(running_min, np.minimum.accumulate(path_w))
        xs = path_w + np.minimum(0.0, mins)
        # local time at 0: occupation density over a half-cell around 0
        near0 = np.abs(xs) < width / 2
        lt_path = lt0 + np.cumsum(near0) * dt / width
        stop = np.searchsorted(lt_path, l1)
        if stop < block:
            xs = xs[: stop + 1]
            path_w = path_w[: stop + 1]
            mins = mins[: stop + 1]
            lt_path = lt_path[: stop + 1]
        inside = (xs >= -width / 2) & (xs <= rho + width / 2)
        idx = np.clip(np.rint(xs[inside] / width).astype(int), 0, grid - 1)
        occupation += np.bincount(idx, minlength=grid) * dt / width
        for val in xs[(xs <= 0) | (xs >= rho)]:
            s = 0 if val <= 0 else 1
            if s != side:
                crossings += 1
                side = s
        w, running_min, x, lt0 = path_w[-1], mins[-1], xs[-1], lt_path[-1]
        steps += len(xs)
    # the edge cells are half-width
    occupation[0] *= 2.0
    occupation[-1] *= 2.0
    return MuTrace(crossings, lt0, occupation[-1], occupation, edges)
