"""Occupation fields on edges: squared Bessel bridges, edge traces given the
number of crossings, zero detection and clusters.

The field on an edge of length rho with endpoint values (a, b) and c
crossings is built as

    |W|^2 + Z_a + Z_b

with W a (1 + 2c)-dimensional Brownian bridge from 0 to 0 on [0, rho]
(the loops inside the edge plus the crossings), and Z_a a BESQ^4 bridge from
a to 0 run on [0, tau_a] and zero afterwards (the excursions from the left
end that do not reach the right one). P(tau_a <= t) = exp(-a/2t + a/2rho).
Z_b is the mirror image from the right end. When c = 0 the field can only
vanish where the one-dimensional W does, inside [tau_a, rho - tau_b]; zero
crossings of W between grid points are resolved exactly with the Brownian
bridge crossing probability exp(-2 x y / dt).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import ive

DEFAULT_GRID = 33


def no_zero_probability(x):
    """q(x) = 1 - exp(-x)."""
    return -np.expm1(-np.asarray(x, float))


def make_grid(rho: float, grid=DEFAULT_GRID) -> np.ndarray:
    if np.ndim(grid) == 0:
        return np.linspace(0.0, rho, int(grid))
    g = np.asarray(grid, float)
    if g[0] != 0.0 or not math.isclose(g[-1], rho) or np.any(np.diff(g) <= 0):
        raise ValueError("grid must increase from 0 to rho")
    return g


def edge_zero_hit(a: float, b: float, rho: float, n_crossings: int, rng: np.random.Generator) -> bool:
    """Closed-form draw of whether the edge trace vanishes somewhere."""
    if n_crossings >= 1:
        return False
    return bool(rng.random() >= no_zero_probability(math.sqrt(a * b) / rho))


# ---------------------------------------------------------------- Gaussian pieces


def brownian_bridge(start: np.ndarray, end: np.ndarray, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Brownian bridge values at `times` (t_0 = 0, t_last = T) between
    per-sample start and end points of shape (n, d). Returns (n, d, m)."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    n, d = start.shape
    m = len(times)
    total = times[-1]
    out = np.empty((n, d, m))
    out[:, :, 0] = start
    x = start.copy()
    for i in range(1, m):
        left = total - times[i - 1]
        dt = times[i] - times[i - 1]
        if i == m - 1:
            x = end.copy()
        else:
            frac = dt / left
            mean = x + (end - x) * frac
            var = dt * (total - times[i]) / left
            x = mean + math.sqrt(var) * rng.standard_normal((n, d))
        out[:, :, i] = x
    return out


def bridge_to_zero(start_norm: np.ndarray, tau: np.ndarray, times: np.ndarray, dim: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Squared norm of a dim-dimensional Brownian bridge from norm
    `start_norm` to 0 over [0, tau] (per sample), set to 0 after tau.
    Returns (n, m)."""
    n = len(start_norm)
    m = len(times)
    out = np.zeros((n, m))
    x = np.zeros((n, dim))
    x[:, 0] = start_norm
    out[:, 0] = start_norm**2
    for i in range(1, m):
        s_prev, s = times[i - 1], times[i]
        active = s < tau
        if not active.any():
            break
        left = tau[active] - s_prev
        frac = (s - s_prev) / left
        rest = (tau[active] - s) / left
        xa = x[active]
        xa = xa * rest[:, None] + np.sqrt((s - s_prev) * rest)[:, None] * rng.standard_normal((len(left), dim))
        x[active] = xa
        x[~active] = 0.0
        out[active, i] = np.sum(xa * xa, axis=1)
    return out


def extinction_time(level: np.ndarray, rho: float, rng: np.random.Generator) -> np.ndarray:
    """tau with P(tau <= t) = exp(-level/2t) / exp(-level/2rho) on (0, rho];
    0 when level is 0."""
    level = np.asarray(level, float)
    u = rng.random(level.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = 1.0 / (1.0 / rho - 2.0 * np.log(u) / level)
    return np.where(level > 0, tau, 0.0)


def vmf_cosine(kappa: np.ndarray, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Cosine between a von Mises-Fisher(kappa) direction and its mean in
    R^dim (Wood's rejection sampler; dim = 1 gives a signed +-1)."""
    kappa = np.asarray(kappa, float)
    if dim == 1:
        p_plus = 1.0 / (1.0 + np.exp(-2.0 * kappa))
        return np.where(rng.random(kappa.shape) < p_plus, 1.0, -1.0)
    out = np.empty(kappa.shape)
    todo = np.arange(kappa.size)
    flat_k = kappa.ravel()
    res = out.ravel()
    s = dim - 1.0
    while todo.size:
        k = flat_k[todo]
        b = s / (2.0 * k + np.sqrt(4.0 * k * k + s * s))
        x0 = (1.0 - b) / (1.0 + b)
        c = k * x0 + s * np.log(1.0 - x0 * x0)
        z = rng.beta(s / 2.0, s / 2.0, size=todo.size)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        accept = k * w + s * np.log(1.0 - x0 * w) - c >= np.log(rng.random(todo.size))
        res[todo[accept]] = w[accept]
        todo = todo[~accept]
    return res.reshape(kappa.shape)


def besq_bridge(delta: int, x, y, rho: float, grid, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """BESQ^delta bridge from x to y over [0, rho] at the grid points.

    Integer delta >= 1: squared norm of a delta-dimensional Brownian bridge
    between endpoints of norms sqrt(x), sqrt(y), the relative direction being
    von Mises-Fisher with concentration sqrt(x y)/rho. delta = 0: sequential
    exact sampling (see `besq_bridge_sequential`). Returns (n, m).
    """
    times = make_grid(rho, grid)
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    n = size or max(len(x), len(y))
    x = np.broadcast_to(x, (n,)).copy()
    y = np.broadcast_to(y, (n,)).copy()
    if np.any(x < 0) or np.any(y < 0):
        raise ValueError("endpoint values must be nonnegative")
    if delta == 0:
        if np.all(x == 0) and np.all(y == 0):
            return np.zeros((n, len(times)))
        if not (np.all(x == x[0]) and np.all(y == y[0])):
            raise ValueError("delta = 0 bridges take scalar endpoints")
        return besq_bridge_sequential(0, float(x[0]), float(y[0]), rho, times, rng, n)
    if int(delta) != delta or delta < 0:
        raise ValueError("delta must be a nonnegative integer")
    d = int(delta)
    kappa = np.sqrt(x * y) / rho
    cos = vmf_cosine(kappa, d, rng)
    start = np.zeros((n, d))
    start[:, 0] = np.sqrt(x)
    end = np.zeros((n, d))
    end[:, 0] = np.sqrt(y) * cos
    if d > 1:
        end[:, 1] = np.sqrt(y) * np.sqrt(np.clip(1.0 - cos * cos, 0.0, None))
    path = brownian_bridge(start, end, times, rng)
    out = np.sum(path * path, axis=1)
    out[:, 0], out[:, -1] = x, y
    return out


def besq_bridge_mean(delta: int, x: float, y: float, rho: float, s: float) -> float:
    """Closed-form mean of the bridge at s for integer delta >= 1."""
    t = s / rho
    kappa = math.sqrt(x * y) / rho
    if delta == 1:
        mean_cos = math.tanh(kappa)
    elif kappa == 0:
        mean_cos = 0.0
    else:
        mean_cos = ive(delta / 2, kappa) / ive(delta / 2 - 1, kappa)
    drift = x * (1 - t) ** 2 + y * t * t + 2 * t * (1 - t) * math.sqrt(x * y) * mean_cos
    return drift + delta * s * (rho - s) / rho


# ---------------------------------------------------------------- sequential route


def besq_log_transition(delta: float, r: float, z, y):
    """log density at y of BESQ^delta started at z after time r (y > 0)."""
    z = np.asarray(z, float)
    nu = delta / 2.0 - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.sqrt(z * y) / r
        core = (-math.log(2.0 * r) + 0.5 * nu * (math.log(y) - np.log(z)) - (z + y) / (2.0 * r)
                + np.log(ive(nu, arg)) + arg)
        if delta > 0:
            from_zero = (delta / 2.0 - 1.0) * math.log(y) - y / (2.0 * r) - (delta / 2.0) * math.log(2.0 * r) \
                - math.lgamma(delta / 2.0)
        else:
            from_zero = -np.inf
    return np.where(z > 0, core, from_zero)


def _free_step(delta: float, z: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    if delta > 0:
        return dt * rng.noncentral_chisquare(delta, z / dt)
    shape = rng.poisson(z / (2.0 * dt))
    return np.where(shape > 0, rng.gamma(np.maximum(shape, 1), 2.0 * dt), 0.0)


def besq_bridge_sequential(delta: float, x: float, y: float, rho: float, grid, rng: np.random.Generator,
                           size: int) -> np.ndarray:
    """Grid-point sampling of the BESQ^delta bridge from the Markov bridge
    kernel: propose from the free transition, accept with the ratio of the
    remaining transition density to its maximum. Scalar endpoints."""
    times = make_grid(rho, grid)
    m = len(times)
    out = np.empty((size, m))
    out[:, 0] = x
    out[:, -1] = y
    cur = np.full(size, float(x))
    for i in range(1, m - 1):
        dt = times[i] - times[i - 1]
        r = rho - times[i]
        if y == 0.0:
            if delta != 0:
                raise ValueError("sequential route handles y = 0 only for delta = 0")
            log_accept = lambda z: -z / (2.0 * r)
            log_max = 0.0
        else:
            log_accept = lambda z: besq_log_transition(delta, r, z, y)
            log_max = _max_log_transition(delta, r, y)
        nxt = np.empty(size)
        todo = np.arange(size)
        while todo.size:
            prop = _free_step(delta, cur[todo], dt, rng)
            ok = np.log(rng.random(todo.size)) <= log_accept(prop) - log_max
            nxt[todo[ok]] = prop[ok]
            todo = todo[~ok]
        cur = nxt
        out[:, i] = cur
    return out


def _max_log_transition(delta: float, r: float, y: float) -> float:
    zs = np.concatenate([[0.0], np.geomspace(1e-8, 50.0 * (y + r), 600)])
    vals = besq_log_transition(delta, r, zs, y)
    j = int(np.nanargmax(vals))
    best = vals[j]
    if 0 < j < len(zs) - 1:
        res = optimize.minimize_scalar(lambda z: -float(besq_log_transition(delta, r, np.array([z]), y)[0]),
                                       bounds=(zs[j - 1], zs[j + 1]), method="bounded")
        best = max(best, -res.fun)
    return float(best) + 1e-9


# ---------------------------------------------------------------- edge traces


@dataclass
class EdgeField:
    edge: int
    grid: np.ndarray
    values: np.ndarray
    zero_hit: bool
    first_zero: float = math.nan
    last_zero: float = math.nan


@dataclass
class EdgeFieldBatch:
    grid: np.ndarray
    values: np.ndarray  # (n, m)
    zero_hit: np.ndarray  # (n,)
    first_zero: np.ndarray  # (n,) position along the edge, nan if none
    last_zero: np.ndarray


def _interpolate(t0, x0, t1, x1, t, rng):
    """Brownian bridge value at t between (t0, x0) and (t1, x1)."""
    span = t1 - t0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(span > 0, (t - t0) / span, 0.0)
        var = np.where(span > 0, (t - t0) * (t1 - t) / span, 0.0)
    return x0 + (x1 - x0) * w + np.sqrt(np.clip(var, 0.0, None)) * rng.standard_normal(np.shape(t))


def _zero_scan(signed: np.ndarray, times: np.ndarray, left: np.ndarray, right: np.ndarray,
               rng: np.random.Generator):
    """Zeros of a one-dimensional Brownian path (known on `times`) inside
    the per-sample windows [left, right]. Returns flags and first/last zero
    positions."""
    n, m = signed.shape
    seg_lo, seg_hi = times[:-1], times[1:]
    # locate the segments holding the window ends, insert the interpolated values
    i_left = np.clip(np.searchsorted(times, left, side="right") - 1, 0, m - 2)
    i_right = np.clip(np.searchsorted(times, right, side="left") - 1, 0, m - 2)
    rows = np.arange(n)
    v_left = _interpolate(times[i_left], signed[rows, i_left], times[i_left + 1], signed[rows, i_left + 1], left, rng)
    same = i_left == i_right
    base_t = np.where(same & (left < right), left, times[i_right])
    base_v = np.where(same & (left < right), v_left, signed[rows, i_right])
    v_right = _interpolate(base_t, base_v, times[i_right + 1], signed[rows, i_right + 1], right, rng)
    lo_t = np.maximum(seg_lo[None, :], left[:, None])
    hi_t = np.minimum(seg_hi[None, :], right[:, None])
    valid = hi_t > lo_t
    cols = np.arange(m - 1)[None, :]
    lo_v = np.where(cols == i_left[:, None], v_left[:, None], signed[:, :-1])
    lo_v = np.where(seg_lo[None, :] >= left[:, None], signed[:, :-1], lo_v)
    hi_v = np.where(cols == i_right[:, None], v_right[:, None], signed[:, 1:])
    hi_v = np.where(seg_hi[None, :] <= right[:, None], signed[:, 1:], hi_v)
    prod = lo_v * hi_v
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p_zero = np.where(prod <= 0, 1.0, np.exp(-2.0 * prod / np.where(valid, hi_t - lo_t, 1.0)))
    zero = valid & (rng.random(prod.shape) < p_zero)
    hit = zero.any(axis=1)
    first_seg = np.argmax(zero, axis=1)
    last_seg = m - 2 - np.argmax(zero[:, ::-1], axis=1)
    first = np.full(n, np.nan)
    last = np.full(n, np.nan)
    if hit.any():
        r = rows[hit]
        first[hit] = _zero_position(lo_t[r, first_seg[hit]], hi_t[r, first_seg[hit]],
                                    lo_v[r, first_seg[hit]], hi_v[r, first_seg[hit]], rng, from_left=True)
        last[hit] = _zero_position(lo_t[r, last_seg[hit]], hi_t[r, last_seg[hit]],
                                   lo_v[r, last_seg[hit]], hi_v[r, last_seg[hit]], rng, from_left=False)
    return hit, first, last


def _zero_position(t0, t1, x0, x1, rng, from_left: bool):
    """Position of a zero inside a segment known to contain one; exact at
    segment ends that already vanish, uniform otherwise."""
    pos = t0 + (t1 - t0) * rng.random(len(t0))
    if from_left:
        pos = np.where(x0 == 0, t0, pos)
    else:
        pos = np.where(x1 == 0, t1, pos)
    return pos


def edge_field_batch(a, b, rho: float, crossings, grid, rng: np.random.Generator,
                     condition: str | None = None, max_rounds: int = 10_000) -> EdgeFieldBatch:
    """Edge traces given endpoint local times and crossing counts.

    `condition` = "positive" keeps only traces that never vanish, "zero" only
    traces that do; both by rejection. A positive trace with no crossing and
    a vanishing endpoint value is the limiting BESQ^3 bridge, drawn directly.
    """
    times = make_grid(rho, grid)
    a = np.atleast_1d(np.asarray(a, float))
    b = np.atleast_1d(np.asarray(b, float))
    c = np.atleast_1d(np.asarray(crossings, int))
    n = max(len(a), len(b), len(c))
    a, b, c = (np.broadcast_to(v, (n,)).copy() for v in (a, b, c))
    out = EdgeFieldBatch(times, np.empty((n, len(times))), np.zeros(n, bool), np.full(n, np.nan), np.full(n, np.nan))
    todo = np.arange(n)
    if condition == "positive":
        direct = (c == 0) & ((a == 0) | (b == 0))
        idx = np.flatnonzero(direct)
        if idx.size:
            out.values[idx] = besq_bridge(3, a[idx], b[idx], rho, times, rng)
            todo = np.flatnonzero(~direct)
    for _ in range(max_rounds):
        if not todo.size:
            return out
        part = _edge_field_raw(a[todo], b[todo], rho, c[todo], times, rng)
        if condition == "positive":
            keep = ~part.zero_hit
        elif condition == "zero":
            keep = part.zero_hit
        else:
            keep = np.ones(todo.size, bool)
        idx = todo[keep]
        out.values[idx] = part.values[keep]
        out.zero_hit[idx] = part.zero_hit[keep]
        out.first_zero[idx] = part.first_zero[keep]
        out.last_zero[idx] = part.last_zero[keep]
        todo = todo[~keep]
    raise RuntimeError("conditioning by rejection did not finish")


def _edge_field_raw(a, b, rho, c, times, rng) -> EdgeFieldBatch:
    n, m = len(a), len(times)
    values = np.zeros((n, m))
    zero_hit = np.zeros(n, bool)
    first = np.full(n, np.nan)
    last = np.full(n, np.nan)
    tau_a = extinction_time(a, rho, rng)
    tau_b = extinction_time(b, rho, rng)
    values += bridge_to_zero(np.sqrt(a), tau_a, times, 4, rng)
    values += bridge_to_zero(np.sqrt(b), tau_b, rho - times[::-1], 4, rng)[:, ::-1]
    for cc in np.unique(c):
        sel = np.flatnonzero(c == cc)
        dim = 1 + 2 * int(cc)
        zeros = np.zeros((len(sel), dim))
        path = brownian_bridge(zeros, zeros, times, rng)
        values[sel] += np.sum(path * path, axis=1)
        if cc == 0:
            signed = path[:, 0, :]
            left, right = tau_a[sel], rho - tau_b[sel]
            open_window = left < right
            if open_window.any():
                s2 = sel[open_window]
                hit, f, l = _zero_scan(signed[open_window], times, left[open_window], right[open_window], rng)
                zero_hit[s2] = hit
                first[s2] = f
                last[s2] = l
    values[:, 0], values[:, -1] = a, b
    return EdgeFieldBatch(times, values, zero_hit, first, last)


def sample_edge_field(a: float, b: float, rho: float, n_crossings: int, condition_positive: bool,
                      grid, rng: np.random.Generator, edge: int = -1) -> EdgeField:
    batch = edge_field_batch([a], [b], rho, [n_crossings], grid, rng,
                             condition="positive" if condition_positive else None)
    return EdgeField(edge, batch.grid, batch.values[0], bool(batch.zero_hit[0]),
                     float(batch.first_zero[0]), float(batch.last_zero[0]))


# ---------------------------------------------------------------- whole graph


@dataclass
class OccupationField:
    vertex_times: np.ndarray
    edge_fields: dict = field(default_factory=dict)

    @property
    def zero_hit(self) -> np.ndarray:
        return np.array([self.edge_fields[e].zero_hit for e in sorted(self.edge_fields)])


def sample_occupation(g, crossings: np.ndarray, vertex_times: np.ndarray, rng: np.random.Generator,
                      grid=DEFAULT_GRID) -> OccupationField:
    """Edge traces for one discrete configuration and its vertex local times."""
    fields = {}
    for e in range(g.n_edges):
        a = vertex_times[g.edge_a[e]]
        b = vertex_times[g.edge_b[e]]
        fields[e] = sample_edge_field(a, b, g.lengths[e], int(crossings[e]), False, grid, rng, edge=e)
    return OccupationField(np.asarray(vertex_times, float), fields)


def sample_occupation_batch(g, crossings: np.ndarray, vertex_times: np.ndarray, rng: np.random.Generator,
                            grid=DEFAULT_GRID) -> dict:
    """Per-edge EdgeFieldBatch for many configurations at once."""
    out = {}
    for e in range(g.n_edges):
        a = vertex_times[:, g.edge_a[e]]
        b = vertex_times[:, g.edge_b[e]]
        out[e] = edge_field_batch(a, b, g.lengths[e], crossings[:, e], grid, rng)
    return out


@dataclass
class ClusterSet:
    clusters: list  # each a dict with sorted 'edges' and 'vertices'

    def __len__(self):
        return len(self.clusters)

    def cluster_of_vertex(self, v: int) -> int:
        for i, c in enumerate(self.clusters):
            if v in c["vertices"]:
                return i
        return -1


def extract_clusters(g, zero_hit, vertex_times) -> ClusterSet:
    """Maximal connected sets of edges whose trace stays positive."""
    zero_hit = np.asarray(zero_hit, bool)
    vertex_times = np.asarray(vertex_times, float)
    good = [e for e in range(g.n_edges)
            if not zero_hit[e] and vertex_times[g.edge_a[e]] > 0 and vertex_times[g.edge_b[e]] > 0]
    parent = list(range(g.n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in good:
        ra, rb = find(int(g.edge_a[e])), find(int(g.edge_b[e]))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict = {}
    for e in good:
        groups.setdefault(find(int(g.edge_a[e])), []).append(e)
    clusters = []
    for root in sorted(groups):
        edges = sorted(groups[root])
        verts = sorted({int(g.edge_a[e]) for e in edges} | {int(g.edge_b[e]) for e in edges})
        clusters.append({"edges": edges, "vertices": verts})
    return ClusterSet(clusters)


def dump_field_csv(field_: OccupationField, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edge", "s", "value"])
        for e in sorted(field_.edge_fields):
            ef = field_.edge_fields[e]
            for s, v in zip(ef.grid, ef.values):
                writer.writerow([e, repr(float(s)), repr(float(v))])
