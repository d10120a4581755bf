"""Discrete loop soup at intensity 1/2.

Sampling goes vertex by vertex. At stage i the vertices already processed
are killed together with the sink; the number k of excursions from v_i is
drawn from the visit law with the stage return probability p, the k
excursions are drawn by an h-transformed walk, and their 2k ends are paired
uniformly. Each cycle of the pairing closes into one loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from .graph_core import MetricGraph
from .harmonic import hitting_probability, transition_matrix, vertex_rates

TAIL_GUARD = 1e-14


# ------------------------------------------------------------- visit law


def visits_pmf(p: float, tail: float = TAIL_GUARD) -> np.ndarray:
    """P(k) = p^k / k! * Gamma(k + 1/2) / Gamma(1/2) * sqrt(1 - p), truncated
    once the remaining mass falls below `tail`."""
    if not 0.0 <= p < 1.0:
        raise ValueError("return probability must lie in [0, 1)")
    if p == 0.0:
        return np.array([1.0])
    probs = []
    log_p = math.log(p)
    total = 0.0
    k = 0
    while True:
        lp = k * log_p - gammaln(k + 1) + gammaln(k + 0.5) - gammaln(0.5) + 0.5 * math.log1p(-p)
        probs.append(math.exp(lp))
        total += probs[-1]
        if 1.0 - total < tail and k > 0:
            break
        k += 1
        if k > 100_000:
            break
    pmf = np.array(probs)
    return pmf / pmf.sum()


def visits_mean(p: float) -> float:
    return 0.5 * p / (1.0 - p)


def sample_visits(p: float, size: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(visits_pmf(p))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right").astype(np.int64)


def visits_distribution(g: MetricGraph, v: int) -> np.ndarray:
    from .harmonic import return_probability

    return visits_pmf(return_probability(g, v))


# ------------------------------------------------------------- loops


@dataclass(frozen=True)
class DiscreteLoop:
    """Unrooted unoriented loop stored as its canonical step sequence.

    A step is (edge id, direction) with direction 0 for endpoint_a ->
    endpoint_b and 1 for the reverse.
    """

    steps: tuple

    @property
    def length(self) -> int:
        return len(self.steps)

    @cached_property
    def multiplicity(self) -> int:
        return len(self.steps) // smallest_period(self.steps)

    def crossings(self, n_edges: int) -> np.ndarray:
        out = np.zeros(n_edges, dtype=np.int64)
        for e, _ in self.steps:
            out[e] += 1
        return out

    def vertices(self, g: MetricGraph) -> list:
        return [step_root(g, s) for s in self.steps]


def step_root(g: MetricGraph, step) -> int:
    e, d = step
    return int(g.edge_a[e] if d == 0 else g.edge_b[e])


def step_tip(g: MetricGraph, step) -> int:
    e, d = step
    return int(g.edge_b[e] if d == 0 else g.edge_a[e])


def reverse_steps(steps: Sequence) -> tuple:
    return tuple((e, 1 - d) for e, d in reversed(steps))


def smallest_period(seq: Sequence) -> int:
    n = len(seq)
    for p in range(1, n + 1):
        if n % p == 0 and all(seq[i] == seq[(i + p) % n] for i in range(n)):
            return p
    return n


def _min_rotation(seq: tuple) -> tuple:
    return min(seq[i:] + seq[:i] for i in range(len(seq)))


def canonical_loop(steps: Sequence) -> DiscreteLoop:
    steps = tuple((int(e), int(d)) for e, d in steps)
    return DiscreteLoop(min(_min_rotation(steps), _min_rotation(reverse_steps(steps))))


def is_symmetric(steps: Sequence) -> bool:
    """True when the loop read backwards is a rotation of itself."""
    steps = tuple(steps)
    return _min_rotation(steps) == _min_rotation(reverse_steps(steps))


def loop_weight(loop: DiscreteLoop, g: MetricGraph, rates: np.ndarray | None = None) -> float:
    """nu(loop): (1/J) prod (1/rho)/a_root over the steps, halved when both
    orientations give the same unoriented loop."""
    if rates is None:
        rates = vertex_rates(g)
    log_w = 0.0
    for step in loop.steps:
        log_w -= math.log(g.lengths[step[0]]) + math.log(rates[step_root(g, step)])
    mu = math.exp(log_w) / loop.multiplicity
    return 0.5 * mu if is_symmetric(loop.steps) else mu


@dataclass
class DiscreteLoopConfig:
    loops: list
    n_edges: int
    n_vertices: int
    incidence: np.ndarray = field(repr=False, default=None)

    @property
    def crossings(self) -> np.ndarray:
        out = np.zeros(self.n_edges, dtype=np.int64)
        for loop in self.loops:
            out += loop.crossings(self.n_edges)
        return out

    @property
    def visits(self) -> np.ndarray:
        return (self.incidence @ self.crossings) // 2

    def dump(self, g: MetricGraph) -> str:
        counts: dict = {}
        for loop in self.loops:
            counts[loop] = counts.get(loop, 0) + 1
        lines = []
        for loop in sorted(counts, key=lambda l: l.steps):
            verts = " ".join(str(g.labels[v]) for v in loop.vertices(g))
            lines.append(f"{verts}\t{counts[loop]}")
        return "\n".join(lines)


# ------------------------------------------------------------- stage tables


@dataclass
class StageTables:
    """Per-stage walk tables for the pairing construction.

    For stage i, row x of `cum[i]` is the cumulative law of the next directed
    edge of the h-transformed walk at x (h = probability of reaching v_i
    before the killed set). `nxt`/`eid` give the tip and edge of each column.
    """

    order: np.ndarray
    return_prob: np.ndarray
    cdfs: list
    nxt: np.ndarray
    eid: np.ndarray
    edir: np.ndarray
    cum: np.ndarray


def build_stage_tables(g: MetricGraph, order: Sequence[int] | None = None,
                       killed: Iterable[int] = ()) -> StageTables:
    killed = set(int(k) for k in killed) | {g.sink}
    if order is None:
        order = [v for v in range(g.n_vertices) if v not in killed]
    order = [int(v) for v in order]
    if set(order) & killed:
        raise ValueError("a killed vertex cannot be in the order")
    rates = vertex_rates(g)
    directed = g.directed_edges()
    by_root: dict[int, list] = {v: [] for v in range(g.n_vertices)}
    for idx, (e, root, tip) in enumerate(directed):
        by_root[root].append((e, idx % 2, tip))
    width = max(1, max(len(x) for x in by_root.values()))
    n_stage, n_v = len(order), g.n_vertices
    nxt = np.zeros((n_v, width), dtype=np.int64)
    eid = np.zeros((n_v, width), dtype=np.int64)
    edir = np.zeros((n_v, width), dtype=np.int64)
    for v, lst in by_root.items():
        for j, (e, d, tip) in enumerate(lst):
            nxt[v, j], eid[v, j], edir[v, j] = tip, e, d
    cum = np.full((n_stage, n_v, width), np.inf)
    ret = np.zeros(n_stage)
    cdfs = []
    done: set = set()
    for i, v in enumerate(order):
        h = hitting_probability(g, v, killed | done)
        for x in range(n_v):
            lst = by_root[x]
            if not lst or (x != v and h[x] <= 0):
                continue
            w = np.array([h[tip] / g.lengths[e] for e, _, tip in lst])
            if x == v:
                ret[i] = min(w.sum() / rates[v], 1.0 - 1e-15)
            s = w.sum()
            if s <= 0:
                continue
            c = np.cumsum(w / s)
            c[-1] = 1.0
            cum[i, x, : len(lst)] = c
        pmf = visits_pmf(ret[i])
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        cdfs.append(cdf)
        done.add(v)
    return StageTables(np.array(order), ret, cdfs, nxt, eid, edir, cum)


# ------------------------------------------------------------- vectorized sampler


def sample_crossing_counts(g: MetricGraph, reps: int, rng: np.random.Generator,
                           order: Sequence[int] | None = None, killed: Iterable[int] = (),
                           boundary: Sequence[int] | None = None, inside_edges: Iterable[int] = (),
                           tables: StageTables | None = None) -> dict:
    """Crossing counts n(e) and visit counts k_v for `reps` independent soups.

    With `boundary` given (and placed first in the order), also counts, for
    each pair of boundary vertices, the excursions between them that use no
    edge of `inside_edges`. Returns a dict with 'n', 'k' and optionally
    'pairs' (reps x B x B, symmetric, diagonal = returning excursions).
    """
    if tables is None:
        if boundary is not None:
            rest = [v for v in range(g.n_vertices)
                    if v not in set(boundary) and v != g.sink and v not in set(killed)]
            order = list(boundary) + rest
        tables = build_stage_tables(g, order, killed)
    if boundary is not None and list(tables.order[: len(boundary)]) != list(boundary):
        raise ValueError("boundary vertices must come first in the order")
    n_e = g.n_edges
    flat_counts = np.zeros(reps * n_e, dtype=np.int64)
    track = boundary is not None
    if track:
        b_index = np.full(g.n_vertices, -1)
        b_index[list(boundary)] = np.arange(len(boundary))
        inside = np.zeros(n_e, dtype=bool)
        inside[list(inside_edges)] = True
        n_b = len(boundary)
        flat_pairs = np.zeros(reps * n_b * n_b, dtype=np.int64)
    for i, v in enumerate(tables.order):
        k = np.searchsorted(tables.cdfs[i], rng.random(reps), side="right")
        total = int(k.sum())
        if total == 0:
            continue
        rep_of = np.repeat(np.arange(reps), k)
        pos = np.full(total, v)
        cum = tables.cum[i]
        if track:
            last_b = np.full(total, b_index[v])
            seg_out = np.zeros(total, dtype=bool)
            at_start = np.ones(total, dtype=bool)
        while total:
            u = rng.random(total)
            j = (u[:, None] >= cum[pos]).sum(axis=1)
            e = tables.eid[pos, j]
            new = tables.nxt[pos, j]
            flat_counts += np.bincount(rep_of * n_e + e, minlength=reps * n_e)
            if track:
                seg_out = np.where(at_start, ~inside[e], seg_out)
                bi = b_index[new]
                hit = bi >= 0
                hit_pair = hit & seg_out & (last_b >= 0)
                if hit_pair.any():
                    lo = np.minimum(last_b[hit_pair], bi[hit_pair])
                    hi = np.maximum(last_b[hit_pair], bi[hit_pair])
                    r = rep_of[hit_pair]
                    idx = np.concatenate([r * n_b * n_b + lo * n_b + hi, r * n_b * n_b + hi * n_b + lo])
                    # diagonal entries get added twice by the symmetric scatter
                    same = np.concatenate([lo == hi, np.zeros(len(lo), dtype=bool)])
                    flat_pairs += np.bincount(idx[~same], minlength=reps * n_b * n_b)
                last_b = np.where(hit, bi, last_b)
                at_start = hit
            pos = new
            alive = pos != v
            if not alive.all():
                pos, rep_of = pos[alive], rep_of[alive]
                if track:
                    last_b, seg_out, at_start = last_b[alive], seg_out[alive], at_start[alive]
                total = len(pos)
    n = flat_counts.reshape(reps, n_e)
    out = {"n": n, "k": (n @ g.incidence().T) // 2}
    if track:
        out["pairs"] = flat_pairs.reshape(reps, n_b, n_b)
    return out


def sample_vertex_local_times(k: np.ndarray, g: MetricGraph, rng: np.random.Generator) -> np.ndarray:
    """Gamma(k_v + 1/2, rate a_v/2) given visit counts; the sink gets 0.

    `k` may be a single vector or a (reps, V) array.
    """
    k = np.asarray(k)
    rates = vertex_rates(g)
    out = rng.gamma(k + 0.5, 2.0 / rates)
    out[..., g.sink] = 0.0
    return out


# ------------------------------------------------------------- full loops


def sample_discrete_soup(g: MetricGraph, rng: np.random.Generator, order: Sequence[int] | None = None,
                         tables: StageTables | None = None) -> DiscreteLoopConfig:
    """One exact sample of the discrete loop soup, loops kept in full."""
    if tables is None:
        tables = build_stage_tables(g, order)
    loops = []
    for i, v in enumerate(tables.order):
        k = int(np.searchsorted(tables.cdfs[i], rng.random(), side="right"))
        if k == 0:
            continue
        cum = tables.cum[i]
        excursions = []
        for _ in range(k):
            pos, steps = int(v), []
            while True:
                j = int(np.searchsorted(cum[pos], rng.random(), side="right"))
                steps.append((int(tables.eid[pos, j]), int(tables.edir[pos, j])))
                pos = int(tables.nxt[pos, j])
                if pos == v:
                    break
            excursions.append(steps)
        loops.extend(_pair_excursions(excursions, rng))
    return DiscreteLoopConfig(loops, g.n_edges, g.n_vertices, g.incidence())


def _pair_excursions(excursions: list, rng: np.random.Generator) -> list:
    """Uniform perfect matching of the 2k excursion ends; each cycle of
    (excursion, matching) links is read off as one loop."""
    k = len(excursions)
    ends = rng.permutation(2 * k)
    partner = np.empty(2 * k, dtype=int)
    partner[ends[0::2]] = ends[1::2]
    partner[ends[1::2]] = ends[0::2]
    # end 2j is the start of excursion j, end 2j+1 its finish
    used = np.zeros(k, dtype=bool)
    loops = []
    for j0 in range(k):
        if used[j0]:
            continue
        steps: list = []
        j, forward = j0, True
        while True:
            used[j] = True
            steps.extend(excursions[j] if forward else reverse_steps(excursions[j]))
            exit_end = 2 * j + 1 if forward else 2 * j
            nxt = int(partner[exit_end])
            j, forward = nxt // 2, nxt % 2 == 0
            if j == j0 and forward:
                break
        loops.append(canonical_loop(steps))
    return loops


# ------------------------------------------------------------- oracle


def enumerate_loops_oracle(g: MetricGraph, length_cap: int, max_walks: int = 5_000_000) -> tuple[list, float]:
    """All unrooted unoriented loops of at most `length_cap` steps with their
    weights, and the exact weight of the loops left out."""
    if length_cap < 1:
        raise ValueError("length cap must be positive")
    rates = vertex_rates(g)
    by_root: dict[int, list] = {v: [] for v in range(g.n_vertices)}
    for idx, (e, root, tip) in enumerate(g.directed_edges()):
        if root != g.sink and tip != g.sink:
            by_root[root].append(((e, idx % 2), tip))
    found: dict = {}
    walks = 0
    for start in g.interior:
        stack = [(int(start), ())]
        while stack:
            pos, steps = stack.pop()
            for step, tip in by_root[pos]:
                walk = steps + (step,)
                walks += 1
                if walks > max_walks:
                    raise ValueError("length cap too large for enumeration")
                if tip == start:
                    loop = canonical_loop(walk)
                    if loop not in found:
                        found[loop] = loop_weight(loop, g, rates)
                if len(walk) < length_cap:
                    stack.append((tip, walk))
    return sorted(found.items(), key=lambda kv: (kv[0].length, kv[0].steps)), truncated_mass(g, length_cap)


def loop_mass_by_length(g: MetricGraph, n: int) -> float:
    """Total weight of loops with exactly n steps: tr(P^n) / (2n)."""
    lam = _interior_eigenvalues(g)
    return float(np.sum(lam**n) / (2 * n))


def truncated_mass(g: MetricGraph, length_cap: int) -> float:
    lam = _interior_eigenvalues(g)
    total = -0.5 * np.sum(np.log1p(-lam))
    head = sum(0.5 * np.sum(lam**n) / n for n in range(1, length_cap + 1))
    return float(max(total - head, 0.0))


def _interior_eigenvalues(g: MetricGraph) -> np.ndarray:
    idx = g.interior
    p = transition_matrix(g)[np.ix_(idx, idx)]
    r = vertex_rates(g)[idx]
    sym = np.sqrt(r)[:, None] * p / np.sqrt(r)[None, :]
    return np.linalg.eigvalsh((sym + sym.T) / 2)


def crossing_vector_masses(g: MetricGraph, length_cap: int) -> dict:
    """Total nu-mass of the loops with each crossing vector, for loops of at
    most `length_cap` steps.

    Sums closed-walk weights by dynamic programming over (position, crossing
    vector): the loops with crossing vector c carry mass W(c) / (2 |c|), W
    being the weight of rooted oriented closed walks with that vector.
    """
    rates = vertex_rates(g)
    moves: dict[int, list] = {v: [] for v in range(g.n_vertices)}
    for e, root, tip in g.directed_edges():
        if root != g.sink and tip != g.sink:
            moves[root].append((e, tip, 1.0 / (g.lengths[e] * rates[root])))
    masses: dict = {}
    for start in g.interior:
        start = int(start)
        layer = {(start, (0,) * g.n_edges): 1.0}
        for n in range(1, length_cap + 1):
            nxt: dict = {}
            for (pos, c), w in layer.items():
                for e, tip, p in moves[pos]:
                    cc = c[:e] + (c[e] + 1,) + c[e + 1:]
                    nxt[(tip, cc)] = nxt.get((tip, cc), 0.0) + w * p
            layer = nxt
            for (pos, c), w in layer.items():
                if pos == start:
                    masses[c] = masses.get(c, 0.0) + w / (2 * n)
    return masses


def oracle_crossing_pmf(g: MetricGraph, length_cap: int, size: int = 64, floor: float = 1e-14) -> dict:
    """Exact law of the crossing vector of the capped Poisson soup.

    The vector is compound Poisson, so its pmf on the inner edges is the
    inverse DFT of exp(DFT(mu) - total mass) on a periodic grid of `size`
    counts per edge (large enough that wrap-around is negligible).
    """
    masses = crossing_vector_masses(g, length_cap)
    inner = [int(e) for e in g.inner_edges]
    if size ** len(inner) > 2 ** 24:
        raise ValueError("too many inner edges for the transform grid")
    mu = np.zeros((size,) * len(inner))
    for c, w in masses.items():
        idx = tuple(c[e] for e in inner)
        if max(idx) >= size:
            raise ValueError("crossing counts exceed the transform grid")
        mu[idx] += w
    pmf = np.real(np.fft.ifftn(np.exp(np.fft.fftn(mu) - mu.sum())))
    out = {}
    for idx in zip(*np.nonzero(pmf > floor)):
        vec = [0] * g.n_edges
        for e, k in zip(inner, idx):
            vec[e] = int(k)
        out[tuple(vec)] = float(pmf[idx])
    return out


def sample_soup_oracle(g: MetricGraph, length_cap: int, reps: int, rng: np.random.Generator,
                       loops: list | None = None, by_crossings: bool = False) -> np.ndarray:
    """Crossing counts from independent Poisson(nu) copies of each loop up to
    the cap. Loops with the same crossing vector are merged first; with
    `by_crossings` the merged masses come from the walk recursion instead of
    loop enumeration, which reaches much longer caps."""
    if by_crossings:
        groups = crossing_vector_masses(g, length_cap)
    else:
        if loops is None:
            loops, _ = enumerate_loops_oracle(g, length_cap)
        groups = {}
        for loop, w in loops:
            key = tuple(loop.crossings(g.n_edges))
            groups[key] = groups.get(key, 0.0) + w
    keys = np.array(list(groups.keys()), dtype=np.int64)
    means = np.array(list(groups.values()))
    counts = rng.poisson(means, size=(reps, len(means)))
    return counts @ keys


def oracle_poisson_means(g: MetricGraph, length_cap: int) -> dict:
    loops, _ = enumerate_loops_oracle(g, length_cap)
    return {loop: w for loop, w in loops}
