"""Test statistics and the report container shared by all checks."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

ALPHA = 0.01


def ks_two_sample(a, b) -> tuple[float, float]:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if len(a) < 50 or len(b) < 50:
        raise ValueError("need at least 50 samples on each side")
    res = sps.ks_2samp(a, b)
    return float(res.statistic), float(res.pvalue)


def ks_one_sample(a, cdf) -> tuple[float, float]:
    a = np.asarray(a, float)
    if len(a) < 50:
        raise ValueError("need at least 50 samples")
    res = sps.kstest(a, cdf)
    return float(res.statistic), float(res.pvalue)


def pool_small_cells(observed, expected, min_expected: float = 5.0):
    """Merge adjacent cells (in the given order) until each expected count
    reaches min_expected; the remainder joins the last kept cell."""
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if obs:
            obs[-1] += o_acc
            exp[-1] += e_acc
        else:
            obs.append(o_acc)
            exp.append(e_acc)
    return np.array(obs), np.array(exp)


def chi_square(observed, expected, ddof: int = 0, min_expected: float = 5.0) -> tuple[float, float, int]:
    """Goodness of fit; expected is rescaled to the observed total."""
    observed = np.asarray(observed, float)
    expected = np.asarray(expected, float)
    expected = expected * observed.sum() / expected.sum()
    obs, exp = pool_small_cells(observed, expected, min_expected)
    df = len(obs) - 1 - ddof
    if df <= 0:
        return 0.0, 1.0, 0
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, float(sps.chi2.sf(stat, df)), df


def chi_square_two_sample(counts_a, counts_b, min_expected: float = 5.0) -> tuple[float, float, int]:
    """Homogeneity test for two histograms over the same cells."""
    a = np.asarray(counts_a, float)
    b = np.asarray(counts_b, float)
    keep = (a + b) > 0
    a, b = a[keep], b[keep]
    total = a + b
    order = np.argsort(-total, kind="stable")
    a, b, total = a[order], b[order], total[order]
    # pool the tail of rare cells into one
    ea = total * a.sum() / total.sum()
    eb = total * b.sum() / total.sum()
    small = (ea < min_expected) | (eb < min_expected)
    if small.any():
        first = int(np.argmax(small))
        a = np.append(a[:first], a[first:].sum())
        b = np.append(b[:first], b[first:].sum())
    table = np.vstack([a, b])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 0.0, 1.0, 0
    stat, p, df, _ = sps.chi2_contingency(table, correction=False)
    return float(stat), float(p), int(df)


def poisson_dispersion(samples, mean0: float) -> dict:
    """z-scores of the sample mean against mean0 and of the variance/mean
    ratio against 1 (delta-method standard errors under the Poisson law)."""
    x = np.asarray(samples, float)
    n = len(x)
    if n < 50:
        raise ValueError("need at least 50 samples")
    m, v = x.mean(), x.var(ddof=1)
    z_mean = (m - mean0) / math.sqrt(mean0 / n) if mean0 > 0 else (0.0 if m == 0 else math.inf)
    # Var(sample variance) for Poisson(mu): (mu + 2 mu^2 (n/(n-1))) / n
    if mean0 > 0:
        se_ratio = math.sqrt((1.0 / mean0 + 2.0) / n)
        z_ratio = (v / mean0 - 1.0) / se_ratio
    else:
        z_ratio = 0.0
    return {
        "mean": m, "var": v, "z_mean": z_mean, "z_ratio": z_ratio,
        "p_mean": float(2 * sps.norm.sf(abs(z_mean))), "p_ratio": float(2 * sps.norm.sf(abs(z_ratio))),
    }


def weighted_pmf(keys: Sequence, weights=None) -> dict:
    pmf: dict = {}
    if weights is None:
        weights = np.ones(len(keys))
    for k, w in zip(keys, weights):
        pmf[k] = pmf.get(k, 0.0) + float(w)
    total = sum(pmf.values())
    return {k: v / total for k, v in pmf.items()}


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, float)
    return float(w.sum() ** 2 / np.sum(w * w)) if w.sum() > 0 else 0.0


def mean_with_se(x) -> tuple[float, float]:
    x = np.asarray(x, float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def correlation_z(x, y) -> tuple[float, float]:
    """Sample correlation and its z-score under independence (Fisher)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.std() == 0 or y.std() == 0:
        return 0.0, 0.0
    r = float(np.corrcoef(x, y)[0, 1])
    return r, r * math.sqrt(len(x) - 1)


# ---------------------------------------------------------------- report


@dataclass
class Row:
    name: str
    statistic: float
    p_value: float | None = None
    n: int = 0
    passed: bool = True
    detail: dict = field(default_factory=dict)


@dataclass
class StatReport:
    experiment: str
    seed: int
    config: dict = field(default_factory=dict)
    rows: list[Row] = field(default_factory=list)
    started: float = field(default_factory=time.time)

    def add(self, name, statistic, p_value=None, n=0, passed=None, **detail) -> Row:
        row = Row(name, _plain(statistic), None if p_value is None else _plain(p_value), int(n),
                  True if passed is None else bool(passed), {k: _plain(v) for k, v in detail.items()})
        self.rows.append(row)
        return row

    def finalize(self, alpha: float = ALPHA) -> "StatReport":
        """Apply a Bonferroni threshold to every row that carries a p-value
        but no explicit verdict."""
        tested = [r for r in self.rows if r.p_value is not None and "explicit" not in r.detail]
        threshold = alpha / max(1, len(tested))
        for r in tested:
            r.passed = r.passed and r.p_value > threshold
            r.detail["threshold"] = threshold
        return self

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def body(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "config": {k: _plain(v) for k, v in sorted(self.config.items())},
            "rows": [
                {"name": r.name, "statistic": r.statistic, "p_value": r.p_value, "n": r.n,
                 "passed": r.passed, "detail": r.detail}
                for r in self.rows
            ],
            "passed": self.passed,
        }

    def to_json(self) -> str:
        meta = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(self.started)),
                "wall_clock_s": round(time.time() - self.started, 3)}
        return json.dumps({"body": self.body(), "meta": meta}, indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"[{self.experiment}] {'PASS' if self.passed else 'FAIL'}"]
        for r in self.rows:
            p = "" if r.p_value is None else f" p={r.p_value:.4g}"
            lines.append(f"  {'ok ' if r.passed else 'BAD'} {r.name}: stat={r.statistic:.6g}{p} n={r.n}")
        return "\n".join(lines)


def _plain(x):
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    return x
