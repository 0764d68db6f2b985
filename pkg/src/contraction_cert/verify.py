"""Statistical checks of one-step contraction, exact discrete Kantorovich
distances, and multi-step decay of coupled chains."""
import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import norm

from .errors import InvalidParameter
from .kernels import assign
from .metric import euclid
from .rng import substreams

BLOCK = 1 << 14
OT_CAP = 512


def default_threads():
    env = os.environ.get("CONTRACTION_CERT_THREADS")
    if env:
        return max(int(env), 1)
    return min(os.cpu_count() or 1, 8)


def _pmap(fn, items, threads):
    threads = threads or default_threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _rows(x, d):
    return np.asarray(x, dtype=float).reshape(1, d)


def _simulate_block(kernel, x, y, n, gen):
    d = x.size
    xs = np.repeat(_rows(x, d), n, axis=0)
    ys = np.repeat(_rows(y, d), n, axis=0)
    return kernel.step(xs, ys, gen)


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentEstimate:
    beta_hat: float
    beta_hw: float
    alpha_hat: float
    alpha_hw: float
    pi_hat: float
    pi_hw: float
    N: int
    geometry: dict


def _mean_hw(v, z):
    m = float(v.mean())
    if len(v) < 2:
        return m, 0.0
    return m, float(z * v.std(ddof=1) / math.sqrt(len(v)))


def empirical_moments(kernel, x, y, N, geometry, rng, level=0.99):
    """Monte Carlo means of dR = R' - r, clip(dR)^2 over the I_r geometry, and 1{R' = 0}."""
    if N < 1000:
        raise InvalidParameter("N must be at least 1000")
    gen = rng if isinstance(rng, np.random.Generator) else substreams(rng, 1)[0]
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    r = float(euclid(x, y))
    xn, yn = _simulate_block(kernel, x, y, N, gen)
    Rn = euclid(xn, yn)
    dR = Rn - r
    clip = geometry.clip(dR, r)
    z = float(norm.isf((1 - level) / 2))
    b, bw = _mean_hw(dR, z)
    a, aw = _mean_hw(clip * clip, z)
    p, pw = _mean_hw((Rn == 0).astype(float), z)
    return MomentEstimate(b, bw, a, aw, p, pw, N, geometry.to_dict())


# ---------------------------------------------------------------------------
# one-step contraction sweep


@dataclass
class ReportRow:
    x: list
    y: list
    r: float
    rho: float
    ratio: float
    ci_lo: float
    ci_hi: float
    bound: float
    passed: bool
    note: str = ""


@dataclass
class ContractionReport:
    rows: list
    verdict: bool
    seed: int
    N: int
    claimed_rate: float
    level: float
    z: float

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "r", "rho", "ratio", "ci_lo", "ci_hi", "bound", "pass"])
            for row in self.rows:
                w.writerow([" ".join(repr(v) for v in row.x), " ".join(repr(v) for v in row.y),
                            repr(row.r), repr(row.rho), repr(row.ratio), repr(row.ci_lo),
                            repr(row.ci_hi), repr(row.bound), int(row.passed)])

    def summary(self):
        tested = [r for r in self.rows if not r.note]
        return {"verdict": "pass" if self.verdict else "fail", "seed": self.seed, "N": self.N,
                "claimed_rate": self.claimed_rate, "level": self.level, "z": self.z,
                "pairs": len(self.rows), "tested": len(tested),
                "failed": sum(1 for r in tested if not r.passed),
                "max_ratio": max((r.ratio for r in tested), default=None)}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"summary": self.summary(), "rows": [asdict(r) for r in self.rows]}, fh, indent=2)

    def fingerprint(self):
        return [(r.ratio, r.ci_lo, r.ci_hi, r.passed) for r in self.rows]


def _pair_ratio(kernel, metric, x, y, N, gen):
    rho0 = float(metric(x, y))
    total, total2 = 0.0, 0.0
    done = 0
    while done < N:
        n = min(BLOCK, N - done)
        xn, yn = _simulate_block(kernel, x, y, n, gen)
        v = np.asarray(metric(xn, yn), dtype=float) / rho0
        total += float(v.sum())
        total2 += float(np.dot(v, v))
        done += n
    mean = total / N
    var = max(total2 / N - mean * mean, 0.0) * N / (N - 1)
    return rho0, mean, math.sqrt(var / N)


def contraction_sweep(kernel, metric, pairs, N, claimed_rate, seed, threads=None, level=0.99, bonferroni=True):
    """Per pair, a one-sided test of E rho(X', Y') <= (1 - c) rho(x, y).

    A pair fails only when the lower confidence limit of the ratio exceeds
    1 - c. With bonferroni the per-pair level is split across pairs so the
    whole sweep has the stated level.
    """
    if not pairs:
        raise InvalidParameter("no start pairs")
    if not 0 <= claimed_rate < 1:
        raise InvalidParameter("claimed_rate must lie in [0, 1)")
    pairs = [(np.asarray(x, dtype=float).ravel(), np.asarray(y, dtype=float).ravel()) for x, y in pairs]
    alpha = (1 - level) / (len(pairs) if bonferroni else 1)
    z = float(norm.isf(alpha))
    streams = substreams(seed, len(pairs))
    bound = 1.0 - claimed_rate

    def work(i):
        x, y = pairs[i]
        r = float(euclid(x, y))
        if float(metric(x, y)) == 0.0:
            return ReportRow(x.tolist(), y.tolist(), r, 0.0, float("nan"), float("nan"), float("nan"),
                             bound, True, "skipped: rho(x, y) = 0")
        rho0, mean, se = _pair_ratio(kernel, metric, x, y, N, streams[i])
        lo, hi = mean - z * se, mean + z * se
        return ReportRow(x.tolist(), y.tolist(), r, rho0, mean, lo, hi, bound, not lo > bound)

    rows = _pmap(work, list(range(len(pairs))), threads)
    verdict = all(r.passed for r in rows)
    seed_val = seed if isinstance(seed, int) else None
    return ContractionReport(rows, verdict, seed_val, N, claimed_rate, level, z)


def log_pairs(d, r_lo, r_hi, n, center=None, direction=None):
    """n start pairs with distances log-spaced in [r_lo, r_hi], symmetric about center."""
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    e = np.ones(d) / math.sqrt(d) if direction is None else np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    return [(c + 0.5 * r * e, c - 0.5 * r * e) for r in np.geomspace(r_lo, r_hi, n)]


# ---------------------------------------------------------------------------
# exact optimal transport between equal-size empirical measures


def cost_matrix(a, b, metric):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    C = metric(a[:, None, :], b[None, :, :]) if metric is not None else euclid(a[:, None, :], b[None, :, :])
    return np.asarray(C, dtype=float)


def discrete_wasserstein(samples_a, samples_b, metric=None):
    """Exact W_rho between uniform empirical measures by min-cost perfect matching."""
    na, nb = len(samples_a), len(samples_b)
    if na != nb:
        raise InvalidParameter("sample counts differ (%d vs %d); only equal weights are supported" % (na, nb))
    if na == 0:
        return 0.0
    if na > 2000:
        raise InvalidParameter("at most 2000 samples per side")
    C = cost_matrix(samples_a, samples_b, metric)
    col = assign(C)
    return float(C[np.arange(na), col].sum() / na)


# ---------------------------------------------------------------------------
# multi-step decay


class DecayResult(NamedTuple):
    slope: Optional[float]
    per_step_bound: Optional[float]
    table: list
    note: str
    subset_estimate: list = []

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "coupling_estimate", "exact_ot", "bound"])
            for row in self.table:
                w.writerow([row[0]] + ["" if v is None else repr(v) for v in row[1:]])


def _decay_block(kernel, metric, x, y, n, n_steps, gen, keep):
    d = x.size
    xs = np.repeat(_rows(x, d), n, axis=0)
    ys = np.repeat(_rows(y, d), n, axis=0)
    sums, ots, sub = [], [], []

    def record():
        v = np.asarray(metric(xs, ys), dtype=float)
        sums.append(float(v.sum()))
        if keep:
            sub.append(float(v[:keep].mean()))
            ots.append(discrete_wasserstein(xs[:keep], ys[:keep], metric))

    record()
    for _ in range(n_steps):
        xs, ys = kernel.step(xs, ys, gen)
        record()
    return sums, ots, sub


def decay_fit(kernel, metric, init_pairs, n_steps, N, seed, threads=None, ot_cap=OT_CAP, block=2048, claimed_rate=None):
    """Evolve N coupled replicas per start pair and fit log E_n against n.

    E_n is the mean of rho(X_n, Y_n), an upper estimate of W_rho(delta_x p^n,
    delta_y p^n). The exact empirical W_rho is recorded on the first
    min(N, ot_cap) replicas of the first pair, together with the coupling
    estimate on those same replicas (subset_estimate), which bounds it.
    """
    if n_steps < 5:
        raise InvalidParameter("n_steps must be at least 5")
    pairs = [(np.asarray(x, dtype=float).ravel(), np.asarray(y, dtype=float).ravel()) for x, y in init_pairs]
    keep = min(N, ot_cap, block)
    tasks = []
    for p, (x, y) in enumerate(pairs):
        done = 0
        while done < N:
            n = min(block, N - done)
            tasks.append((p, x, y, n, p == 0 and done == 0))
            done += n
    streams = substreams(seed, len(tasks))

    def work(i):
        p, x, y, n, first = tasks[i]
        return _decay_block(kernel, metric, x, y, n, n_steps, streams[i], keep if first else 0)

    results = _pmap(work, list(range(len(tasks))), threads)
    tot = np.zeros(n_steps + 1)
    for s, _, _ in results:
        tot += np.asarray(s)
    E = tot / (N * len(pairs))
    ots, sub = results[0][1], results[0][2]
    c = claimed_rate if claimed_rate is not None else metric.meta.get("claimed_rate") if hasattr(metric, "meta") else None
    bound = [float(E[0] * (1 - c) ** k) for k in range(n_steps + 1)] if c is not None else [None] * (n_steps + 1)
    table = [(k, float(E[k]), ots[k] if k < len(ots) else None, bound[k]) for k in range(n_steps + 1)]
    pos = np.nonzero(E > 0)[0]
    if len(pos) < 5 or pos[4] != 4:
        return DecayResult(None, None if c is None else 1 - c, table,
                           "all replicas coalesced within 5 steps; no slope", sub)
    last = pos[-1] if np.all(np.diff(pos) == 1) else pos[np.argmax(np.diff(pos) > 1)]
    ks = np.arange(last + 1)
    slope = float(np.polyfit(ks, np.log(E[: last + 1]), 1)[0])
    return DecayResult(slope, None if c is None else 1 - c, table, "", sub)
