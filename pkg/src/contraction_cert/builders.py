"""Metric constructions from radial rate profiles.

Three builders share one assembly step. Given cells on [0, r2], a decay rate
for phi on each cell and a sup of the fluctuation weight over each cell's dual
window, the contraction rate is

    c = k / ∫_0^{r2} (1/phi) S ds

and g decreases at rate 2 c S / phi (plus M T / phi below r1 with a Lyapunov
part). The integral is exact for the piecewise data, so the returned rate is
valid for the returned distance, not just for an idealised version of it.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidParameter, NoCertificate, ProfileInvalid
from .metric import (ConcaveDistance, Metric, StepEnvelope, Thm1Geometry, Thm3Geometry,
                     _vec, cell_sup, envelope_on_grid, gamma_envelope, positive_drift_extent)
from .numerics import adaptive_simpson, exp_lin_integral, exp_lin_integral_rev

N_KNOTS = 2048


@dataclass(frozen=True)
class LyapunovSpec:
    V: Callable
    lam: float
    C: float
    v_min: Callable


@dataclass
class BuildResult:
    metric: Metric
    rate_c: float
    r1: float
    r2: float
    a: float
    M: float
    theorem: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def distance(self):
        return self.metric.base

    @property
    def binding_term(self):
        return self.diagnostics.get("binding_term")

    def to_json(self, knots_csv_path=None):
        return {"theorem": self.theorem, "a": self.a, "M": self.M, "r1": self.r1,
                "r2": self.r2, "c": self.rate_c, "binding_term": self.binding_term,
                "knots_csv_path": knots_csv_path}

    def write(self, json_path, csv_path):
        self.distance.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.to_json(csv_path), fh, indent=2)


class PhiTable:
    """phi and Phi = ∫ phi for a step decay-rate table; phi is frozen past the last knot."""

    def __init__(self, knots, gamma):
        self.knots = np.asarray(knots, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float)
        dt = np.diff(self.knots)
        self.Gam = np.concatenate([[0.0], np.cumsum(self.gamma * dt)])
        self.phi_k = np.exp(-self.Gam)
        self.Phi_k = np.concatenate([[0.0], np.cumsum(self.phi_k[:-1] * exp_lin_integral(self.gamma, dt))])

    def _loc(self, u):
        u = np.asarray(u, dtype=float)
        k = np.clip(np.searchsorted(self.knots, u, side="right") - 1, 0, len(self.gamma) - 1)
        t = np.clip(u - self.knots[k], 0.0, None)
        return u, k, t

    def phi(self, u):
        u, k, t = self._loc(u)
        inside = self.phi_k[k] * np.exp(-self.gamma[k] * t)
        return np.where(u >= self.knots[-1], self.phi_k[-1], inside)

    def Phi(self, u):
        u, k, t = self._loc(u)
        inside = self.Phi_k[k] + self.phi_k[k] * exp_lin_integral(self.gamma[k], t)
        tail = self.Phi_k[-1] + self.phi_k[-1] * (u - self.knots[-1])
        return np.where(u >= self.knots[-1], tail, np.where(u <= 0, 0.0, inside))

    def log_inv_weights(self, knots, gamma):
        """log ∫_cell 1/phi for cells of a refinement of this table."""
        knots = np.asarray(knots, dtype=float)
        dt = np.diff(knots)
        Gam = np.concatenate([[0.0], np.cumsum(np.asarray(gamma) * dt)])
        return Gam[:-1] + np.log(exp_lin_integral_rev(gamma, dt))


def _extend_gamma(env_knots, env_vals, knots):
    """Step values of an envelope on a grid that refines it (zero past its end)."""
    mid = 0.5 * (knots[:-1] + knots[1:])
    k = np.searchsorted(env_knots, mid, side="right") - 1
    inside = (k >= 0) & (k < len(env_vals))
    return np.where(inside, env_vals[np.clip(k, 0, len(env_vals) - 1)], 0.0)


def _grid(r1_knots, r1, r2, n):
    if r1 <= 0:
        return np.linspace(0.0, r2, n + 1)
    if r2 <= r1:
        return np.concatenate([r1_knots[r1_knots < r2], [r2]])
    tail = np.linspace(r1, r2, n + 1)[1:]
    return np.concatenate([r1_knots, tail])


def _inf_pi(p, lo_frac=1e-6, n=400):
    r = np.unique(np.concatenate([np.geomspace(p.r0 * lo_frac, p.r0, n), np.linspace(0, p.r0, n + 1)[1:]]))
    return float(np.min(p.pi(r)))


def _check_A1(p):
    if p.pi_lb is None:
        raise ProfileInvalid("A1(a): profile has no coalescence lower bound")
    pmin = _inf_pi(p)
    if not pmin > 0:
        raise ProfileInvalid("A1(a): inf of pi_lb on (0, r0] is %g, must be positive" % pmin)
    return pmin


def _check_B1(p):
    r = p.r0 * np.array([1e-8, 1e-6, 1e-4, 1e-2])
    ratio = p.alpha(r) / r
    if not np.all(ratio > 0) or ratio[0] < 1e-3 * ratio[-1]:
        raise ProfileInvalid("B1: alpha_lb(r)/r is not bounded below near 0 "
                             "(values %s at r/r0 = 1e-8..1e-2)" % np.array2string(ratio, precision=3))


def _check_geometry(p, mode):
    if p.geometry.mode != mode:
        raise ProfileInvalid("builder needs %s geometry, profile has %s" % (mode, p.geometry.mode))
    if abs(p.geometry.r0 - p.r0) > 1e-15 * p.r0:
        raise ProfileInvalid("geometry r0 differs from profile r0")


def _far_field_inf(p, table, a, r2, span=1e4, n=400):
    r = r2 * np.geomspace(1.0, span, n)
    return float(np.min(-p.beta(r) / (a + table.Phi(r))))


def _search_r2(p, table, a, r1, weight_fn, factor, cap, tol=1e-10):
    """Smallest r2 > r1 with inf_{r>=r2} -beta/(a+Phi) >= factor / ∫_{r1}^{r2} X.

    X(s) = min(Phi(s)/alpha(s), weight_fn(s)); the min with the dual-window
    weight keeps the far-field step of the argument valid when alpha vanishes
    somewhere on [r1, r2].
    """

    def X(s):
        al = float(p.alpha(np.array([s]))[0])
        direct = float(table.Phi(s)) / al if al > 0 else math.inf
        return min(direct, max(weight_fn(s), 0.0))

    def pred(r2, J):
        if not J > 0:
            return False
        return _far_field_inf(p, table, a, r2) >= factor / J

    lo, Jlo = r1, 0.0
    step = p.r0
    hi = r1 + step
    Jhi = adaptive_simpson(X, lo, hi, tol)
    while not pred(hi, Jhi):
        if hi > cap:
            raise NoCertificate("r2 search exceeded the cap %.3g; the far-field drift "
                                "bound is too weak for a certificate" % cap)
        lo, Jlo = hi, Jhi
        step *= 2.0
        hi = r1 + step
        Jhi = Jlo + adaptive_simpson(X, lo, hi, tol)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        Jmid = Jlo + adaptive_simpson(X, lo, mid, tol)
        if pred(mid, Jmid):
            hi, Jhi = mid, Jmid
        else:
            lo, Jlo = mid, Jmid
    return hi


def _assemble(p, knots, gamma, S, rate_terms, k_frac, a, T=None, M=0.0):
    """Rate and distance from per-cell envelope data."""
    S = np.where(S == -np.inf, 0.0, S)
    if not np.all(np.isfinite(S)):
        bad = knots[:-1][~np.isfinite(S)][0]
        raise ProfileInvalid("A1(b): alpha_lb vanishes on a dual window near s = %.6g" % bad)
    table = PhiTable(knots, gamma)
    logW = table.log_inv_weights(knots, gamma)
    with np.errstate(divide="ignore"):
        logI = float(logsumexp(np.log(S) + logW))
    terms = dict(rate_terms)
    terms["fluctuation"] = k_frac * math.exp(-logI)
    c = min(terms.values())
    if not c > 0 or not math.isfinite(c):
        raise NoCertificate("contraction rate underflows to %r (terms %s)" % (c, terms))
    Q = 2.0 * c * S
    if T is not None:
        Q = Q + M * T
    dist = ConcaveDistance.from_cells(knots, gamma, Q, a)
    binding = min(terms, key=terms.get)
    return dist, c, {"terms": terms, "binding_term": binding, "g_r2": float(dist.g[-1]),
                     "phi_r2": float(dist.phi[-1]), "flags": list(dist.flags)}


def _envelope_part(p, mode, n, cap):
    env, r1 = gamma_envelope(p, mode, n=n, cap_factor=cap / p.r0)
    if r1 > 0:
        k1 = int(np.searchsorted(env.knots, r1))
        return env.knots[: k1 + 1], env.values[:k1], r1
    return np.array([0.0]), np.zeros(0), 0.0


def build_thm1(p, a=None, n=N_KNOTS, cap_factor=1e6, r2=None, gamma_tilde=None):
    """Jump metric for kernels with a positive coalescence floor near the diagonal."""
    _check_geometry(p, "thm1")
    pmin = _check_A1(p)
    if p.beta_over_pi_sup is None:
        raise ProfileInvalid("beta_over_pi_sup is required to set the jump a; "
                             "it needs kernel-level information and is not guessed")
    a_min = p.r0 + 2.0 * max(p.beta_over_pi_sup, 0.0)
    if a is None:
        a = a_min
    elif a < a_min * (1 - 1e-12):
        raise InvalidParameter("a = %g is below the admissible minimum %g" % (a, a_min))
    cap = cap_factor * p.r0
    if gamma_tilde is None:
        env_knots, env_vals, r1 = _envelope_part(p, "thm1", n, cap)
    else:
        env_knots, env_vals, r1 = gamma_tilde
    table = PhiTable(env_knots if r1 > 0 else [0.0, 1.0], env_vals if r1 > 0 else [0.0])

    def weight(u):
        with np.errstate(divide="ignore"):
            return (a + table.Phi(u)) / p.alpha(u)

    def weight_pt(s):
        return float(cell_sup(weight, p.geometry, np.array([s]), np.array([s]))[0])

    if r2 is None:
        r2 = _search_r2(p, table, a, r1, weight_pt, 0.5, cap)
    knots = _grid(env_knots, r1, r2, n)
    gamma = _extend_gamma(env_knots, env_vals, knots) if r1 > 0 else np.zeros(len(knots) - 1)
    S = cell_sup(weight, p.geometry, knots[:-1], knots[1:])
    dist, c, diag = _assemble(p, knots, gamma, S, {"coalescence": 0.5 * pmin}, 0.25, a)
    return BuildResult(Metric(dist), c, r1, float(knots[-1]), a, 0.0, "thm1", diag)


def build_thm3(p, n=N_KNOTS, cap_factor=1e6, r2=None):
    """Continuous metric for kernels without a coalescence floor."""
    _check_geometry(p, "thm3")
    _check_B1(p)
    cap = cap_factor * p.r0
    env_knots, env_vals, r1 = _envelope_part(p, "thm3", n, cap)
    table = PhiTable(env_knots if r1 > 0 else [0.0, 1.0], env_vals if r1 > 0 else [0.0])

    def weight(u):
        with np.errstate(divide="ignore", invalid="ignore"):
            return table.Phi(u) / p.alpha(u)

    def weight_pt(s):
        return float(cell_sup(weight, p.geometry, np.array([s]), np.array([s]))[0])

    if r2 is None:
        r2 = _search_r2(p, table, 0.0, r1, weight_pt, 0.5, cap)
    knots = _grid(env_knots, r1, r2, n)
    gamma = _extend_gamma(env_knots, env_vals, knots) if r1 > 0 else np.zeros(len(knots) - 1)
    S = cell_sup(weight, p.geometry, knots[:-1], knots[1:])
    dist, c, diag = _assemble(p, knots, gamma, S, {}, 0.25, 0.0)
    return BuildResult(Metric(dist), c, r1, float(knots[-1]), 0.0, 0.0, "thm3", diag)


def _lyap_radius(v_min, thr, start):
    """sup{r : v_min(r) < thr}, by doubling then bisection."""
    v = lambda r: float(_vec(v_min, np.array([r]))[0])
    if v(start * 1e-9) >= thr:
        return 0.0
    hi = start
    while v(hi) < thr:
        hi *= 2.0
        if hi > 1e12 * start:
            raise InvalidParameter("v_min never reaches 4C/lambda; A4 fails")
    lo = hi / 2.0 if hi > start else 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if v(mid) < thr:
            lo = mid
        else:
            hi = mid
    return hi


def build_thm2(p, lyap, n=N_KNOTS, cap_factor=1e6):
    """Jump metric plus Lyapunov part, for drifts without far-field contractivity."""
    _check_geometry(p, "thm1")
    if not 0 < lyap.lam < 1:
        raise InvalidParameter("lambda must lie in (0, 1), got %g" % lyap.lam)
    if not lyap.C > 0:
        raise InvalidParameter("C must be positive, got %g" % lyap.C)
    v_min = lyap.v_min if lyap.v_min is not None else p.v_min
    if v_min is None:
        raise ProfileInvalid("build_thm2 needs v_min")
    pmin = _check_A1(p)
    if p.beta_over_pi_sup is None:
        raise ProfileInvalid("beta_over_pi_sup is required to set the jump a")
    lam, C = lyap.lam, lyap.C
    r1 = _lyap_radius(v_min, 4 * C / lam, p.r0)
    if r1 <= 0:
        raise InvalidParameter("v_min exceeds 4C/lambda everywhere; take C larger or drop the Lyapunov part")
    cap = cap_factor * p.r0

    knots_a = np.linspace(0.0, r1, n + 1)
    env_a = envelope_on_grid(p, "thm1", knots_a)
    if not np.all(np.isfinite(env_a.values)):
        raise ProfileInvalid("alpha_lb vanishes where beta_ub > 0 below r1")
    table_a = PhiTable(knots_a, env_a.values)
    with np.errstate(divide="ignore"):
        T = cell_sup(lambda u: 1.0 / p.alpha(u), p.geometry, knots_a[:-1], knots_a[1:])
    T = np.where(T == -np.inf, 0.0, T)
    if not np.all(np.isfinite(T)):
        raise ProfileInvalid("A1(b): alpha_lb vanishes on a dual window below r1")
    logH = float(logsumexp(np.log(T) + table_a.log_inv_weights(knots_a, env_a.values)))
    M = 0.25 * math.exp(-logH)
    a = p.r0 + 2.0 * (max(p.beta_over_pi_sup, 0.0) + M / pmin)

    # far field: r2 = r1 ∨ sup{r : v_min < 16C/(lambda M) beta phi}
    Kp = 16.0 * C / (lam * M)
    rs = np.geomspace(r1, cap, 4000)
    viol = _vec(v_min, rs) < Kp * np.maximum(p.beta(rs), 0.0)
    if viol[-1]:
        raise ProfileInvalid("A4(b): v_min does not dominate the positive drift up to r = %.3g" % cap)
    idx = np.nonzero(viol)[0]
    r_scan = float(rs[idx[-1] + 1]) if len(idx) else r1
    if r_scan > r1:
        knots_b = np.linspace(r1, r_scan, n + 1)
        env_b = envelope_on_grid(p, "thm1", knots_b)
        if not np.all(np.isfinite(env_b.values)):
            raise ProfileInvalid("alpha_lb vanishes where beta_ub > 0 beyond r1")
        knots = np.concatenate([knots_a, knots_b[1:]])
        gamma = np.concatenate([env_a.values, env_b.values])
        table = PhiTable(knots, gamma)
        fine = np.linspace(r1, r_scan, 16 * n + 1)
        bad = _vec(v_min, fine) < Kp * p.beta(fine) * table.phi(fine)
        bidx = np.nonzero(bad)[0]
        r2 = float(fine[min(bidx[-1] + 1, len(fine) - 1)]) if len(bidx) else r1
        if r2 > r1:
            cut = int(np.searchsorted(knots, r2, side="left"))
            knots = np.concatenate([knots[:cut], [r2]])
            gamma = gamma[: len(knots) - 1]
        else:
            knots, gamma = knots_a, env_a.values
    else:
        knots, gamma, r2 = knots_a, env_a.values, r1
    table = PhiTable(knots, gamma)

    def weight(u):
        with np.errstate(divide="ignore"):
            return (a + table.Phi(u)) / p.alpha(u)

    S = cell_sup(weight, p.geometry, knots[:-1], knots[1:])
    Tfull = np.concatenate([T, np.zeros(len(knots) - 1 - len(T))])
    rr = r2 * np.geomspace(1.0, 1e6, 600)
    far = lam * M / (16 * C) * float(np.min(_vec(v_min, rr) / table.Phi(rr)))
    terms = {"coalescence": 0.5 * pmin, "lyapunov_rate": lam / 4.0, "far_field": far}
    dist, c, diag = _assemble(p, knots, gamma, S, terms, 0.125, a, T=Tfull, M=M)
    metric = Metric(dist, lyapunov_weight=M / (2 * C), lyapunov_fn=lyap.V)
    return BuildResult(metric, c, r1, float(knots[-1]), a, M, "thm2", diag)


def key_inequality_gap(p, dist, c, r, m=33):
    """Largest (lhs + c f(r)) / f(r) over the radii r, where lhs is the drift plus
    fluctuation bound of the one-step change in f; nonpositive means the
    differential inequality behind the certificate holds at those radii.

    Below r0 a jump metric uses the coalescence term -a pi instead of the
    fluctuation term.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    fr = dist(r)
    fp = dist.deriv(r)
    be = p.beta(r)
    al = p.alpha(r)
    g = p.geometry
    sup2 = np.empty_like(r)
    for i, ri in enumerate(r):
        lo, hi = g.interval(ri)
        pts = np.linspace(lo, hi, m)[1:-1] if hi > lo else np.array([ri])
        sup2[i] = float(np.max(dist.deriv2(pts)))
    lhs = be * fp + 0.5 * al * sup2
    if dist.a > 0:
        near = r <= p.r0
        lhs = np.where(near, np.maximum(be, 0.0) * fp - dist.a * p.pi(r), lhs)
    return float(np.max((lhs + c * fr) / fr))
