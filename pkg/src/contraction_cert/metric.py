"""Designed distance functions, the metrics built from them, and radial rate profiles.

A ConcaveDistance is stored cell by cell. On each cell [s_k, s_{k+1}) the
weight phi decays at a constant rate gamma_k and the derivative of f is

    f'(s_k + t) = P_k exp(-gamma_k t) - Q_k (1 - exp(-gamma_k t)) / gamma_k,

which is exactly phi * g when phi' = -gamma phi and g' = -Q / phi on the cell.
Everything (phi, g, f and its first two derivatives) is then available in
closed form, so the differential inequalities the builders rely on hold
exactly rather than up to an interpolation error.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BudgetViolation, ConfigError, ProfileInvalid
from .numerics import exp_lin_integral, exp_lin_integral_rev, exp_lin_second


# ---------------------------------------------------------------------------
# interval geometries


class Thm1Geometry:
    """Fluctuation window I_r = ((r - eps)^+, r); dual Î_s = (s, s + eps) ∩ (r0, ∞)."""

    mode = "thm1"

    def __init__(self, r0, eps=None):
        self.r0 = float(r0)
        self.eps = float(r0 if eps is None else eps)
        if self.r0 <= 0 or self.eps <= 0:
            raise ProfileInvalid("r0 and eps must be positive")

    def interval(self, r):
        return max(r - self.eps, 0.0), r

    def clip(self, dR, r):
        return -np.minimum(np.maximum(-dR, 0.0), self.eps)

    def alpha_cap(self, r):
        return self.eps ** 2

    def windows(self, s_lo, s_hi):
        s_lo = np.asarray(s_lo, dtype=float)
        s_hi = np.asarray(s_hi, dtype=float)
        return [(np.maximum(s_lo, self.r0), s_hi + self.eps)]

    def reach(self):
        return 0.0

    def to_dict(self):
        return {"mode": "thm1", "r0": self.r0, "eps": self.eps}


class Thm3Geometry:
    """I_r = (r - l(r), r + u(r)) with u = r0 below r0 and 0 above,
    l = ell above r0 and 0 below (the Euler choice)."""

    mode = "thm3"

    def __init__(self, r0, ell=None):
        self.r0 = float(r0)
        self.ell = float(r0 if ell is None else ell)
        if self.r0 <= 0 or self.ell < 0:
            raise ProfileInvalid("r0 must be positive and ell nonnegative")
        if self.ell > self.r0:
            raise ProfileInvalid("ell must not exceed r0 (I_r must stay in (0, inf))")

    def u(self, r):
        return np.where(np.asarray(r) < self.r0, self.r0, 0.0)

    def ell_of(self, r):
        return np.where(np.asarray(r) < self.r0, 0.0, self.ell)

    def interval(self, r):
        return r - float(self.ell_of(r)), r + float(self.u(r))

    def clip(self, dR, r):
        return np.maximum(np.minimum(dR, self.u(r)), -self.ell_of(r))

    def alpha_cap(self, r):
        return np.maximum(self.ell_of(r), self.u(r)) ** 2

    def windows(self, s_lo, s_hi):
        s_lo = np.asarray(s_lo, dtype=float)
        s_hi = np.asarray(s_hi, dtype=float)
        below = (np.maximum(s_lo - self.r0, 0.0), np.minimum(s_hi, self.r0))
        above = (np.maximum(s_lo, self.r0), s_hi + self.ell)
        return [below, above]

    def reach(self):
        return self.r0

    def to_dict(self):
        return {"mode": "thm3", "r0": self.r0, "ell": self.ell}


def _vec(fn, r):
    r = np.asarray(r, dtype=float)
    try:
        out = np.asarray(fn(r), dtype=float)
        if out.shape == r.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.vectorize(lambda v: float(fn(float(v))), otypes=[float])(r)


@dataclass(frozen=True)
class RateProfile:
    r0: float
    geometry: object
    alpha_lb: Callable
    beta_ub: Callable
    pi_lb: Optional[Callable] = None
    beta_over_pi_sup: Optional[float] = None
    v_min: Optional[Callable] = None
    label: str = ""

    def alpha(self, r):
        return _vec(self.alpha_lb, r)

    def beta(self, r):
        return _vec(self.beta_ub, r)

    def pi(self, r):
        if self.pi_lb is None:
            raise ProfileInvalid("profile has no coalescence lower bound pi_lb")
        return _vec(self.pi_lb, r)

    def gamma_bar(self, r):
        """2 beta / alpha, with +inf where alpha vanishes under a positive drift."""
        al = self.alpha(r)
        be = self.beta(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = 2.0 * be / al
        g = np.where(al > 0, g, np.where(be > 0, np.inf, -np.inf))
        return g


# ---------------------------------------------------------------------------
# sup over dual intervals


def window_sup(fn, lo, hi, m=9, nudge=1e-9):
    """Sup of fn over open windows (lo_i, hi_i), by a grid scan plus one refinement.

    Empty windows give -inf. fn must accept an array of radii.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    out = np.full(lo.shape, -np.inf)
    ok = hi > lo
    if not ok.any():
        return out
    a, b = lo[ok], hi[ok]
    tau = np.linspace(nudge, 1.0 - nudge, m)
    pts = a[:, None] + (b - a)[:, None] * tau[None, :]
    vals = _vec(fn, pts.ravel()).reshape(pts.shape)
    vals = np.where(np.isnan(vals), np.inf, vals)
    j = np.argmax(vals, axis=1)
    jl = np.clip(j - 1, 0, m - 1)
    jr = np.clip(j + 1, 0, m - 1)
    fine = np.linspace(0.0, 1.0, m)
    t2 = tau[jl][:, None] + (tau[jr] - tau[jl])[:, None] * fine[None, :]
    pts2 = a[:, None] + (b - a)[:, None] * t2
    vals2 = _vec(fn, pts2.ravel()).reshape(pts2.shape)
    vals2 = np.where(np.isnan(vals2), np.inf, vals2)
    out[ok] = np.maximum(vals.max(axis=1), vals2.max(axis=1))
    return out


def cell_sup(fn, geometry, s_lo, s_hi, m=9):
    """Sup of fn over the union of dual intervals Î_s for s in each cell [s_lo, s_hi]."""
    best = np.full(np.shape(s_lo), -np.inf)
    for lo, hi in geometry.windows(s_lo, s_hi):
        best = np.maximum(best, window_sup(fn, lo, hi, m=m))
    return best


def dual_sup(fn, s, geometry):
    """Sup of fn over the dual interval Î_s; -inf when Î_s is empty."""
    return float(cell_sup(fn, geometry, np.array([s]), np.array([s]))[0])


# ---------------------------------------------------------------------------
# envelope of gamma-bar


@dataclass(frozen=True)
class StepEnvelope:
    """Piecewise-constant envelope: value[k] on [knots[k], knots[k+1])."""

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        k = np.searchsorted(self.knots, r, side="right") - 1
        inside = (k >= 0) & (k < len(self.values))
        return np.where(inside, self.values[np.clip(k, 0, len(self.values) - 1)], 0.0)

    @property
    def r1(self):
        pos = np.nonzero(self.values > 0)[0]
        return 0.0 if len(pos) == 0 else float(self.knots[pos[-1] + 1])


def positive_drift_extent(p, cap):
    """Upper bound on sup{r : beta(r) > 0} from a dense logarithmic scan up to cap."""
    r = np.unique(np.concatenate([np.geomspace(p.r0 * 1e-8, cap, 6000),
                                  np.linspace(0.0, min(cap, 50 * p.r0), 2001)[1:]]))
    be = p.beta(r)
    pos = np.nonzero(be > 0)[0]
    if len(pos) == 0:
        return 0.0
    i = pos[-1]
    if i == len(r) - 1:
        raise ProfileInvalid("beta_ub stays positive up to the tabulation cap; "
                             "the far-field drift condition fails on the tabulated range")
    return float(r[i + 1])


def envelope_on_grid(p, mode, knots, m=9):
    """Minimal step envelope of gamma-bar on the given cells."""
    knots = np.asarray(knots, dtype=float)
    s_lo, s_hi = knots[:-1], knots[1:]
    sup = cell_sup(p.gamma_bar, p.geometry, s_lo, s_hi, m=m)
    if mode == "thm3":
        sup = np.where(s_lo < 2 * p.r0, 4.0 * sup, sup)
    vals = np.maximum(sup, 0.0)
    if mode == "thm3":
        width = np.clip(np.minimum(s_hi, 2 * p.r0) - s_lo, 0.0, None)
        with np.errstate(invalid="ignore"):
            budget = float(np.sum(np.where(width > 0, vals * width, 0.0)))
        if not budget <= np.log(2.0):
            raise BudgetViolation(
                "integral of the envelope over [0, 2 r0] is %.6g > log 2; "
                "the drift is too expansive at scale r0 = %g" % (budget, p.r0))
    return StepEnvelope(knots, vals)


def gamma_envelope(p, mode=None, n=2048, cap_factor=1e6):
    """Minimal tabulated envelope and r1 = sup{gamma > 0}."""
    mode = mode or p.geometry.mode
    if mode != p.geometry.mode:
        raise ProfileInvalid("profile geometry is %s, not %s" % (p.geometry.mode, mode))
    extent = positive_drift_extent(p, cap_factor * p.r0)
    if extent == 0.0:
        knots = np.array([0.0, p.r0])
        return StepEnvelope(knots, np.zeros(1)), 0.0
    top = extent + p.geometry.reach()
    env = envelope_on_grid(p, mode, np.linspace(0.0, top, n + 1))
    if not np.all(np.isfinite(env.values)):
        raise ProfileInvalid("alpha_lb vanishes where beta_ub > 0; the envelope is infinite")
    return env, env.r1


# ---------------------------------------------------------------------------
# the designed distance


class ConcaveDistance:
    """f(r) = a 1{r>0} + ∫_0^r phi(s ∧ r2) g(s ∧ r2) ds, stored on cells."""

    def __init__(self, s, gamma, P, Q, f_cont, a):
        self.s = np.asarray(s, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float)
        self.P = np.asarray(P, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        self._fc = np.asarray(f_cont, dtype=float)
        self.a = float(a)
        dt = np.diff(self.s)
        gam = np.concatenate([[0.0], np.cumsum(self.gamma * dt)])
        self.phi = np.exp(-gam)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.concatenate([self.P / self.phi[:-1], [0.0]])
        last = self.P[-1] * np.exp(-self.gamma[-1] * dt[-1]) - self.Q[-1] * exp_lin_integral(self.gamma[-1], dt[-1])
        self.tail_slope = float(last)
        g[-1] = last / self.phi[-1] if self.phi[-1] > 0 else np.nan
        self.g = g
        pos = np.nonzero(self.gamma > 0)[0]
        self.r1 = 0.0 if len(pos) == 0 else float(self.s[pos[-1] + 1])
        self.r2 = float(self.s[-1])
        self.flags = []
        if self.phi[-1] < 1e-300 or self.tail_slope <= 0:
            self.flags.append("underflow: tail slope %.3g is not representable" % self.tail_slope)

    # construction -------------------------------------------------------

    @classmethod
    def from_cells(cls, s, gamma, Q, a=0.0):
        """Assemble from per-cell decay rates gamma_k and g-decrements Q_k (g(0) = 1)."""
        s = np.asarray(s, dtype=float)
        gamma = np.asarray(gamma, dtype=float)
        Q = np.asarray(Q, dtype=float)
        dt = np.diff(s)
        Gam = np.concatenate([[0.0], np.cumsum(gamma * dt)])
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            logW = Gam[:-1] + np.log(exp_lin_integral_rev(gamma, dt))
            dec = np.where(Q > 0, np.exp(np.log(np.where(Q > 0, Q, 1.0)) + logW), 0.0)
        g = np.concatenate([[1.0], 1.0 - np.cumsum(dec)])
        phi = np.exp(-Gam)
        P = phi[:-1] * g[:-1]
        inc = P * exp_lin_integral(gamma, dt) - Q * exp_lin_second(gamma, dt)
        f_cont = np.concatenate([[0.0], np.cumsum(inc)])
        return cls(s, gamma, P, Q, f_cont, a)

    @classmethod
    def identity(cls, r2=1.0, a=0.0):
        return cls.from_cells([0.0, r2], [0.0], [0.0], a)

    @classmethod
    def from_knots(cls, s, phi, g, f):
        """Rebuild the cell representation from a (s, phi, g, f) knot table."""
        s, phi, g, f = (np.asarray(v, dtype=float) for v in (s, phi, g, f))
        dt = np.diff(s)
        with np.errstate(divide="ignore"):
            gamma = np.maximum(np.log(phi[:-1] / phi[1:]) / dt, 0.0)
        P = phi[:-1] * g[:-1]
        E = exp_lin_integral(gamma, dt)
        Q = (P * np.exp(-gamma * dt) - phi[1:] * g[1:]) / E
        Q = np.maximum(Q, 0.0)
        first = P[0] * E[0] - Q[0] * exp_lin_second(gamma[0], dt[0])
        a = max(float(f[1] - first), 0.0) if len(f) > 1 else 0.0
        f_cont = f.copy()
        f_cont[1:] -= a
        f_cont[0] = 0.0
        return cls(s, gamma, P, Q, f_cont, a)

    def with_jump(self, extra):
        return ConcaveDistance(self.s, self.gamma, self.P, self.Q, self._fc, self.a + float(extra))

    # evaluation ---------------------------------------------------------

    def _locate(self, r):
        r = np.asarray(r, dtype=float)
        k = np.clip(np.searchsorted(self.s, r, side="right") - 1, 0, len(self.gamma) - 1)
        return r, k, r - self.s[k]

    def continuous(self, r):
        """f without its jump at zero."""
        r, k, t = self._locate(r)
        gk = self.gamma[k]
        inside = self._fc[k] + self.P[k] * exp_lin_integral(gk, t) - self.Q[k] * exp_lin_second(gk, t)
        tail = self._fc[-1] + self.tail_slope * (r - self.r2)
        return np.where(r >= self.r2, tail, np.where(r <= 0, 0.0, inside))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = self.continuous(r) + self.a * (r > 0)
        return out if out.ndim else float(out)

    def deriv(self, r):
        """Right derivative f'(r)."""
        r, k, t = self._locate(r)
        gk = self.gamma[k]
        inside = self.P[k] * np.exp(-gk * t) - self.Q[k] * exp_lin_integral(gk, t)
        return np.where(r >= self.r2, self.tail_slope, inside)

    def deriv2(self, r):
        """Right second derivative f''(r)."""
        r, k, t = self._locate(r)
        gk = self.gamma[k]
        inside = -(gk * self.P[k] + self.Q[k]) * np.exp(-gk * t)
        return np.where(r >= self.r2, 0.0, inside)

    def phi_at(self, r):
        r, k, t = self._locate(np.minimum(r, self.r2))
        return self.phi[k] * np.exp(-self.gamma[k] * t)

    # knot table ---------------------------------------------------------

    @property
    def f(self):
        out = self._fc.copy()
        out[1:] += self.a
        return out

    @property
    def knots(self):
        return np.column_stack([self.s, self.phi, self.g, self.f])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("s,phi,g,f\n")
            for row in self.knots:
                fh.write(",".join("%.17g" % v for v in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.from_knots(data[:, 0], data[:, 1], data[:, 2], data[:, 3])

    def check(self, tol=1e-12):
        """List of violated invariants (empty when the distance is valid)."""
        bad = []
        fp = self.phi * self.g
        if self._fc[0] != 0.0:
            bad.append("f(0) != 0")
        if np.any(np.diff(fp) > tol * np.maximum(fp[:-1], 1e-300)):
            bad.append("f' increases between knots")
        if np.any(np.diff(self.f) <= 0):
            bad.append("f not strictly increasing")
        if np.any(self.g < 0.5 - tol) or np.any(self.g > 1 + tol):
            bad.append("g outside [1/2, 1]")
        if np.any(self.phi <= 0) or np.any(self.phi > 1 + tol):
            bad.append("phi outside (0, 1]")
        if np.any(np.diff(self.phi) > 0):
            bad.append("phi increases")
        k1 = np.searchsorted(self.s, self.r1)
        if np.any(self.phi[k1:] != self.phi[k1]):
            bad.append("phi not constant on [r1, r2]")
        ph = self.phi[-1]
        if not (ph / 2 * (1 - tol) <= self.tail_slope <= ph * (1 + tol)):
            bad.append("tail slope outside [phi(r2)/2, phi(r2)]")
        return bad

    def __repr__(self):
        return "ConcaveDistance(a=%g, r1=%g, r2=%g, knots=%d)" % (self.a, self.r1, self.r2, len(self.s))


def eval_distance(f, r):
    return f(r)


# ---------------------------------------------------------------------------
# metrics on the state space


def euclid(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 0 and y.ndim == 0:
        return abs(float(x - y))
    return np.sqrt(np.sum(np.square(x - y), axis=-1))


@dataclass(frozen=True)
class Metric:
    base: ConcaveDistance
    lyapunov_weight: float = 0.0
    lyapunov_fn: Optional[Callable] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.lyapunov_weight < 0:
            raise ConfigError("lyapunov weight must be nonnegative")
        if self.lyapunov_weight > 0 and self.lyapunov_fn is None:
            raise ConfigError("lyapunov weight > 0 needs a Lyapunov function V")

    def __call__(self, x, y):
        r = euclid(x, y)
        out = np.asarray(self.base(r), dtype=float)
        if self.lyapunov_weight > 0:
            lv = np.asarray(self.lyapunov_fn(x), dtype=float) + np.asarray(self.lyapunov_fn(y), dtype=float)
            out = out + self.lyapunov_weight * lv * (np.asarray(r) > 0)
        return out if out.ndim else float(out)


def eval_rho(m, x, y):
    return m(x, y)
