"""Coupled Euler steps, the exact one-dimensional law of the coupled distance,
radial profiles for the Euler chain and the closed-form Euler rates."""
import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate
from scipy.special import erfc, erfcx

from .builders import N_KNOTS, LyapunovSpec, _assemble, build_thm1, build_thm3
from .errors import InvalidParameter, NoCertificate, StepSizeError
from .kernels import clipped_moment, coupled_gauss_step
from .metric import ConcaveDistance, Metric, RateProfile, Thm1Geometry, Thm3Geometry, _vec, cell_sup
from .numerics import SQRT2, adaptive_simpson, norm_pdf
from .rng import as_generator

PAPER_CONSTANTS = {"c0": 0.007, "p0": 0.15, "ctilde0": 0.0005}


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class EulerModel:
    drift: Callable
    d: int
    J: float
    K: float
    R_out: float
    L: float
    h: float
    noise_var: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.h <= 0 or self.L <= 0 or self.K <= 0 or self.R_out <= 0 or self.d < 1:
            raise InvalidParameter("h, L, K, R_out must be positive and d >= 1")
        if self.L < self.K * (1 - 1e-12):
            raise InvalidParameter("L = %g < K = %g is impossible under C2 and C3" % (self.L, self.K))
        if self.J > self.L * (1 + 1e-12):
            raise InvalidParameter("J = %g exceeds L = %g" % (self.J, self.L))

    @property
    def var(self):
        return self.h if self.noise_var is None else self.noise_var

    @property
    def sd(self):
        return math.sqrt(self.var)

    @property
    def Lambda(self):
        return min(self.L, self.J + self.L ** 2 * self.h / 2)

    def advance(self, x):
        return x + self.h * self.drift(x)

    def spot_check(self, rng=0, n=4000, tol=1e-9):
        """Sampled violations of the declared one-sided Lipschitz, far-field and Lipschitz bounds."""
        gen = as_generator(rng)
        scales = np.array([0.1, 1.0, 10.0]) * max(self.R_out, 1.0)
        bad = []
        for s in scales:
            x = gen.normal(0.0, s, (n, self.d))
            dirs = gen.normal(size=(n, self.d))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            rad = self.R_out * np.exp(gen.uniform(np.log(1e-3), np.log(20.0), n))
            y = x + dirs * rad[:, None]
            db = self.drift(x) - self.drift(y)
            dx = x - y
            r2 = np.einsum("ij,ij->i", dx, dx)
            inner = np.einsum("ij,ij->i", dx, db)
            if np.any(inner > self.J * r2 + tol * (1 + r2)):
                bad.append("one-sided Lipschitz bound J = %g" % self.J)
            far = r2 >= self.R_out ** 2
            if np.any(inner[far] > -self.K * r2[far] + tol * (1 + r2[far])):
                bad.append("contractivity K = %g outside R_out = %g" % (self.K, self.R_out))
            if np.any(np.sqrt(np.einsum("ij,ij->i", db, db)) > self.L * np.sqrt(r2) + tol * (1 + np.sqrt(r2))):
                bad.append("Lipschitz bound L = %g" % self.L)
        return sorted(set(bad))

    def validate(self, rng=0):
        bad = self.spot_check(rng)
        if bad:
            raise InvalidParameter("declared constants fail on sampled pairs: " + "; ".join(bad))
        return self


def ou_model(h, k=1.0, d=1, R_out=1.0):
    return EulerModel(lambda x: -k * x, d, J=-k, K=k, R_out=R_out, L=k, h=h, name="ou")


def tanh_model(h, amp, slope, d=1, K=0.5):
    """b(x) = -x + amp tanh(slope x) coordinatewise.

    (x-y).(b(x)-b(y)) <= -r^2 + 2 amp sqrt(d) r, which is <= -K r^2 once
    r >= 2 amp sqrt(d) / (1 - K).
    """
    if not 0 < K < 1:
        raise InvalidParameter("K must lie in (0, 1)")
    R = 2 * amp * math.sqrt(d) / (1 - K)
    drift = lambda x: -x + amp * np.tanh(slope * x)
    return EulerModel(drift, d, J=amp * slope - 1, K=K, R_out=R, L=1 + amp * slope, h=h, name="tanh_perturbed")


def dissipative_model(h, kappa=1.0, beta=1.0, d=1):
    """b(x) = -kappa x + beta x / (1 + |x|^2): <b(x), x> <= beta - kappa |x|^2."""
    drift = lambda x: -kappa * x + beta * x / (1.0 + np.sum(x * x, axis=-1, keepdims=True))
    return EulerModel(drift, d, J=beta - kappa, K=kappa / 2, R_out=2 * beta / kappa,
                      L=kappa + beta, h=h, name="dissipative_quadratic")


def tabulated_model(h, path, K, R_out):
    """1-D drift from a CSV of (x, b) samples, linearly interpolated; J and L from the data."""
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    try:
        data = np.array([[float(v) for v in r[:2]] for r in rows])
    except ValueError:
        data = np.array([[float(v) for v in r[:2]] for r in rows[1:]])
    order = np.argsort(data[:, 0])
    xs, bs = data[order, 0], data[order, 1]
    slopes = np.diff(bs) / np.diff(xs)
    J, L = float(slopes.max()), float(np.abs(slopes).max())

    def drift(x):
        return np.interp(x, xs, bs, left=bs[0] + slopes[0] * 0, right=bs[-1])

    return EulerModel(drift, 1, J=J, K=K, R_out=R_out, L=max(L, K), h=h, name="tabulated")


# ---------------------------------------------------------------------------
# coupled step


@dataclass(frozen=True)
class StepOutcome:
    x_next: np.ndarray
    y_next: np.ndarray
    coalesced: bool
    r: float
    r_hat: float
    r_next: float


class EulerCoupling:
    """Batch coupled kernel: x, y of shape (n, d)."""

    def __init__(self, model):
        self.model = model

    def step(self, x, y, gen):
        m = self.model
        Z = gen.standard_normal(x.shape)
        U = gen.random(x.shape[0])
        xn, yn, _ = coupled_gauss_step(m.advance(x), m.advance(y), Z, U, m.sd)
        return xn, yn


def coupled_step(m, x, y, rng):
    gen = as_generator(rng)
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    y = np.atleast_1d(np.asarray(y, dtype=float)).reshape(1, -1)
    xh, yh = m.advance(x), m.advance(y)
    Z = gen.standard_normal(x.shape)
    U = gen.random(1)
    xn, yn, coal = coupled_gauss_step(xh, yh, Z, U, m.sd)
    return StepOutcome(xn[0], yn[0], bool(coal[0]), float(np.linalg.norm(x - y)),
                       float(np.linalg.norm(xh - yh)), float(np.linalg.norm(xn - yn)))


# ---------------------------------------------------------------------------
# exact one-dimensional law of the coupled distance


@dataclass(frozen=True)
class OneStepLaw:
    r_hat: float
    h: float

    @property
    def coalesce_prob(self):
        return float(erfc(self.r_hat / (2.0 * math.sqrt(2.0 * self.h))))

    def reflected_density(self, t):
        """Density of t on the reflected branch, where R' = r_hat - 2t (t < r_hat/2)."""
        t = np.asarray(t, dtype=float)
        h, rh = self.h, self.r_hat
        dens = np.exp(-t * t / (2 * h)) / math.sqrt(2 * math.pi * h) * (-np.expm1((rh * t - 0.5 * rh * rh) / h))
        return np.where(t < rh / 2, np.maximum(dens, 0.0), 0.0)

    def expect(self, fn, tol=1e-10):
        """E[fn(R')]: atom at 0 plus the reflected branch, tails cut at 8.5 sd."""
        sd = math.sqrt(self.h)
        kap = self.r_hat / sd
        hi = min(0.5 * kap, 8.5)
        val = float(fn(0.0)) * self.coalesce_prob
        if hi <= -8.5 or kap == 0.0:
            return val

        def integrand(w):
            return float(fn(self.r_hat - 2 * sd * w)) * math.exp(-0.5 * w * w) / math.sqrt(2 * math.pi) \
                * (-math.expm1(kap * w - 0.5 * kap * kap))

        pts = [p for p in (-4.0, 0.0, 4.0) if -8.5 < p < hi]
        part, _ = integrate.quad(integrand, -8.5, hi, points=pts or None, limit=400,
                                 epsabs=tol * 1e-3, epsrel=1e-13)
        return val + part

    def total_mass(self):
        return self.expect(lambda r: 1.0)


def onestep_law_1d(r_hat, h):
    if r_hat < 0 or h <= 0:
        raise InvalidParameter("need r_hat >= 0 and h > 0")
    return OneStepLaw(float(r_hat), float(h))


# ---------------------------------------------------------------------------
# universal constants


@dataclass(frozen=True)
class UniversalConstants:
    c0: float
    c0_paper: float
    p0: float
    p0_paper: float
    ctilde0: float
    ctilde0_paper: float

    def as_dict(self):
        return dict(self.__dict__)


def universal_constants(tol=1e-12):
    phi = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
    i1 = adaptive_simpson(lambda u: u * u * -math.expm1(u - 0.5) * phi(u), 0.0, 0.5, tol)
    i2 = -math.expm1(-1.0) * adaptive_simpson(lambda u: u ** 3 * phi(u), 0.0, 0.5, tol)
    c0 = 4.0 * min(i1, i2)
    p0 = 0.5 * float(erfc(1.0 / SQRT2))
    ct0 = adaptive_simpson(lambda u: -math.expm1(u - 0.5) * phi(u), 0.25, 0.375, tol) / 16.0
    return UniversalConstants(c0, PAPER_CONSTANTS["c0"], p0, PAPER_CONSTANTS["p0"],
                              ct0, PAPER_CONSTANTS["ctilde0"])


def _constants(which):
    if which == "paper":
        return dict(PAPER_CONSTANTS)
    if which == "quadrature":
        u = universal_constants()
        return {"c0": u.c0, "p0": u.p0, "ctilde0": u.ctilde0}
    if isinstance(which, dict):
        return dict(which)
    raise InvalidParameter("constants must be 'paper', 'quadrature' or a dict")


# ---------------------------------------------------------------------------
# radial profiles of the Euler chain


def rhat_envelope(m, r):
    """Range of |xhat - yhat| compatible with |x - y| = r under C1-C3."""
    r = np.asarray(r, dtype=float)
    h, L = m.h, m.L
    lo = r * max(1.0 - h * L, 0.0)
    up_near = r * math.sqrt(max(1.0 + 2 * h * m.J + h * h * L * L, 0.0))
    up_far = r * math.sqrt(max(1.0 - 2 * h * m.K + h * h * L * L, 0.0))
    up = np.where(r < m.R_out, up_near, np.minimum(up_near, up_far))
    return lo, np.maximum(up, lo)


def _paper_beta(m):
    lam, h, R, K, L = m.Lambda, m.h, m.R_out, m.K, m.L
    return lambda r: np.where(np.asarray(r) < R, lam * h * np.asarray(r), -(K - L * L * h / 2) * h * np.asarray(r))


def lemma6_profile(m, mode="paper", geometry="thm1", chain="full", constants="paper", n_rhat=7):
    """Radial bounds for the Euler chain.

    chain="full" bounds the moments of R' - r; chain="hat" bounds those of
    R' - rhat (used in the contractive case, where rhat <= r).
    """
    h, sd = m.h, m.sd
    k = _constants(constants)
    geom = Thm1Geometry(sd, sd) if geometry == "thm1" else Thm3Geometry(sd, sd)
    if mode == "paper":
        if m.h > 1.0 / m.L:
            raise StepSizeError("paper-constant profile needs h <= 1/L = %g" % (1.0 / m.L))
        if chain == "hat":
            c0, p0 = k["c0"], k["p0"]
            alpha = lambda r: c0 * np.minimum(r, sd) * sd
            pi = lambda r: p0 * (np.asarray(r) <= 2 * sd)
            return RateProfile(sd, geom, alpha, lambda r: np.zeros_like(np.asarray(r, dtype=float)),
                               pi, 0.0, label="lemma6-paper-hat")
        ct0, p0 = k["ctilde0"], k["p0"]
        top = 1.0 / (4 * m.L * sd)
        alpha = lambda r: ct0 * h * ((np.asarray(r) >= sd) & (np.asarray(r) <= top))
        pi = lambda r: p0 * (np.asarray(r) <= sd)
        bps = max(m.Lambda, 0.0) * h * sd / p0
        return RateProfile(sd, geom, alpha, _paper_beta(m), pi, bps, label="lemma6-paper")
    if mode != "sharpened":
        raise InvalidParameter("mode must be 'paper' or 'sharpened'")
    if m.h * m.L >= 1:
        raise StepSizeError("sharpened profile needs h L < 1")
    taus = np.linspace(0.0, 1.0, n_rhat)
    wpar = geom.eps if geometry == "thm1" else geom.ell

    def alpha(r):
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        if chain == "hat":
            out = clipped_moment(flat, flat, sd, geometry, sd, wpar)
            return out.reshape(r.shape)
        lo, up = rhat_envelope(m, flat)
        rh = lo[:, None] + (up - lo)[:, None] * taus[None, :]
        vals = clipped_moment(np.repeat(flat, n_rhat), rh.ravel(), sd, geometry, sd, wpar)
        return vals.reshape(len(flat), n_rhat).min(axis=1).reshape(r.shape)

    if chain == "hat":
        beta = lambda r: np.zeros_like(np.asarray(r, dtype=float))
        pi = lambda r: erfc(np.asarray(r, dtype=float) / (2 * SQRT2 * sd))
        return RateProfile(sd, geom, alpha, beta, pi, 0.0, label="lemma6-sharp-hat")

    def beta(r):
        return rhat_envelope(m, r)[1] - np.asarray(r, dtype=float)

    def pi(r):
        return erfc(rhat_envelope(m, r)[1] / (2 * SQRT2 * sd))

    pi_r0 = float(pi(np.array([sd]))[0])
    bps = max(float(beta(np.array([sd]))[0]), 0.0) / pi_r0
    return RateProfile(sd, geom, alpha, beta, pi, bps, label="lemma6-sharp")


# ---------------------------------------------------------------------------
# closed-form rates


class EulerRate(NamedTuple):
    metric: Metric
    rate: float
    h0: float


class EulerRate8(NamedTuple):
    metric: Metric
    c2: float
    h0: float
    q: float
    r1: float


class EulerRate8b(NamedTuple):
    metric: Metric
    c2_a: float
    h0: float
    M: float


def _with_meta(metric, **meta):
    return Metric(metric.base, metric.lyapunov_weight, metric.lyapunov_fn, dict(meta))


def check_contractive(m, rng=0, n=4000):
    """Sampled check that x -> x + h b(x) does not expand distances."""
    gen = as_generator(rng)
    for s in (0.1, 1.0, 10.0):
        x = gen.normal(0, s * m.R_out, (n, m.d))
        y = x + gen.normal(0, s * m.R_out, (n, m.d))
        r = np.linalg.norm(x - y, axis=1)
        rh = np.linalg.norm(m.advance(x) - m.advance(y), axis=1)
        if np.any(rh > r * (1 + 1e-12) + 1e-15):
            return False
    return True


def c1_formula(K, R, h, a, c0, p0):
    sh = math.sqrt(h)
    if a == 0:
        return 0.25 * min(K, 2 * c0 / (R * R + 2 * sh * R + 12 * h))
    return 0.25 * min(K / (1 + a / R), 2 * c0 / (R * R + 2 * (a + sh) * R), 2 * p0 / h)


def rate_thm7(m, a=0.0, constants="paper", n=N_KNOTS):
    """Contractive case. Returns the metric rho_a, c1(a) and h0; the per-step rate is c1(a) h."""
    sh = math.sqrt(m.h)
    if 0 < a < sh or a < 0:
        raise InvalidParameter("a must be 0 or at least sqrt(h) = %g, got %g" % (sh, a))
    h0 = min(m.K / m.L, 0.5) / m.L
    if m.h >= h0:
        raise StepSizeError("h = %g must be below h0 = min(K/L, 1/2)/L = %g" % (m.h, h0))
    if not check_contractive(m):
        raise InvalidParameter("x -> x + h b(x) expands some sampled pair; the contractive case does not apply")
    k = _constants(constants)
    c1 = c1_formula(m.K, m.R_out, m.h, a, k["c0"], k["p0"])
    if a == 0:
        prof = lemma6_profile(m, "paper", "thm3", "hat", constants)
        built = build_thm3(prof, n=n, r2=m.R_out)
    else:
        prof = lemma6_profile(m, "paper", "thm1", "hat", constants)
        built = build_thm1(prof, a=a, n=n, r2=m.R_out)
    metric = _with_meta(built.metric, theorem="euler7", built_rate=built.rate_c,
                        claimed_rate=c1 * m.h, build=built.to_json())
    return EulerRate(metric, c1, h0)


def _require_positive_lambda(m):
    if m.Lambda <= 0:
        raise InvalidParameter("Lambda = %g <= 0: the drift map is contractive, use rate_thm7" % m.Lambda)


def phi_8(m, ct0, R=None):
    """exp(-Lambda/ct0 ((r ∧ R)^2 + 2 sqrt(h) (r ∧ R)))."""
    lam, sh = m.Lambda, math.sqrt(m.h)

    def phi(r):
        rr = np.asarray(r, dtype=float) if R is None else np.minimum(r, R)
        return np.exp(-lam / ct0 * (rr * rr + 2 * sh * rr))

    return phi


def Phi_8(m, ct0, R):
    """∫_0^R exp(-kappa ((s + sqrt h)^2 - h)) ds in erfcx form."""
    kap = m.Lambda / ct0
    sh = math.sqrt(m.h)
    x1 = math.sqrt(kap * m.h)
    x2 = math.sqrt(kap) * (R + sh)
    return math.sqrt(math.pi) / (2 * math.sqrt(kap)) * (
        float(erfcx(x1)) - math.exp(-kap * (R * R + 2 * R * sh)) * float(erfcx(x2)))


def _paper_envelope(m, ct0, top, n):
    knots = np.linspace(0.0, top, n + 1)
    vals = 2 * m.Lambda * (knots[1:] + math.sqrt(m.h)) / ct0
    return knots, vals


def rate_thm8a(m, a, constants="paper", n=N_KNOTS):
    """General case with a jump a. Returns the metric, c2(a) and h0; the per-step rate is c2(a) h."""
    _require_positive_lambda(m)
    k = _constants(constants)
    ct0, p0 = k["ctilde0"], k["p0"]
    h, L, K, R = m.h, m.L, m.K, m.R_out
    sh = math.sqrt(h)
    r2 = R + math.sqrt(2 * ct0 / K)
    h0 = min(p0 / 2, K / L, 1 / (64 * L * r2 * r2)) / L
    if h >= h0:
        raise StepSizeError("h = %g must be below h0 = %g (terms p0/2L = %g, K/L^2 = %g, 1/(64 L^2 r2^2) = %g)"
                            % (h, h0, p0 / (2 * L), K / L ** 2, 1 / (64 * L * L * r2 * r2)))
    PhiR = Phi_8(m, ct0, R)
    if PhiR < 2 * sh:
        raise InvalidParameter("admissible interval [2 sqrt(h), Phi(R)] = [%g, %g] is empty; "
                               "replace R_out by a slightly larger value" % (2 * sh, PhiR))
    if not 2 * sh * (1 - 1e-12) <= a <= PhiR:
        raise InvalidParameter("a = %g outside [2 sqrt(h), Phi(R)] = [%g, %g]" % (a, 2 * sh, PhiR))
    phiR = float(phi_8(m, ct0)(R))
    c2 = 0.125 * min(K * phiR / (1 + (a + sh) * math.sqrt(2 * K / ct0)),
                     2 * ct0 * phiR / (R * R + 2 * (a + sh) * R),
                     4 * p0 / h)
    prof = lemma6_profile(m, "paper", "thm1", "full", constants)
    knots, vals = _paper_envelope(m, ct0, R, n)
    built = build_thm1(prof, a=a, n=n, r2=r2, gamma_tilde=(knots, vals, R))
    metric = _with_meta(built.metric, theorem="euler8a", built_rate=built.rate_c,
                        claimed_rate=c2 * h, build=built.to_json())
    return EulerRate(metric, c2, h0)


def h0_thm8(m, c0):
    L, K, R = m.L, m.K, m.R_out
    terms = {"1/6": 1 / 6, "K/L": K / L, "L R^2/3": L * R * R / 3, "c0^2/(970 L R^2)": c0 * c0 / (970 * L * R * R)}
    return min(terms.values()) / L, terms


def c2_formula(K, lam, R, c0):
    return min(K / 2, 245 / (24 * c0) * lam * lam * R * R) * math.exp(-49 * lam * R * R / (6 * c0))


def rate_thm8(m, constants="paper", n=N_KNOTS):
    """General case, continuous metric f(r) = ∫_0^r exp(-q (s ∧ r1)) ds."""
    _require_positive_lambda(m)
    k = _constants(constants)
    c0 = k["c0"]
    if m.h * m.L > 1 / 6:
        raise StepSizeError("h L = %g exceeds 1/6" % (m.h * m.L))
    h0, terms = h0_thm8(m, c0)
    if m.h > h0:
        raise StepSizeError("h = %g exceeds h0 = %g; terms of the min (times 1/L): %s"
                            % (m.h, h0, ", ".join("%s = %g" % kv for kv in terms.items())))
    lam, R = m.Lambda, m.R_out
    q = 7 * lam * R / c0
    r1 = (1 + m.h * m.L) * R
    c2 = c2_formula(m.K, lam, R, c0)
    s = np.linspace(0.0, r1, n + 1)
    dist = ConcaveDistance.from_cells(s, np.full(n, q), np.zeros(n), 0.0)
    metric = Metric(dist, meta={"theorem": "euler8", "claimed_rate": c2 * m.h, "q": q})
    return EulerRate8(metric, c2, h0, q, r1)


def dissipative_lyapunov(M1, M2, L0, h, d):
    """V = |x|^2 for a drift with <b(x), x> <= M1 - M2 |x|^2 and |b(x)|^2 <= L0 |x|^2.

    E|X'|^2 = |x + h b(x)|^2 + h d <= (1 - 2 h M2 + h^2 L0) |x|^2 + 2 h M1 + h d;
    C keeps the extra h^2 L0 of the textbook statement, which only loosens it.
    """
    lam = 2 * h * M2 - h * h * L0
    if not 0 < lam < 1:
        raise InvalidParameter("lambda = 2 h M2 - h^2 L0 = %g must lie in (0, 1); take h < 2 M2 / L0" % lam)
    C = h * h * L0 + 2 * h * M1 + h * d
    V = lambda x: np.sum(np.square(x), axis=-1)
    return LyapunovSpec(V, lam, C, lambda r: 0.5 * np.square(r))


def rate_thm8b(m, lyap, a, constants="paper", n=N_KNOTS, cap=1e8):
    """General case with a Lyapunov part. Returns metric, c2(a), h0 and M."""
    _require_positive_lambda(m)
    k = _constants(constants)
    ct0, p0 = k["ctilde0"], k["p0"]
    h, L, lam_, C = m.h, m.L, lyap.lam, lyap.C
    if not 0 < lam_ < 1 or C <= 0:
        raise InvalidParameter("need lambda in (0, 1) and C > 0")
    sh = math.sqrt(h)
    Lam = m.Lambda
    vmin = lambda r: float(_vec(lyap.v_min, np.array([r]))[0])
    thr = 4 * C / lam_
    r1 = _sup_below(lambda r: vmin(r) < thr, sh, cap)
    K2 = 64 * C * (r1 + 1) * Lam / (lam_ * ct0)
    r2 = _sup_below(lambda r: vmin(r) / r < K2, max(r1, sh), cap)
    r2 = max(r2, r1)
    phi = phi_8(m, ct0)
    phi1, phi2 = float(phi(r1)), float(phi(r2))
    h0 = min((2 * L / p0 + ct0 * phi1 / (4 * (r1 + 1))) ** -2, 1 / (16 * L * L * r2 * r2))
    if h >= h0:
        raise StepSizeError("h = %g must be below h0 = %g (r1 = %g, r2 = %g)" % (h, h0, r1, r2))
    if not 2 * sh < a < r2:
        raise InvalidParameter("a = %g outside (2 sqrt(h), r2) = (%g, %g)" % (a, 2 * sh, r2))
    M = h * ct0 * phi1 / (4 * (r1 + 1))
    c2a = 0.25 * min(2 * p0 / h, lam_ / h, 4 * phi1 * Lam, ct0 * phi2 / (2 * r2 * (a + sh) + r2 * r2))

    prof = lemma6_profile(m, "paper", "thm1", "full", constants)
    half = max(n // 2, 1)
    knots = np.unique(np.concatenate([np.linspace(0, r1, half + 1), np.linspace(r1, r2, half + 1)]))
    gamma = 2 * Lam * (knots[1:] + sh) / ct0
    from .builders import PhiTable
    table = PhiTable(knots, gamma)
    weight = lambda u: (a + table.Phi(u)) / prof.alpha(u)
    with np.errstate(divide="ignore"):
        S = cell_sup(weight, prof.geometry, knots[:-1], knots[1:])
        T = cell_sup(lambda u: 1.0 / prof.alpha(u), prof.geometry, knots[:-1], knots[1:])
    T = np.where(knots[:-1] < r1, np.where(T == -np.inf, 0.0, T), 0.0)
    dist, c_built, diag = _assemble(prof, knots, gamma, S, {"formula": c2a * h}, 0.125, a, T=T, M=M)
    metric = Metric(dist, lyapunov_weight=M / (2 * C), lyapunov_fn=lyap.V,
                    meta={"theorem": "euler8b", "claimed_rate": c2a * h, "built_rate": c_built,
                          "r1": r1, "r2": r2, "binding_term": diag["binding_term"]})
    return EulerRate8b(metric, c2a, h0, M)


def _sup_below(pred, start, cap):
    """sup{r : pred(r)} for a predicate true on an initial segment, by doubling and bisection."""
    if not pred(start * 1e-9):
        return 0.0
    hi = start
    while pred(hi):
        hi *= 2
        if hi > cap:
            raise NoCertificate("growth condition not met below r = %g" % cap)
    lo = hi / 2 if hi > start else 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return hi


def onestep_expectation(m, metric, x, y):
    """E rho(X', Y') for the coupled Euler step by one-dimensional quadrature.

    Only the distance part of rho is handled; the law of R' depends on x, y
    through rhat = |xhat - yhat| alone.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    if metric.lyapunov_weight > 0:
        raise InvalidParameter("quadrature check covers distance-only metrics")
    rhat = float(np.linalg.norm(m.advance(x) - m.advance(y)))
    f = metric.base
    return OneStepLaw(rhat, m.var).expect(lambda r: float(f(r)))
