"""MALA with the semi-implicit Euler proposal, its coupling, and the
perturbation route from a proposal-chain certificate to a MALA certificate."""
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import erfc
from scipy.stats import norm

from .builders import N_KNOTS, build_thm3
from .errors import InvalidParameter, NoCertificate, StepSizeError
from .euler import EulerModel, lemma6_profile
from .kernels import coupled_gauss_step
from .metric import ConcaveDistance, Metric
from .numerics import SQRT2
from .rng import as_generator, substreams

HD_CAP = 0.1


@dataclass(frozen=True)
class TargetSpec:
    """mu(dx) ∝ exp(-|x|^2/2 - V(x)) dx.

    grad_V acts on arrays of shape (n, d). hess_bounds = (lo, hi) bounds the
    eigenvalues of the Hessian of V; they fix the one-sided Lipschitz data of
    the proposal drift -(x + grad V(x))/2.
    """
    d: int
    V: Callable
    grad_V: Callable
    hess_bounds: tuple
    R_ball: float = 5.0
    minus_norm: Optional[Callable] = None
    name: str = ""

    def norm_minus(self, x):
        x = np.asarray(x, dtype=float)
        if self.minus_norm is not None:
            return self.minus_norm(x)
        return np.linalg.norm(x, axis=-1) / math.sqrt(self.d)

    def U(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1) + self.V(x)

    def check_norm(self, rng=0, n=2000):
        """Sampled check of |x|_- <= |x| <= d |x|_-."""
        gen = as_generator(rng)
        x = gen.normal(size=(n, self.d)) * np.exp(gen.uniform(-3, 3, (n, 1)))
        nm = self.norm_minus(x)
        e = np.linalg.norm(x, axis=-1)
        ok = np.all(nm <= e * (1 + 1e-12)) and np.all(e <= self.d * nm * (1 + 1e-12))
        if not ok:
            raise InvalidParameter("minus_norm violates |x|_- <= |x| <= d |x|_-")
        g = self.grad_V(x[:64] * self.R_ball / np.maximum(nm[:64, None], 1e-300))
        if not np.all(np.isfinite(g)):
            raise InvalidParameter("grad V is not finite on the ball")
        return True

    def proposal_model(self, h):
        lo, hi = self.hess_bounds
        J = -(1 + lo) / 2
        L = max(abs(1 + lo), abs(1 + hi)) / 2
        K = (1 + lo) / 2
        if K <= 0:
            raise InvalidParameter("proposal drift is not contractive at infinity (1 + inf Hess V <= 0)")
        drift = lambda x: -0.5 * (x + self.grad_V(x))
        return EulerModel(drift, self.d, J=J, K=K, R_out=1.0, L=L, h=h,
                          noise_var=h - h * h / 4, name="mala-proposal")


def zero_target(d=1, R_ball=5.0):
    return TargetSpec(d, lambda x: np.zeros(np.shape(x)[:-1]), lambda x: np.zeros_like(x),
                      (0.0, 0.0), R_ball, name="zero")


def cosine_target(d=1, amp=0.1, freq=1.0, R_ball=5.0):
    """V(x) = amp sum_i cos(freq x_i)."""
    V = lambda x: amp * np.sum(np.cos(freq * np.asarray(x)), axis=-1)
    gV = lambda x: -amp * freq * np.sin(freq * np.asarray(x))
    c = abs(amp) * freq * freq
    return TargetSpec(d, V, gV, (-c, c), R_ball, name="cosine")


def quartic_target(d=1, amp=0.1, R_ball=5.0):
    """V(x) = amp sum_i x_i^4 / (1 + x_i^2): quartic at the origin, quadratic far out."""
    V = lambda x: amp * np.sum(np.asarray(x) ** 4 / (1 + np.asarray(x) ** 2), axis=-1)

    def gV(x):
        x = np.asarray(x)
        return amp * (4 * x ** 3 + 2 * x ** 5) / (1 + x * x) ** 2

    # V''/amp = 2 + (6x^2 - 2)/(1 + x^2)^3, bounded on a dense grid
    s = np.linspace(0, 50, 200001)
    v2 = 2 + (6 * s ** 2 - 2) / (1 + s * s) ** 3
    lo, hi = amp * min(0.0, v2.min()), amp * v2.max() * (1 + 1e-9)
    return TargetSpec(d, V, gV, (lo, hi), R_ball, name="quartic_well")


def make_target(name, d=1, R_ball=5.0, **params):
    if name == "zero":
        return zero_target(d, R_ball)
    if name == "cosine":
        return cosine_target(d, params.get("amp", 0.1), params.get("freq", 1.0), R_ball)
    if name == "quartic_well":
        return quartic_target(d, params.get("amp", 0.1), R_ball)
    raise InvalidParameter("unknown target %r" % name)


def _check_h(h):
    if not 0 < h < 2:
        raise StepSizeError("MALA step h must lie in (0, 2), got %g" % h)


def _2d(x, d):
    return np.asarray(x, dtype=float).reshape(-1, d)


def proposal_mean(t, x, h):
    return x - 0.5 * h * (x + t.grad_V(x))


def propose(t, x, h, rng):
    _check_h(h)
    gen = as_generator(rng)
    x = _2d(x, t.d)
    return proposal_mean(t, x, h) + math.sqrt(h - h * h / 4) * gen.standard_normal(x.shape)


def log_proposal_density(t, x, y, h):
    """log p_h(x, y) up to the Gaussian constant."""
    x, y = _2d(x, t.d), _2d(y, t.d)
    diff = y - proposal_mean(t, x, h)
    return -np.sum(diff * diff, axis=-1) / (2 * (h - h * h / 4))


def log_ratio(t, x, y, h):
    """log mu(y) p_h(y, x) - log mu(x) p_h(x, y).

    The Gaussian parts cancel exactly for this proposal, so only the V terms
    are evaluated; for V = 0 the result is exactly zero.
    """
    x, y = _2d(x, t.d), _2d(y, t.d)
    m = 1 - h / 2
    s2 = h - h * h / 4
    gx = 0.5 * h * t.grad_V(x)
    gy = 0.5 * h * t.grad_V(y)
    ax = y - m * x
    ay = x - m * y
    quad = (2 * np.sum(ax * gx, axis=-1) + np.sum(gx * gx, axis=-1)
            - 2 * np.sum(ay * gy, axis=-1) - np.sum(gy * gy, axis=-1))
    return t.V(x) - t.V(y) + quad / (2 * s2)


def log_accept(t, x, y, h):
    _check_h(h)
    return np.minimum(0.0, log_ratio(t, x, y, h))


def coupled_mala_step(t, x, y, h, rng):
    """Coupled proposals (maximal/reflection) and one shared uniform for both accept steps."""
    _check_h(h)
    gen = as_generator(rng)
    x, y = _2d(x, t.d), _2d(y, t.d)
    return _coupled_mala(t, x, y, h, gen)


def _coupled_mala(t, x, y, h, gen):
    n = x.shape[0]
    Z = gen.standard_normal(x.shape)
    U = gen.random(n)
    Ua = gen.random(n)
    sd = math.sqrt(h - h * h / 4)
    xp, yp, _ = coupled_gauss_step(proposal_mean(t, x, h), proposal_mean(t, y, h), Z, U, sd)
    with np.errstate(divide="ignore"):
        lu = np.log(Ua)
    acc_x = lu <= log_accept(t, x, xp, h)
    acc_y = lu <= log_accept(t, y, yp, h)
    return np.where(acc_x[:, None], xp, x), np.where(acc_y[:, None], yp, y)


class MalaCoupling:
    """Batch coupled kernel handle for the verifier."""

    def __init__(self, target, h):
        _check_h(h)
        self.target = target
        self.h = h

    def step(self, x, y, gen):
        return _coupled_mala(self.target, x, y, self.h, gen)


# ---------------------------------------------------------------------------
# perturbation of a contractive kernel


@dataclass(frozen=True)
class PerturbationBound:
    b: float
    p: float
    r0: float
    c: float

    def __post_init__(self):
        if self.b < 0 or not 0 < self.p <= 1 or self.r0 <= 0 or self.c <= 0:
            raise InvalidParameter("need b >= 0, p in (0, 1], r0 > 0, c > 0")

    def gap(self, f):
        return self.b - self.c * float(f(self.r0)) / 4


def perturb_rate(f, pb):
    """rho~ = f(|x - y|) + (2b/p) 1{x != y} with rate min(c, 2p)/8."""
    if pb.gap(f) > 0:
        raise NoCertificate("perturbation too large: b - c f(r0)/4 = %.4g > 0 (b = %.4g, c f(r0)/4 = %.4g)"
                            % (pb.gap(f), pb.b, pb.c * float(f(pb.r0)) / 4))
    dist = f.with_jump(2 * pb.b / pb.p) if isinstance(f, ConcaveDistance) else f
    rate = min(pb.c, 2 * pb.p) / 8
    return Metric(dist, meta={"perturbation": pb.__dict__, "rate": rate}), rate


# ---------------------------------------------------------------------------
# pipeline


class MalaCertificate(NamedTuple):
    metric: Metric
    c3: float
    h0_d: float
    diagnostics: dict


def ball_points(t, n, gen):
    """Start points covering the |.|_- ball: a grid for d = 1, axes plus random points otherwise."""
    R = t.R_ball
    if t.d == 1:
        return np.linspace(-R, R, n)[:, None]
    pts = [np.zeros(t.d)]
    for k in range(t.d):
        for s in (-1, 1):
            e = np.zeros(t.d)
            e[k] = s
            pts.append(e * R / t.norm_minus(e[None])[0])
    rest = max(n - len(pts), 0)
    z = gen.standard_normal((rest, t.d))
    z *= (R * gen.random((rest, 1)) ** (1 / t.d)) / t.norm_minus(z)[:, None]
    return np.vstack([np.array(pts), z])


def _point_rejection_stats(t, x, h, N, gen):
    """Per-sample 1 - alpha and (1 - alpha) |X' - x| at one start point (Rao-Blackwellized)."""
    xs = np.repeat(x[None, :], N, axis=0)
    xp = propose(t, xs, h, gen)
    rej = -np.expm1(log_accept(t, xs, xp, h))
    jump = rej * np.linalg.norm(xp - xs, axis=1)
    return rej, jump


def _ucl(samples, z):
    return float(samples.mean() + z * samples.std(ddof=1) / math.sqrt(len(samples)))


def mala_pipeline(t, h, mc_budget=200000, rng=0, n_points=41, level=1e-3, n=N_KNOTS, hd_cap=HD_CAP):
    """Certificate for coupled MALA on the ball from the proposal-chain certificate.

    Returns the perturbed metric, c3 (per-step rate c3 h) and the step ceiling
    h0_d = hd_cap / d enforced here.
    """
    _check_h(h)
    if h * t.d > hd_cap:
        raise StepSizeError("h d = %g exceeds the cap %g; take h <= %g" % (h * t.d, hd_cap, hd_cap / t.d))
    t.check_norm()
    gen = as_generator(rng)
    pm = t.proposal_model(h)
    prof = lemma6_profile(pm, "sharpened", "thm3", "full")
    built = build_thm3(prof, n=n)
    f = built.distance
    c_step = built.rate_c

    pts = ball_points(t, n_points, gen)
    N = max(mc_budget // len(pts), 1000)
    z = float(norm.isf(level / len(pts)))
    streams = substreams(int(gen.integers(0, 2 ** 63 - 1)), len(pts))
    rej_ucl, jump_ucl = [], []
    for x, g in zip(pts, streams):
        rej, jump = _point_rejection_stats(t, x, h, N, g)
        rej_ucl.append(_ucl(rej, z))
        jump_ucl.append(_ucl(jump, z))
    b = 2 * max(jump_ucl)
    sd = math.sqrt(h - h * h / 4)
    sh = math.sqrt(h)
    rhat_max = sh * (1 + h * pm.L)
    p_prop = float(erfc(rhat_max / (2 * SQRT2 * sd)))
    p = p_prop - 2 * max(rej_ucl)
    if p <= 0:
        raise NoCertificate("rejection probability swamps the coalescence floor (p = %g); take smaller h" % p)
    pb = PerturbationBound(b=b, p=p, r0=sh, c=c_step)
    if pb.gap(f) > 0:
        raise NoCertificate("estimated b = %.4g exceeds c f(sqrt h)/4 = %.4g; take a smaller h "
                            "(the certificate needs h of order 1/d)" % (b, c_step * float(f(sh)) / 4))
    metric, rate = perturb_rate(f, pb)
    c3 = min(c_step / h / 8, p / (4 * h))
    diag = {"c_proposal": c_step, "b": b, "p": p, "p_proposal": p_prop,
            "b_limit": c_step * float(f(sh)) / 4, "N_per_point": N, "n_points": len(pts),
            "rate_per_step": rate, "r2": built.r2}
    metric = Metric(metric.base, meta={"theorem": "mala", "c3": c3, "claimed_rate": c3 * h, **diag})
    return MalaCertificate(metric, c3, hd_cap / t.d, diag)


# ---------------------------------------------------------------------------
# rejection scaling


class ScalingFit(NamedTuple):
    slope: float
    se: float
    per_point: list
    below_noise_floor: bool


def rejection_scaling(t, points, h_list, N=20000, rng=0):
    """Least-squares slope of log E[1 - alpha_h] against log h, averaged over points."""
    h_list = np.asarray(sorted(h_list), dtype=float)
    if h_list[-1] / h_list[0] < 8 * (1 - 1e-12):
        raise InvalidParameter("h_list must span a factor of at least 8")
    if N < 10000:
        raise InvalidParameter("N must be at least 1e4")
    pts = _2d(points, t.d)
    streams = substreams(int(as_generator(rng).integers(0, 2 ** 63 - 1)), len(pts) * len(h_list))
    lx = np.log(h_list)
    w = (lx - lx.mean()) / np.sum((lx - lx.mean()) ** 2)
    slopes, vars_ = [], []
    for i, x in enumerate(pts):
        means, lvar = [], []
        for j, h in enumerate(h_list):
            rej, _ = _point_rejection_stats(t, x, h, N, streams[i * len(h_list) + j])
            mu = rej.mean()
            means.append(mu)
            lvar.append(rej.var(ddof=1) / N / mu ** 2 if mu > 0 else np.inf)
        means = np.array(means)
        if np.any(means <= 0):
            continue
        slopes.append(float(np.dot(w, np.log(means))))
        vars_.append(float(np.dot(w * w, lvar)))
    if not slopes:
        return ScalingFit(float("nan"), float("nan"), [], True)
    k = len(slopes)
    return ScalingFit(float(np.mean(slopes)), math.sqrt(sum(vars_)) / k, slopes, False)
