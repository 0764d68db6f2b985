"""Small numerical helpers shared by the builders and kernels."""
import math

import numpy as np
from scipy.special import erfc

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


def norm_pdf(u):
    return np.exp(-0.5 * np.square(u)) / SQRT2PI


def norm_sf(u):
    """Upper tail of the standard normal, via erfc (accurate far into the tail)."""
    return 0.5 * erfc(np.asarray(u, dtype=float) / SQRT2)


def norm_cdf(u):
    return 0.5 * erfc(-np.asarray(u, dtype=float) / SQRT2)


def adaptive_simpson(fn, lo, hi, tol=1e-10, max_depth=50):
    """Adaptive Simpson quadrature of a scalar function on [lo, hi]."""
    if hi <= lo:
        return 0.0

    def simpson(a, fa, b, fb):
        m = 0.5 * (a + b)
        fm = fn(m)
        return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, b, fb, m, fm, whole, tol, depth):
        lm, flm, left = simpson(a, fa, m, fm)
        rm, frm, right = simpson(m, fm, b, fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, fa, m, fm, lm, flm, left, tol / 2, depth - 1)
                + recurse(m, fm, b, fb, rm, frm, right, tol / 2, depth - 1))

    fa, fb = fn(lo), fn(hi)
    m, fm, whole = simpson(lo, fa, hi, fb)
    return recurse(lo, fa, hi, fb, m, fm, whole, tol, max_depth)


def exp_lin_integral(gamma, t):
    """(1 - exp(-gamma t)) / gamma, with the gamma -> 0 limit t."""
    gamma = np.asarray(gamma, dtype=float)
    t = np.asarray(t, dtype=float)
    x = gamma * t
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, gamma)
    return np.where(small, t * (1.0 - 0.5 * x), -np.expm1(-x) / safe)


def exp_lin_integral_rev(gamma, t):
    """(exp(gamma t) - 1) / gamma, the integral of exp(gamma u) over [0, t]."""
    gamma = np.asarray(gamma, dtype=float)
    t = np.asarray(t, dtype=float)
    x = gamma * t
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, gamma)
    return np.where(small, t * (1.0 + 0.5 * x), np.expm1(x) / safe)


def exp_lin_second(gamma, t):
    """Integral over [0, t] of exp_lin_integral(gamma, .), i.e. (t - E)/gamma.

    Equal to t^2 (x - 1 + e^{-x}) / x^2 with x = gamma t; a short series
    takes over for small x where the closed form cancels.
    """
    gamma = np.asarray(gamma, dtype=float)
    t = np.asarray(t, dtype=float)
    x = gamma * t
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    closed = (np.expm1(-xs) + xs) / (xs * xs)
    series = 0.5 - x / 6.0 + x * x / 24.0 - x ** 3 / 120.0
    return t * t * np.where(small, series, closed)


def bisect_bool(pred, lo, hi, steps=60):
    """Smallest point (up to bisection resolution) where a monotone predicate turns true.

    pred(lo) is assumed false and pred(hi) true; returns hi after shrinking.
    """
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


_GL_CACHE = {}


def gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]
