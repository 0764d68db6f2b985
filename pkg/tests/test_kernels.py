import itertools

import numpy as np
import pytest

from contraction_cert import kernels
from contraction_cert._backend import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _step_inputs(seed, n=3000, d=3):
    rng = np.random.default_rng(seed)
    xh = rng.normal(size=(n, d))
    yh = xh + rng.normal(scale=0.1, size=(n, d))
    yh[:10] = xh[:10]
    return xh, yh, rng.normal(size=(n, d)), rng.random(n)


@needs_numba
def test_coupled_step_backends_agree():
    xh, yh, Z, U = _step_inputs(0)
    ref = kernels._coupled_step_np(xh, yh, Z, U, 0.05)
    xn, yn, coal = np.empty_like(xh), np.empty_like(yh), np.empty(len(xh), dtype=np.bool_)
    kernels._coupled_step_nb(xh, yh, Z, U, 0.05, xn, yn, coal)
    assert np.array_equal(ref[2], coal)
    assert np.allclose(ref[0], xn, atol=1e-14)
    assert np.allclose(ref[1], yn, atol=1e-12)


def test_coupled_step_equal_inputs_coalesce():
    xh, _, Z, U = _step_inputs(1)
    xn, yn, coal = kernels.coupled_gauss_step(xh, xh.copy(), Z, U, 0.3)
    assert coal.all() and np.array_equal(xn, yn)


def test_reflection_preserves_distance_along_e():
    xh, yh, Z, U = _step_inputs(2)
    xn, yn, coal = kernels.coupled_gauss_step(xh, yh, Z, U, 0.05)
    # off the coalesced branch, X' - Y' is parallel to xh - yh
    diff = xh - yh
    out = (xn - yn)[~coal]
    e = diff[~coal] / np.linalg.norm(diff[~coal], axis=1, keepdims=True)
    par = np.einsum("ij,ij->i", out, e)
    assert np.allclose(out, par[:, None] * e, atol=1e-12)


@needs_numba
def test_clipped_moment_backends_agree():
    rng = np.random.default_rng(3)
    sd = 0.03
    r = np.abs(rng.normal(size=500)) * 0.2
    rh = r * (1 + 0.01 * rng.normal(size=500))
    for code in (1, 3):
        ref = kernels._clipped_moment_np(r, rh, sd, code, sd, sd)
        out = np.empty_like(r)
        kernels._clipped_moment_nb(r, rh, sd, code, sd, sd, kernels._GL_X, kernels._GL_W, out)
        assert np.allclose(out, ref, rtol=1e-12, atol=1e-18)


def test_clipped_moment_against_monte_carlo():
    sd, r = 0.1, 0.15
    rng = np.random.default_rng(4)
    n = 400000
    w = rng.normal(size=n)
    kap = r / sd
    # coalesce when log U <= log phi(w - kap)/phi(w) = kap w - kap^2/2
    coal = np.log(rng.random(n)) <= kap * w - 0.5 * kap * kap
    Rn = np.where(coal, 0.0, np.abs(r - 2 * sd * w))
    dR = Rn - r
    clip = -np.minimum(np.maximum(-dR, 0), sd)
    mc = np.mean(clip ** 2)
    se = np.std(clip ** 2) / np.sqrt(n)
    got = kernels.clipped_moment(np.array([r]), np.array([r]), sd, "thm1", sd, sd)[0]
    assert abs(got - mc) < 4 * se


def _brute(C):
    n = len(C)
    return min(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


@pytest.mark.parametrize("seed", range(6))
def test_assign_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    C = rng.random((7, 7))
    if seed % 2:
        C = np.round(C * 3)  # ties
    col = kernels.assign(C)
    assert sorted(col) == list(range(7))
    assert C[np.arange(7), col].sum() == pytest.approx(_brute(C), abs=1e-12)
    assert C[np.arange(7), kernels._assign_np(C)].sum() == pytest.approx(_brute(C), abs=1e-12)


def test_assign_against_scipy():
    from scipy.optimize import linear_sum_assignment
    rng = np.random.default_rng(9)
    C = rng.random((150, 150))
    r, c = linear_sum_assignment(C)
    assert C[np.arange(150), kernels.assign(C)].sum() == pytest.approx(C[r, c].sum(), rel=1e-12)


def test_assign_rejects_bad_input():
    with pytest.raises(ValueError):
        kernels.assign(np.ones((2, 3)))
    with pytest.raises(ValueError):
        kernels.assign(np.array([[0.0, np.inf], [1.0, 1.0]]))
