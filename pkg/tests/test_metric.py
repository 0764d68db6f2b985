import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contraction_cert.errors import BudgetViolation, ProfileInvalid
from contraction_cert.metric import (ConcaveDistance, Metric, RateProfile, Thm1Geometry, Thm3Geometry,
                                     cell_sup, gamma_envelope, window_sup)

cells = st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.lists(st.floats(1e-3, 2.0), min_size=n, max_size=n),
    st.lists(st.floats(0.0, 5.0), min_size=n, max_size=n),
    st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n),
    st.floats(0.0, 0.5),
    st.floats(0.0, 2.0)))


def _dist(data):
    # Q rescaled so that g falls from 1 to 1 - drop >= 1/2, as the builders guarantee
    widths, gamma, Q, drop, a = data
    s = np.concatenate([[0.0], np.cumsum(widths)])
    Q = np.asarray(Q)
    raw = ConcaveDistance.from_cells(s, gamma, Q, a)
    total = 1.0 - _g_end(raw)
    if total > 0:
        Q = Q * (drop / total)
    return ConcaveDistance.from_cells(s, gamma, Q, a)


def _g_end(f):
    return float(f.tail_slope / f.phi[-1])


@given(cells)
def test_cell_distance_is_concave_and_increasing(data):
    f = _dist(data)
    r = np.linspace(0, f.r2 * 1.5, 400)[1:]
    fr = f(r)
    assert f(0.0) == 0.0
    assert np.all(np.diff(fr) > 0)
    d1 = f.deriv(r)
    assert np.all(np.diff(d1) <= 1e-12)
    assert np.all(f.deriv2(r) <= 1e-15)


@given(cells)
def test_derivative_matches_finite_difference(data):
    f = _dist(data)
    r = np.linspace(0.01, f.r2 * 0.99, 50)
    h = 1e-6
    fd = (f.continuous(r + h) - f.continuous(r - h)) / (2 * h)
    assert np.allclose(fd, f.deriv(r), rtol=1e-5, atol=1e-9)


@given(cells)
def test_subadditive_so_rho_is_a_metric(data):
    f = _dist(data)
    rng = np.random.default_rng(0)
    u, v = rng.random(50) * f.r2, rng.random(50) * f.r2
    assert np.all(f(u + v) <= f(u) + f(v) + 1e-12)


@given(cells)
def test_csv_round_trip(tmp_path_factory, data):
    f = _dist(data)
    path = str(tmp_path_factory.mktemp("k") / "m.csv")
    f.to_csv(path)
    g = ConcaveDistance.from_csv(path)
    assert np.allclose(g.f, f.f, rtol=1e-12, atol=1e-15)
    r = np.linspace(0, f.r2 * 1.2, 300)
    assert np.allclose(g(r), f(r), rtol=1e-10, atol=1e-14)


def test_identity_distance():
    f = ConcaveDistance.identity()
    r = np.array([0.0, 0.3, 5.0])
    assert np.allclose(f(r), r)
    assert f.check() == []


def test_jump_added():
    f = ConcaveDistance.identity(a=0.5)
    assert f(0.0) == 0.0
    assert f(1e-12) == pytest.approx(0.5)
    assert f.with_jump(0.25)(1.0) == pytest.approx(1.75)


def test_metric_with_lyapunov_part():
    m = Metric(ConcaveDistance.identity(), 0.5, lambda x: np.sum(np.square(x), axis=-1))
    x = np.array([[1.0, 0.0]])
    assert m(x, x)[0] == 0.0
    assert m(x, -x)[0] == pytest.approx(2.0 + 0.5 * 2.0)


def test_metric_triangle_inequality():
    f = ConcaveDistance.from_cells(np.linspace(0, 2, 9), np.full(8, 1.5), np.full(8, 0.02), 0.3)
    m = Metric(f)
    rng = np.random.default_rng(1)
    x, y, z = (rng.normal(size=(200, 3)) for _ in range(3))
    assert np.all(m(x, z) <= m(x, y) + m(y, z) + 1e-12)


def test_window_sup_finds_interior_peak():
    s = window_sup(lambda r: -(r - 0.37) ** 2, np.array([0.0]), np.array([1.0]))
    assert s[0] == pytest.approx(0.0, abs=1e-4)
    assert window_sup(lambda r: r, np.array([1.0]), np.array([1.0]))[0] == -np.inf


def test_dual_windows():
    g1 = Thm1Geometry(0.1, 0.2)
    (lo, hi), = g1.windows(np.array([0.05]), np.array([0.3]))
    assert lo[0] == 0.1 and hi[0] == pytest.approx(0.5)
    g3 = Thm3Geometry(0.1, 0.05)
    w = g3.windows(np.array([0.12]), np.array([0.12]))
    assert w[0][0][0] == pytest.approx(0.02) and w[0][1][0] == pytest.approx(0.1)
    assert w[1][0][0] == pytest.approx(0.12) and w[1][1][0] == pytest.approx(0.17)
    with pytest.raises(ProfileInvalid):
        Thm3Geometry(0.1, 0.2)


def test_cell_sup_covers_dual_interval():
    g = Thm1Geometry(0.5, 0.5)
    got = cell_sup(lambda r: r, g, np.array([1.0]), np.array([1.1]))
    assert got[0] == pytest.approx(1.6, abs=1e-6)


def _toy(beta, alpha=lambda r: np.ones_like(r), geom=None):
    return RateProfile(1.0, geom or Thm1Geometry(1.0, 1.0), alpha, beta, lambda r: 0.5 * (np.asarray(r) <= 1), 0.0)


def test_envelope_zero_without_positive_drift():
    env, r1 = gamma_envelope(_toy(lambda r: -r))
    assert r1 == 0.0 and np.all(env.values == 0)


def test_envelope_dominates_gamma_bar():
    # continuous profile; the sup is a grid scan and does not chase jumps
    p = _toy(lambda r: 0.3 * r * (2 - r))
    env, r1 = gamma_envelope(p, n=256)
    assert 2.0 <= r1 <= 2.0 + 1.0 + 0.05
    s = np.linspace(0, r1, 500, endpoint=False)
    for si in s[::25]:
        window = np.linspace(max(si, 1.0), si + 1.0, 40)[1:-1]
        assert env(np.array([si]))[0] >= p.gamma_bar(window).max() * (1 - 1e-6) - 1e-12


def test_envelope_budget_violation():
    p = RateProfile(1.0, Thm3Geometry(1.0, 1.0), lambda r: 0.01 * np.minimum(r, 1.0), lambda r: np.where(r < 3, r, -r))
    with pytest.raises(BudgetViolation):
        gamma_envelope(p, n=128)


def test_check_reports_bad_tables():
    f = ConcaveDistance.from_cells(np.linspace(0, 1, 5), np.zeros(4), np.full(4, 2.0), 0.0)
    assert any("g outside" in v for v in f.check())
