import itertools
import math

import numpy as np
import pytest

from contraction_cert import euler, verify
from contraction_cert.errors import InvalidParameter
from contraction_cert.kernels import clipped_moment
from contraction_cert.metric import ConcaveDistance, Metric, Thm1Geometry


def _grw(h=0.01):
    m = euler.EulerModel(lambda x: np.zeros_like(x), 1, J=0.0, K=1e-9, R_out=1.0, L=1e-9, h=h)
    return euler.EulerCoupling(m)


# --- moments ------------------------------------------------------------------------


def test_moments_random_walk_zero_drift():
    est = verify.empirical_moments(_grw(), [0.0], [0.15], 100000, Thm1Geometry(0.1, 0.1), 1)
    assert abs(est.beta_hat) <= est.beta_hw


def test_moments_equal_points():
    est = verify.empirical_moments(_grw(), [0.3], [0.3], 1000, Thm1Geometry(0.1, 0.1), 2)
    assert est.pi_hat == 1.0 and est.alpha_hat == 0.0 and est.beta_hat == 0.0


def test_moments_need_enough_samples():
    with pytest.raises(InvalidParameter):
        verify.empirical_moments(_grw(), [0.0], [0.1], 999, Thm1Geometry(0.1, 0.1), 0)


def test_moments_match_quadrature_ou():
    h = 0.01
    sd = math.sqrt(h)
    m = euler.ou_model(h)
    r = 2 * sd
    x, y = np.array([r / 2]), np.array([-r / 2])
    geom = Thm1Geometry(sd, sd)
    est = verify.empirical_moments(euler.EulerCoupling(m), x, y, 200000, geom, 3)
    rhat = r * (1 - h)
    law = euler.onestep_law_1d(rhat, h)
    assert abs(est.beta_hat - (law.expect(lambda v: v) - r)) <= est.beta_hw
    assert abs(est.pi_hat - law.coalesce_prob) <= est.pi_hw
    alpha = clipped_moment(np.array([r]), np.array([rhat]), sd, "thm1", sd, sd)[0]
    assert abs(est.alpha_hat - alpha) <= est.alpha_hw
    assert 0 <= est.pi_hat <= 1 and est.alpha_hat >= 0


def test_half_widths_shrink_as_root_n():
    geom = Thm1Geometry(0.1, 0.1)
    a = verify.empirical_moments(_grw(), [0.0], [0.15], 50000, geom, 4)
    b = verify.empirical_moments(_grw(), [0.0], [0.15], 100000, geom, 5)
    for u, v in ((a.beta_hw, b.beta_hw), (a.alpha_hw, b.alpha_hw), (a.pi_hw, b.pi_hw)):
        assert v / u == pytest.approx(1 / math.sqrt(2), rel=0.05)


# --- sweep --------------------------------------------------------------------------


def _ou7(h=0.01):
    m = euler.ou_model(h)
    res = euler.rate_thm7(m, 0.0)
    return euler.EulerCoupling(m), res


def test_sweep_sanity_mode():
    kern, res = _ou7()
    rep = verify.contraction_sweep(kern, res.metric, verify.log_pairs(1, 1e-2, 1e2, 5), 5000, 0.0, 1)
    assert rep.verdict and all(r.ratio <= 1 + (r.ci_hi - r.ratio) for r in rep.rows)


def test_sweep_certified_rate_passes():
    kern, res = _ou7()
    pairs = verify.log_pairs(1, 1e-2, 1e2, 20)
    rep = verify.contraction_sweep(kern, res.metric, pairs, 200000, res.rate * 0.01, 7)
    assert rep.verdict, rep.summary()


def test_sweep_adversarial_rate_fails():
    kern, res = _ou7()
    rep = verify.contraction_sweep(kern, Metric(ConcaveDistance.identity()), verify.log_pairs(1, 1e-1, 1e1, 5),
                                   20000, 0.5, 8)
    assert not rep.verdict
    assert rep.summary()["failed"] == 5


def test_sweep_skips_zero_distance_and_validates():
    kern, res = _ou7()
    rep = verify.contraction_sweep(kern, res.metric, [(np.zeros(1), np.zeros(1))], 1000, 0.0, 0)
    assert rep.rows[0].note.startswith("skipped") and rep.verdict
    with pytest.raises(InvalidParameter):
        verify.contraction_sweep(kern, res.metric, [], 1000, 0.0, 0)
    with pytest.raises(InvalidParameter):
        verify.contraction_sweep(kern, res.metric, [(np.zeros(1), np.ones(1))], 1000, 1.0, 0)


def test_sweep_bit_identical_across_workers():
    m = euler.tanh_model(0.05, 0.6, 2.0, d=2)
    kern = euler.EulerCoupling(m)
    metric = Metric(ConcaveDistance.from_cells(np.linspace(0, 3, 33), np.full(32, 0.5), np.full(32, 0.01), 0.05))
    pairs = verify.log_pairs(2, 1e-2, 10, 6)
    runs = [verify.contraction_sweep(kern, metric, pairs, 40000, 0.001, 42, threads=k).fingerprint()
            for k in (1, 3, 8)]
    assert runs[0] == runs[1] == runs[2]


def test_report_files(tmp_path):
    kern, res = _ou7()
    rep = verify.contraction_sweep(kern, res.metric, verify.log_pairs(1, 0.1, 1, 2), 2000, 0.0, 1)
    rep.to_csv(str(tmp_path / "r.csv"))
    rep.to_json(str(tmp_path / "r.json"))
    head = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert head == "x,y,r,rho,ratio,ci_lo,ci_hi,bound,pass"


# --- exact OT -----------------------------------------------------------------------


def _brute(a, b, metric):
    C = verify.cost_matrix(a, b, metric)
    n = len(a)
    return min(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n


def test_ot_trivial_cases():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(20, 2))
    assert verify.discrete_wasserstein(a, a.copy()) == 0.0
    x, y = np.array([[0.0, 1.0]]), np.array([[3.0, 5.0]])
    assert verify.discrete_wasserstein(x, y) == pytest.approx(5.0)
    with pytest.raises(InvalidParameter):
        verify.discrete_wasserstein(a, a[:5])


def test_ot_matches_brute_force():
    rng = np.random.default_rng(1)
    f = ConcaveDistance.from_cells(np.linspace(0, 2, 9), np.full(8, 1.0), np.full(8, 0.05), 0.2)
    metric = Metric(f)
    for k in range(1000):
        n = 1 + k % 6
        d = 1 + k % 3
        a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        mt = metric if k % 2 else None
        assert abs(verify.discrete_wasserstein(a, b, mt) - _brute(a, b, mt)) <= 1e-12


def test_ot_symmetric_and_order_free():
    rng = np.random.default_rng(2)
    metric = Metric(ConcaveDistance.from_cells(np.linspace(0, 2, 9), np.full(8, 1.0), np.full(8, 0.05), 0.2))
    a, b = rng.normal(size=(60, 2)), rng.normal(size=(60, 2))
    w = verify.discrete_wasserstein(a, b, metric)
    assert verify.discrete_wasserstein(b, a, metric) == pytest.approx(w, rel=1e-12)
    assert verify.discrete_wasserstein(a[::-1], b[rng.permutation(60)], metric) == pytest.approx(w, rel=1e-12)


def test_ot_triangle_inequality():
    rng = np.random.default_rng(3)
    metric = Metric(ConcaveDistance.from_cells(np.linspace(0, 2, 9), np.full(8, 1.0), np.full(8, 0.05), 0.2))
    for _ in range(50):
        a, b, c = (rng.normal(size=(15, 2)) + rng.normal(size=2) for _ in range(3))
        ab = verify.discrete_wasserstein(a, b, metric)
        bc = verify.discrete_wasserstein(b, c, metric)
        ac = verify.discrete_wasserstein(a, c, metric)
        assert ac <= ab + bc + 1e-12


# --- decay --------------------------------------------------------------------------


def test_decay_ou_translation_slope():
    h = 0.05
    kern = euler.EulerCoupling(euler.ou_model(h))
    res = verify.decay_fit(kern, Metric(ConcaveDistance.identity()), [(np.array([50.0]), np.array([-50.0]))],
                           50, 10000, 1)
    assert abs(res.slope - math.log(1 - h)) <= 1e-2
    for (n, est, ot, _), sub in zip(res.table, res.subset_estimate):
        assert ot <= sub * (1 + 1e-12)


def test_decay_ot_below_coupling_estimate():
    kern = euler.EulerCoupling(euler.tanh_model(0.1, 0.6, 2.0))
    res = verify.decay_fit(kern, Metric(ConcaveDistance.identity()), [(np.array([0.5]), np.array([-0.5]))],
                           10, 300, 2)
    assert all(row[2] <= sub + 1e-12 for row, sub in zip(res.table, res.subset_estimate))


def test_decay_coalescence_note():
    kern = euler.EulerCoupling(euler.ou_model(0.5))
    res = verify.decay_fit(kern, Metric(ConcaveDistance.identity()), [(np.array([0.0]), np.array([1e-9]))],
                           10, 1000, 3)
    assert res.slope is None and "coalesced" in res.note


def test_decay_needs_five_steps():
    kern = euler.EulerCoupling(euler.ou_model(0.1))
    with pytest.raises(InvalidParameter):
        verify.decay_fit(kern, Metric(ConcaveDistance.identity()), [(np.zeros(1), np.ones(1))], 4, 100, 0)


def test_decay_bit_identical_across_workers():
    kern = euler.EulerCoupling(euler.tanh_model(0.1, 0.6, 2.0))
    args = (kern, Metric(ConcaveDistance.identity()), [(np.array([1.0]), np.array([-1.0]))], 8, 5000, 9)
    a = verify.decay_fit(*args, threads=1)
    b = verify.decay_fit(*args, threads=4)
    assert a.table == b.table and a.slope == b.slope
