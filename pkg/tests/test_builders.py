import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contraction_cert.builders import LyapunovSpec, build_thm1, build_thm2, build_thm3, key_inequality_gap
from contraction_cert.errors import InvalidParameter, ProfileInvalid
from contraction_cert.metric import RateProfile, Thm1Geometry, Thm3Geometry

# frozen from tests/oracles/derive.py
TOY_R2 = 1.324717957244746
TOY_C = 0.07088428648315686
GRW_C = 2.91666666666667e-5


def toy(alpha=1.0, slope=1.0, pi=0.5):
    return RateProfile(1.0, Thm1Geometry(1.0, 1.0), lambda r: np.full_like(np.asarray(r, dtype=float), alpha),
                       lambda r: -slope * np.asarray(r), lambda r: pi * (np.asarray(r) <= 1), 0.0)


def quad_V(x):
    return np.sum(np.square(x), axis=-1)


def test_toy_thm1():
    b = build_thm1(toy())
    assert b.a == 1.0
    assert b.r2 == pytest.approx(TOY_R2, abs=1e-9)
    # the step envelope on 2048 cells costs at most ~1e-3 relative
    assert TOY_C * (1 - 1e-3) <= b.rate_c <= TOY_C
    assert b.binding_term == "fluctuation"
    assert b.distance.check() == []
    assert b.distance.g[-1] >= 0.5


def test_toy_thm1_rate_converges_from_below():
    rates = [build_thm1(toy(), n=n).rate_c for n in (128, 512, 2048)]
    assert rates[0] < rates[1] < rates[2] <= TOY_C
    assert TOY_C - rates[2] < (TOY_C - rates[0]) / 8


def test_thm1_rejects_zero_coalescence():
    with pytest.raises(ProfileInvalid):
        build_thm1(toy(pi=0.0))


def test_thm1_requires_beta_over_pi():
    p = RateProfile(1.0, Thm1Geometry(1.0), lambda r: np.ones_like(r), lambda r: -r, lambda r: 0.5 * (r <= 1))
    with pytest.raises(ProfileInvalid):
        build_thm1(p)


def test_thm1_rejects_small_a():
    with pytest.raises(InvalidParameter):
        build_thm1(toy(), a=0.5)


def test_thm3_linear_alpha():
    p = RateProfile(1.0, Thm3Geometry(1.0, 1.0), lambda r: np.asarray(r, dtype=float), lambda r: np.zeros_like(r))
    b = build_thm3(p, r2=2.0)
    assert b.rate_c == pytest.approx(1 / 8, rel=1e-12)
    assert b.a == 0.0


def _grw():
    h, c0 = 0.01, 0.007
    sh = math.sqrt(h)
    p = RateProfile(sh, Thm3Geometry(sh, sh), lambda r: c0 * np.minimum(r, sh) * sh, lambda r: np.zeros_like(r))
    return build_thm3(p, r2=1.0)


def test_thm3_gaussian_random_walk_matches_exact_integral():
    b = _grw()
    assert GRW_C * (1 - 1e-3) <= b.rate_c <= GRW_C


@pytest.mark.xfail(strict=True, reason="exact rate 2.9167e-5 is 10.06% above 2.65e-5; the build converges to it")
def test_thm3_gaussian_random_walk_within_ten_percent_of_c1h():
    assert abs(_grw().rate_c / 2.65e-5 - 1) <= 0.10


def test_thm3_rejects_b1_violation():
    p = RateProfile(1.0, Thm3Geometry(1.0, 1.0), lambda r: np.asarray(r) ** 2, lambda r: -np.asarray(r))
    with pytest.raises(ProfileInvalid):
        build_thm3(p)


def test_thm2_r1_and_rate():
    ly = LyapunovSpec(quad_V, 0.2, 1.0, lambda r: 0.5 * np.square(r))
    b = build_thm2(toy(), ly)
    assert b.r1 == pytest.approx(math.sqrt(40), abs=1e-9)
    assert b.a == pytest.approx(1.0 + 2 * b.M / 0.5, rel=1e-12)
    assert 0 < b.rate_c <= min(0.5 / 2, 0.2 / 4)
    assert b.distance.check() == []


def test_thm2_rejects_lambda_one():
    with pytest.raises(InvalidParameter):
        build_thm2(toy(), LyapunovSpec(quad_V, 1.0, 1.0, lambda r: 0.5 * np.square(r)))


def test_thm2_limit_agrees_with_thm1_within_factor_two():
    c1 = build_thm1(toy(), n=512).rate_c
    c2 = build_thm2(toy(), LyapunovSpec(quad_V, 0.9999, 1e-9, lambda r: 0.5 * np.square(r)), n=512).rate_c
    assert 0.5 <= c2 / c1 <= 2.0


def test_key_inequality_on_builds():
    p = toy()
    b = build_thm1(p)
    r = np.geomspace(1e-4, 10 * b.r2, 300)
    assert key_inequality_gap(p, b.distance, b.rate_c, r) <= 1e-8
    sh = 0.1
    p3 = RateProfile(sh, Thm3Geometry(sh, sh), lambda r: 0.007 * np.minimum(r, sh) * sh,
                     lambda r: np.where(np.asarray(r) < 1, 0.0, -0.01 * np.asarray(r)))
    b3 = build_thm3(p3)
    assert key_inequality_gap(p3, b3.distance, b3.rate_c, np.geomspace(1e-4, 10 * b3.r2, 300)) <= 1e-8


def test_key_inequality_with_positive_drift():
    sh = 0.1
    p = RateProfile(sh, Thm3Geometry(sh, sh), lambda r: 0.01 * np.minimum(r, sh) * sh,
                    lambda r: np.where(np.asarray(r) < 0.5, 1e-4 * np.asarray(r), -0.01 * np.asarray(r)))
    b = build_thm3(p, n=1024)
    assert b.r1 > 0
    assert key_inequality_gap(p, b.distance, b.rate_c, np.geomspace(1e-4, 10 * b.r2, 400)) <= 1e-8


def test_build_result_json(tmp_path):
    b = build_thm1(toy(), n=64)
    b.write(str(tmp_path / "rate.json"), str(tmp_path / "m.csv"))
    import json
    d = json.loads((tmp_path / "rate.json").read_text())
    assert set(d) == {"theorem", "a", "M", "r1", "r2", "c", "binding_term", "knots_csv_path"}


@given(st.floats(1.0, 3.0), st.floats(1.0, 3.0))
def test_rate_monotone_in_profile(sa, sb):
    # larger fluctuations never hurt; a weaker restoring drift never helps
    base = build_thm1(toy(), n=128).rate_c
    assert build_thm1(toy(alpha=sa), n=128).rate_c >= base * (1 - 1e-9)
    assert build_thm1(toy(slope=1 / sb), n=128).rate_c <= base * (1 + 1e-9)
