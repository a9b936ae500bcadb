import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratelab import InputError, Space, check_w_axioms, dist, w_combine
from ratelab.geometry import CorruptedWSpace, make_rng, unit_ball


def test_dist_examples():
    plane = Space(2, radius=10)
    assert dist(plane, (0, 0), (3, 4)) == 5
    assert dist(plane, (1.5, -2), (1.5, -2)) == 0
    assert dist(Space(1, radius=1), (1,), (-1,)) == 2


def test_w_combine_examples():
    sp = Space(2, radius=10)
    x, y = np.array([0.3, -1.0]), np.array([2.0, 5.0])
    np.testing.assert_array_equal(w_combine(sp, x, y, 0), x)
    np.testing.assert_allclose(w_combine(sp, (0, 0), (2, 0), 0.5), (1, 0))
    np.testing.assert_allclose(w_combine(sp, (0, 0), (4, 4), 0.25), (1, 1))


def test_w_combine_rejects_lambda_out_of_range():
    with pytest.raises(InputError):
        w_combine(Space(1), (0,), (1,), 1.5)


def test_dimension_mismatch_and_nonfinite_points():
    sp = Space(2)
    with pytest.raises(InputError):
        dist(sp, (0, 0, 0), (1, 1, 1))
    with pytest.raises(InputError):
        dist(sp, (np.nan, 0), (0, 0))


def test_diameter_bound_must_cover_ball():
    with pytest.raises(InputError):
        Space(2, radius=1, b=1)
    assert Space(2, radius=0.5).b == 1
    assert unit_ball(3).b == 2


def test_euclidean_ball_passes_axioms_and_cn():
    rep = check_w_axioms(unit_ball(3), n_samples=1000, tol=1e-9, check_cn=True)
    assert rep.passed
    assert set(rep.measured) == {"W1", "W2", "W3", "W4", "CN-"}


def test_weighted_ball_passes_axioms():
    sp = Space(2, radius=1, ambient="weighted-euclidean", weights=[1.0, 4.0])
    assert check_w_axioms(sp, n_samples=500).passed


def test_corrupted_w_violates_w2():
    rep = check_w_axioms(CorruptedWSpace(2), n_samples=500, tol=1e-9)
    assert rep.failed
    assert rep.measured["W2"] > 1e-3
    assert any(w["axiom"] == "W2" for w in rep.witnesses)


def test_corrupted_w2_violation_at_half():
    # (lam - lam^2) d(x, y) at lam = 1/2 against the genuine endpoint
    sp = CorruptedWSpace(1, radius=1)
    x, y = np.array([-1.0]), np.array([1.0])
    got = sp.dist(sp.w_combine(x, y, 0.5), x)
    assert got == pytest.approx(0.25 * 2)
    assert 0.5 * 2 - got == pytest.approx((0.5 - 0.25) * 2)


def test_samples_stay_in_ball():
    sp = Space(4, radius=0.7, center=[1, 0, 0, -1], b=2)
    pts = sp.sample(make_rng(3), 2000)
    assert sp.contains(pts)


def test_sampling_is_seed_deterministic():
    sp = unit_ball(2)
    np.testing.assert_array_equal(sp.sample(make_rng(5), 10), sp.sample(make_rng(5), 10))


coords = st.floats(min_value=-1, max_value=1, allow_nan=False)
points = st.tuples(coords, coords)
lams = st.floats(min_value=0, max_value=1)


@settings(max_examples=200, deadline=None)
@given(points, points, points, points, lams, lams)
def test_w_axioms_property(x, y, z, w, lam, mu):
    sp = Space(2, radius=2)
    x, y, z, w = map(np.array, (x, y, z, w))
    W = sp.w_combine
    d = sp.dist
    tol = 1e-9
    assert d(z, W(x, y, lam)) <= (1 - lam) * d(z, x) + lam * d(z, y) + tol
    assert abs(d(W(x, y, lam), W(x, y, mu)) - abs(lam - mu) * d(x, y)) <= tol
    assert d(W(x, y, lam), W(y, x, 1 - lam)) <= tol
    assert d(W(x, z, lam), W(y, w, lam)) <= (1 - lam) * d(x, y) + lam * d(z, w) + tol


@settings(max_examples=200, deadline=None)
@given(points, points, lams)
def test_w_combine_splits_distance(x, y, lam):
    sp = Space(2, radius=2)
    x, y = np.array(x), np.array(y)
    m = sp.w_combine(x, y, lam)
    assert sp.dist(x, m) == pytest.approx(lam * sp.dist(x, y), abs=1e-12)
    assert sp.dist(y, m) == pytest.approx((1 - lam) * sp.dist(x, y), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_projection_lands_in_ball(p):
    sp = unit_ball(2)
    assert sp.contains(sp.project(np.array(p)))
