import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nelab.errors import DegenerateMap
from nelab.linmap import (EUCLIDEAN, InnerProduct2, LinMap2, closest_special_isometry, distortion,
                          dist_to_so_set, frobenius_norm, is_special_isometry, op_dist_to_SO,
                          operator_norm, random_inner_product, random_matrix, rotation,
                          sampled_distortion, sampled_op_dist, signed_svd, so_set_hausdorff_oracle,
                          special_isometry)

entries = st.floats(-3, 3, allow_nan=False)
matrices = st.lists(entries, min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))


@st.composite
def metrics(draw):
    a = draw(st.floats(0.2, 3.0))
    c = draw(st.floats(0.2, 3.0))
    b = draw(st.floats(-0.9, 0.9)) * math.sqrt(a * c)
    return InnerProduct2(np.array([[a, b], [b, c]]))


def test_inner_product_validation():
    with pytest.raises(ValueError):
        InnerProduct2(np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(ValueError):
        InnerProduct2(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_norm_examples():
    assert frobenius_norm(LinMap2(np.eye(2))) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert frobenius_norm(LinMap2(np.diag([3.0, 4.0]))) == pytest.approx(5.0)
    g = InnerProduct2(np.diag([4.0, 1.0]))
    # orthonormal domain basis e1/2, e2 maps to vectors of length 1/2 and 1
    assert frobenius_norm(LinMap2(np.eye(2), g, EUCLIDEAN)) == pytest.approx(math.sqrt(1.25), abs=1e-14)
    assert operator_norm(LinMap2(np.eye(2))) == pytest.approx(1.0)
    assert operator_norm(LinMap2(np.diag([3.0, 4.0]))) == pytest.approx(4.0)


def test_signed_svd_examples():
    s = signed_svd(LinMap2(np.diag([2.0, 1.0])))
    assert s.sigma == pytest.approx((2.0, 1.0))
    np.testing.assert_allclose(s.rotation_factor, np.eye(2), atol=1e-15)
    s = signed_svd(LinMap2(np.diag([1.0, -1.0])))
    assert s.sigma == pytest.approx((1.0, -1.0))
    R = rotation(0.7)
    s = signed_svd(LinMap2(R))
    assert s.sigma == pytest.approx((1.0, 1.0))
    np.testing.assert_allclose(s.rotation_factor, R, atol=1e-15)


def test_degenerate_closest_rotation():
    A = LinMap2(np.diag([1.0, -1.0]))
    assert signed_svd(A).rotation_factor is None
    with pytest.raises(DegenerateMap):
        closest_special_isometry(A)


def test_distortion_examples():
    assert distortion(LinMap2(np.eye(2))) == 0.0
    assert distortion(LinMap2(np.diag([2.0, 1.0]))) == pytest.approx(1.0, abs=1e-15)
    assert op_dist_to_SO(LinMap2(np.eye(2))) == pytest.approx(0.0, abs=1e-15)
    assert op_dist_to_SO(LinMap2(np.diag([2.0, 1.0]))) == pytest.approx(1.0)
    assert op_dist_to_SO(LinMap2(np.diag([1.0, -1.0]))) == pytest.approx(2.0)
    # sampled oracles agree on the reflection, where the closest rotation is not unique
    assert sampled_op_dist(LinMap2(np.diag([1.0, -1.0]))) == pytest.approx(2.0, abs=1e-3)


def test_distortion_oracle_random(rng):
    for _ in range(200):
        A = LinMap2(random_matrix(rng), random_inner_product(rng), random_inner_product(rng))
        assert distortion(A) == pytest.approx(sampled_distortion(A, 720), abs=1e-4)
        assert op_dist_to_SO(A) == pytest.approx(sampled_op_dist(A, 2000), abs=1e-2)


def test_raw_grid_oracle_is_first_order(rng):
    A = LinMap2(rotation(0.3) @ np.diag([1.001, 0.999]))
    raw = sampled_distortion(A, 720, refine=False)
    assert raw >= distortion(A) - 1e-15
    assert abs(sampled_distortion(A, 720) - distortion(A)) < abs(raw - distortion(A))


def test_hausdorff_examples():
    assert so_set_hausdorff_oracle(EUCLIDEAN, EUCLIDEAN, LinMap2(np.eye(2)), 360) == pytest.approx(0.0, abs=1e-12)
    L = LinMap2(np.diag([2.0, 1.0]))
    assert so_set_hausdorff_oracle(EUCLIDEAN, EUCLIDEAN, L, 2000) == pytest.approx(1.0, abs=2e-3)
    with pytest.raises(DegenerateMap):
        so_set_hausdorff_oracle(EUCLIDEAN, EUCLIDEAN, LinMap2(np.diag([1.0, -1.0])), 360)
    with pytest.raises(ValueError):
        so_set_hausdorff_oracle(EUCLIDEAN, EUCLIDEAN, L, 100)


def test_hausdorff_random(rng):
    for _ in range(10):
        g, h = random_inner_product(rng), random_inner_product(rng)
        L = LinMap2(random_matrix(rng, positive=True), g, h)
        assert so_set_hausdorff_oracle(g, h, L, 720) == pytest.approx(op_dist_to_SO(L), abs=5e-3)


def test_dist_to_so_set_sampled(rng):
    # distance in a general domain metric against direct sampling of Rot(phi) m^(1/2)
    for _ in range(50):
        m = random_inner_product(rng)
        X = LinMap2(random_matrix(rng), m, EUCLIDEAN)
        phis = 2 * np.pi * np.arange(4000) / 4000
        best = min(np.linalg.norm((X.entries - rotation(t) @ m.sqrt) @ m.inv_sqrt) for t in phis)
        assert dist_to_so_set(X, m) == pytest.approx(best, abs=5e-3)


@settings(max_examples=200, deadline=None)
@given(matrices, metrics(), metrics())
def test_norm_sandwich(M, g, h):
    A = LinMap2(M, g, h)
    op, fr = operator_norm(A), frobenius_norm(A)
    assert op <= fr + 1e-12
    assert fr <= 2 * op + 1e-12


@settings(max_examples=200, deadline=None)
@given(matrices, metrics(), metrics())
def test_signed_spectrum_properties(M, g, h):
    A = LinMap2(M, g, h)
    s1, s2 = signed_svd(A).sigma
    det = np.linalg.det(A.frame_matrix)
    assert s1 >= 0 and s1 >= abs(s2) - 1e-12
    assert s1 * s2 == pytest.approx(det, abs=1e-9)
    R = signed_svd(A).rotation_factor
    if R is not None and s1 + s2 > 1e-6:
        assert is_special_isometry(R, g, h, 1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(-math.pi, math.pi), metrics(), metrics())
def test_isometries_have_zero_distortion(angle, g, h):
    R = special_isometry(angle, g, h)
    assert is_special_isometry(R, g, h)
    assert distortion(LinMap2(R, g, h)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(matrices, st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_isometry_invariance(M, a, b):
    d = distortion(LinMap2(M))
    assert distortion(LinMap2(M @ rotation(a))) == pytest.approx(d, abs=1e-12)
    assert distortion(LinMap2(rotation(b) @ M)) == pytest.approx(d, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_closest_rotation_minimizes(M):
    A = LinMap2(M)
    s = signed_svd(A)
    if s.rotation_factor is None or sum(s.sigma) < 1e-3:
        return
    d = np.linalg.norm(M - s.rotation_factor)
    assert d == pytest.approx(distortion(A), abs=1e-12)
    for t in np.linspace(-np.pi, np.pi, 64):
        assert np.linalg.norm(M - rotation(t)) >= d - 1e-12
