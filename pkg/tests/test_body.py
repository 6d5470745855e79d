import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nelab.body import (BodyMesh, Configuration, Convergence, MorphismStats, classify_convergence,
                        cone_angle, deformation_gradient, flatten_triangle, format_bodyconf,
                        format_bodymesh, graph_diameter, interior_vertices, morphism_stats,
                        parse_bodyconf, parse_bodymesh, triangle_area)
from nelab.checks import random_planar_mesh
from nelab.constructions import flat_square, flat_square_layout
from nelab.errors import (BadMesh, BadTriangle, BoundaryVertex, ConnectivityMismatch,
                          EmptySequence, FormatError)
from nelab.linmap import distortion, signed_svd

SQ2 = math.sqrt(2.0)


def test_flatten_examples():
    Q = flatten_triangle((1, 1, 1))
    np.testing.assert_allclose(Q, [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]], atol=1e-15)
    Q = flatten_triangle((3, 4, 5))
    np.testing.assert_allclose(Q, [[0, 0], [3, 0], [3, 4]], atol=1e-12)
    with pytest.raises(BadTriangle):
        flatten_triangle((1, 1, 2.001))


def test_areas():
    eq = BodyMesh(3, [[0, 1, 2]], [[1, 1, 1]])
    assert triangle_area(eq, 0) == pytest.approx(math.sqrt(3) / 4, abs=1e-15)
    assert triangle_area(BodyMesh(3, [[0, 1, 2]], [[3, 4, 5]]), 0) == 6.0
    sq = BodyMesh(4, [[0, 1, 2], [0, 2, 3]], [[1, 1, SQ2], [SQ2, 1, 1]])
    assert sq.total_area == pytest.approx(1.0, abs=1e-15)


def test_mesh_validation():
    with pytest.raises(BadMesh, match="orientation"):
        BodyMesh(4, [[0, 1, 2], [0, 3, 2]], [[1, 1, SQ2], [1, 1, SQ2]])
    with pytest.raises(BadMesh, match="mismatch"):
        BodyMesh(4, [[0, 1, 2], [0, 2, 3]], [[1, 1, SQ2], [1.4, 1, 1]])
    with pytest.raises(BadMesh, match="disconnected"):
        BodyMesh(6, [[0, 1, 2], [3, 4, 5]], [[1, 1, 1], [1, 1, 1]])
    with pytest.raises(BadMesh):
        BodyMesh(4, [[0, 1, 2]], [[1, 1, 1]])
    with pytest.raises(BadTriangle):
        BodyMesh(3, [[0, 1, 2]], [[1, 1, 3]])


def test_cone_angles_flat_grid():
    m = flat_square(8)
    for v in interior_vertices(m):
        assert cone_angle(m, v) == pytest.approx(2 * math.pi, abs=1e-12)
    with pytest.raises(BoundaryVertex):
        cone_angle(m, 0)


def test_deformation_gradient_examples():
    m = flat_square(3)
    P = flat_square_layout(3)
    for t in range(m.triangle_count):
        assert distortion(deformation_gradient(m, Configuration(P), t)) <= 1e-12
        F = deformation_gradient(m, Configuration(2 * P), t)
        assert signed_svd(F).sigma == pytest.approx((2.0, 2.0), abs=1e-12)
        F0 = deformation_gradient(m, Configuration(np.zeros_like(P)), t)
        assert distortion(F0) == pytest.approx(SQ2)
    with pytest.raises(ConnectivityMismatch):
        deformation_gradient(m, Configuration(P[:-1]), 0)


def test_morphism_stats_scaled():
    m = flat_square(4)
    s = morphism_stats(m, m.scaled(1.1))
    assert s.sup_dis == pytest.approx(SQ2 * 0.1, abs=1e-12)
    assert s.mean_dis == pytest.approx(SQ2 * 0.1 * m.total_area, abs=1e-12)
    assert s.vol_ratio_dev == pytest.approx(0.21, abs=1e-12)
    assert s.global_dis == pytest.approx(0.1 * graph_diameter(m), abs=1e-12)
    assert s.bilip == pytest.approx(1.1)
    s = morphism_stats(flat_square(8), flat_square(8).scaled(1.05))
    assert s.sup_dis == pytest.approx(SQ2 * 0.05, abs=1e-12)


def test_morphism_stats_identity_and_mismatch():
    m = flat_square(3)
    assert morphism_stats(m, m) == MorphismStats(0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(ConnectivityMismatch):
        morphism_stats(m, flat_square(4))


def test_mean_bounded_by_sup(rng):
    for _ in range(20):
        src, _ = random_planar_mesh(rng, 3)
        tgt, _ = random_planar_mesh(rng, 3)
        s = morphism_stats(src, tgt)
        assert s.mean_dis <= s.sup_dis * src.total_area + 1e-15
        assert all(np.isfinite(s.as_tuple())) and min(s.as_tuple()) >= 0


def _stats(sup, mean, bilip=1.0, vol=0.0, glob=0.0):
    return MorphismStats(sup, mean, 0.0, bilip, vol, glob)


def test_classify_examples():
    assert classify_convergence([_stats(s, 0.0) for s in (0.1, 0.01, 0.001)]) is Convergence.UNIFORM
    assert classify_convergence([_stats(0.5, m, 3.0) for m in (0.1, 0.01, 0.001)]) is Convergence.MEAN
    assert classify_convergence([_stats(0.5, 0.4)] * 3) is Convergence.NEITHER
    # bilip above the bound rules out mean convergence
    assert classify_convergence([_stats(0.5, m, 5.0) for m in (0.1, 0.01, 0.001)]) is Convergence.NEITHER
    with pytest.raises(EmptySequence):
        classify_convergence([])


def test_io_roundtrip_bit_exact(rng):
    m, P = random_planar_mesh(rng, 3)
    m2 = parse_bodymesh(format_bodymesh(m))
    assert np.array_equal(m2.triangles, m.triangles)
    assert np.array_equal(m2.ref_lengths, m.ref_lengths)
    u = Configuration(P * math.pi)
    assert np.array_equal(parse_bodyconf(format_bodyconf(u)).positions, u.positions)
    text = format_bodymesh(m)
    assert text.endswith("\n") and "\r" not in text and " \n" not in text


@pytest.mark.parametrize("text", [
    "bodymesh 1\nV 3\nT 2\n0 1 2 1 1 1\n",
    "bodymesh 1\nV 3\nT 1\n0 1 2 1 nan 1\n",
    "bodymesh 2\nV 3\nT 1\n0 1 2 1 1 1\n",
    "bodymesh 1\nV 3\nT 1\n0 1 2 1 1\n",
])
def test_bodymesh_parse_errors(text):
    with pytest.raises(FormatError):
        parse_bodymesh(text)


@pytest.mark.parametrize("text", ["bodyconf 1\nV 2\n0 0\n", "bodyconf 1\nV 1\ninf 0\n"])
def test_bodyconf_parse_errors(text):
    with pytest.raises(FormatError):
        parse_bodyconf(text)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.floats(0.1, 10.0))
def test_heron_and_scaling(n, s):
    m = flat_square(n, s)
    assert m.total_area == pytest.approx(s * s, rel=1e-12)
    stats = morphism_stats(m, m.scaled(1.5))
    assert stats.global_dis == pytest.approx(0.5 * graph_diameter(m), rel=1e-12)
