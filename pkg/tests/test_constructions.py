import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nelab.body import (cone_angle, cone_deficits, deformation_gradients, interior_vertices,
                        morphism_gradients, morphism_stats)
from nelab.constructions import (DislocationParams, Regime, cone_mesh, develop, dipole_pairs,
                                 dislocation_block, dislocation_lattice, edge_loop,
                                 euclidean_triangulation, flat_disc, flat_square, holonomy,
                                 lattice_limit_layout, lattice_params, mesh_from_layout,
                                 prolong_grid, refine_grid, spherical_cap, vertex_loop)
from nelab.errors import BadParams, NotAStrip, NotClosed
from nelab.linmap import distortion_values

TWO_PI = 2 * math.pi


def test_flat_square_examples():
    m = flat_square(1, 1.0)
    assert (m.vertex_count, m.triangle_count) == (4, 2)
    assert m.total_area == pytest.approx(1.0, abs=1e-15)
    m = flat_square(8)
    assert np.max(np.abs(cone_deficits(m))) <= 1e-12
    with pytest.raises(BadParams):
        flat_square(0)


def test_cone_tip_angle():
    m = cone_mesh(0.8, 1.0, 64)
    assert cone_angle(m, 0) == pytest.approx(1.6 * math.pi, abs=2e-2)
    # chords keep every other vertex flat
    others = [v for v in interior_vertices(m) if v != 0]
    assert np.max(np.abs(m.angle_sums[others] - TWO_PI)) <= 1e-10
    with pytest.raises(BadParams):
        cone_mesh(1.0, 1.0, 16)
    with pytest.raises(BadParams):
        cone_mesh(-0.5, 1.0, 16)


def test_cone_to_flat_distortion():
    alpha = 0.8
    cone, flat = cone_mesh(alpha, 1.0, 64), flat_disc(1.0, 64)
    dis = distortion_values(morphism_gradients(cone, flat))
    away = np.all(cone.triangles != 0, axis=1)
    np.testing.assert_allclose(dis[away], abs(1 / alpha - 1), atol=5e-2)


@pytest.mark.parametrize("theta,d", [(0.3, 0.05), (0.1, 0.2), (0.6, 0.3), (0.45, 0.01)])
@pytest.mark.parametrize("refinement", [1, 2, 4])
def test_block_cone_angles_and_burgers(theta, d, refinement):
    p = DislocationParams(theta, d, 1.0)
    m = dislocation_block(p, refinement)
    (pm, pp), = dipole_pairs(m)
    assert cone_angle(m, pm) == pytest.approx(TWO_PI + 2 * theta, abs=1e-10)
    assert cone_angle(m, pp) == pytest.approx(TWO_PI - 2 * theta, abs=1e-10)
    flat = [v for v in interior_vertices(m) if v not in (pm, pp)]
    assert np.max(np.abs(m.angle_sums[flat] - TWO_PI), initial=0.0) <= 1e-10
    h = holonomy(m, edge_loop(m, pm, pp))
    assert abs(h.rotation_angle) <= 1e-10
    assert h.translation_norm == pytest.approx(2 * d * math.sin(theta), abs=1e-10)
    # clockwise loops around single disclinations return their deficits
    assert holonomy(m, vertex_loop(m, pm)).rotation_angle == pytest.approx(-2 * theta, abs=1e-10)
    assert holonomy(m, vertex_loop(m, pp)).rotation_angle == pytest.approx(2 * theta, abs=1e-10)


def test_block_params_validation():
    with pytest.raises(BadParams):
        DislocationParams(0.3, 2.0, 1.0)
    with pytest.raises(BadParams):
        DislocationParams(0.0, 0.1, 1.0)
    with pytest.raises(BadParams):
        dislocation_block(DislocationParams(0.3, 0.05, 1.0), 0)


def test_flat_loop_trivial_holonomy():
    m = flat_square(4)
    v = int(interior_vertices(m)[0])
    h = holonomy(m, vertex_loop(m, v))
    assert abs(h.rotation_angle) <= 1e-12 and h.translation_norm <= 1e-12


def test_holonomy_errors():
    m = flat_square(3)
    with pytest.raises(NotAStrip):
        develop(m, [0, 5])
    with pytest.raises(NotClosed):
        holonomy(m, [0, 1, 6])
    with pytest.raises(NotAStrip):
        holonomy(m, [0])


def test_lattice_params_regimes():
    theta0, eps = 0.3, 0.5
    for n in (1, 2, 4, 8):
        b = 2 * math.sin(theta0) / n ** 2
        mean = lattice_params(n, Regime.MEAN, theta0, eps)
        uni = lattice_params(n, Regime.UNIFORM, theta0, eps)
        assert mean.theta == theta0
        assert uni.theta == pytest.approx(theta0 * n ** -eps)
        assert mean.burgers == pytest.approx(b, rel=1e-14)
        assert uni.burgers == pytest.approx(b, rel=1e-14)
    with pytest.raises(BadParams):
        lattice_params(2, Regime.MEAN, 1.0, 0.5)
    with pytest.raises(BadParams):
        lattice_params(2, Regime.MEAN, 0.3, 1.0)


def test_single_block_lattice():
    m, _ = dislocation_lattice(1, Regime.MEAN, 0.3, 0.5)
    p = lattice_params(1, Regime.MEAN, 0.3, 0.5)
    (a, b), = dipole_pairs(m)
    assert holonomy(m, edge_loop(m, a, b)).translation_norm == pytest.approx(2 * p.d * math.sin(0.3), abs=1e-12)


@pytest.mark.parametrize("mode", list(Regime))
def test_lattice_burgers_and_limit(mode):
    b0 = 2 * math.sin(0.3)
    for n in (2, 4):
        mesh, limit = dislocation_lattice(n, mode, 0.3, 0.5)
        pairs = dipole_pairs(mesh)
        assert len(pairs) == n * n
        total = sum(holonomy(mesh, edge_loop(mesh, a, b)).translation_norm for a, b in pairs)
        assert total == pytest.approx(b0, abs=1e-9)
        assert np.max(np.abs(cone_deficits(limit))) <= 1e-10
        assert limit.total_area == pytest.approx(1.0, abs=1e-12)
        P = lattice_limit_layout(n, mode, 0.3, 0.5)
        assert np.max(distortion_values(deformation_gradients(limit, P))) <= 1e-10


def test_lattice_trends():
    uni = [morphism_stats(*dislocation_lattice(n, Regime.UNIFORM, 0.3, 0.5)[::-1]) for n in (2, 4, 8)]
    mean = [morphism_stats(*dislocation_lattice(n, Regime.MEAN, 0.3, 0.5)[::-1]) for n in (2, 4, 8)]
    assert uni[0].sup_dis > uni[1].sup_dis > uni[2].sup_dis
    assert mean[0].mean_dis > mean[1].mean_dis > mean[2].mean_dis
    assert min(s.sup_dis for s in mean) >= 0.2


def test_euclidean_triangulation_examples():
    flat = flat_square(6)
    m = euclidean_triangulation(lambda x, y: 0 * x, 6)
    np.testing.assert_allclose(m.ref_lengths, flat.ref_lengths, atol=1e-12)
    m2 = euclidean_triangulation(lambda x, y: 0 * x + math.log(2), 6)
    np.testing.assert_allclose(m2.ref_lengths, 2 * flat.ref_lengths, rtol=1e-12)
    with pytest.raises(BadParams):
        euclidean_triangulation(spherical_cap, 1)


def test_spherical_cap_refinement():
    meshes = {n: euclidean_triangulation(spherical_cap, n) for n in (8, 16, 32, 64)}
    d = [np.max(np.abs(cone_deficits(meshes[n]))) for n in (8, 16, 32)]
    assert d[0] / d[1] >= 2 and d[1] / d[2] >= 2
    sup = [morphism_stats(refine_grid(meshes[n], n), meshes[2 * n]).sup_dis for n in (8, 16, 32)]
    assert sup[0] > sup[1] > sup[2]


def test_refine_grid_preserves_surface():
    m = euclidean_triangulation(spherical_cap, 4)
    r = refine_grid(m, 4)
    assert r.total_area == pytest.approx(m.total_area, rel=1e-14)
    assert np.max(np.abs(r.angle_sums[~r.boundary_mask] - TWO_PI)[:]) <= np.max(np.abs(cone_deficits(m))) + 1e-12
    P = np.random.default_rng(0).random((25, 2))
    Q = prolong_grid(P, 4)
    assert np.array_equal(Q.reshape(9, 9, 2)[::2, ::2].reshape(-1, 2), P)
    with pytest.raises(BadParams):
        refine_grid(m, 5)


def test_mesh_from_layout_orients():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m = mesh_from_layout([[0, 2, 1]], P)
    assert m.total_area == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.7), st.floats(0.01, 0.4), st.integers(1, 3))
def test_block_properties(theta, d, refinement):
    if 2 * d * math.sin(theta) >= 1 or d * math.cos(theta) >= 1:
        return
    m = dislocation_block(DislocationParams(theta, d, 1.0), refinement)
    assert abs(np.sum(cone_deficits(m))) <= 1e-10
    loop = edge_loop(m, *dipole_pairs(m)[0])
    h1, h2 = holonomy(m, loop), holonomy(m, loop + loop)
    assert abs(h2.rotation_angle) <= 1e-10
    assert h2.translation_norm == pytest.approx(2 * h1.translation_norm, abs=1e-10)
