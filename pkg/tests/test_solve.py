import numpy as np
import pytest

from nelab import _parallel
from nelab.body import Configuration, area_centroid, deformation_gradients
from nelab.constructions import (DislocationParams, Regime, cone_mesh, dislocation_block,
                                 dislocation_lattice, flat_square, spherical_cap)
from nelab.energy import EnergySettings, energy_value
from nelab.errors import ClosedSurface, NonDifferentiable
from nelab.linmap import distortion_values, rotation
from nelab.solve import (SolveOptions, aligned_lp_distance, gamma_experiment, initial_configuration,
                         lp_distance, minimize, procrustes_rotation, triangulation_experiment,
                         tutte_layout)
from nelab.body import BodyMesh


def test_options_validation():
    for kw in ({"max_iters": 0}, {"grad_tol": 0.0}, {"armijo_c": 1.0}, {"backtrack": 0.0}, {"seed": -1}):
        with pytest.raises(ValueError):
            SolveOptions(**kw)


def test_initial_configuration():
    m = flat_square(2)
    u = initial_configuration(m, 3)
    F = deformation_gradients(m, u.positions)
    assert np.all(np.linalg.det(F) > 0)
    assert np.array_equal(u.positions, initial_configuration(m, 3).positions)
    assert not np.array_equal(u.positions, initial_configuration(m, 4).positions)
    jitter = u.positions - tutte_layout(m)
    assert np.max(np.abs(jitter)) <= 1e-2 * m.mean_edge_length
    block = dislocation_block(DislocationParams(0.3, 0.05, 1.0), 2)
    assert np.isfinite(energy_value(block, initial_configuration(block).positions, EnergySettings()))


def test_closed_surface_rejected():
    # octahedron: every edge has two triangles
    tri = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1], [5, 2, 1], [5, 3, 2], [5, 4, 3], [5, 1, 4]]
    m = BodyMesh(6, tri, np.ones((8, 3)))
    with pytest.raises(ClosedSurface):
        initial_configuration(m)


def test_flat_square_minimizer_is_isometric():
    m = flat_square(4)
    res = minimize(m, initial_configuration(m, 1))
    assert res.converged and res.reason == "grad_tol"
    assert res.report.total <= 1e-10
    assert np.max(distortion_values(deformation_gradients(m, res.configuration.positions))) <= 1e-5


@pytest.mark.parametrize("precondition", [True, False])
def test_cone_minimum_positive_and_monotone(precondition):
    m = cone_mesh(0.8, 1.0, 32)
    opts = SolveOptions(precondition=precondition, max_iters=5000 if precondition else 300)
    res = minimize(m, initial_configuration(m, 0), opts=opts)
    assert res.report.total > 1e-3
    E = np.array(res.energies)
    assert np.all(np.diff(E) <= 0)
    c = opts.armijo_c
    assert np.all(E[1:] <= E[:-1] + c * np.array(res.steps) * np.array(res.slopes))
    assert np.max(np.abs(area_centroid(m, res.configuration.positions))) <= 1e-12


def test_cone_regression_anchor():
    # the problem is non-convex: seeds can land in different local minima
    m = cone_mesh(0.8, 1.0, 32)
    res = minimize(m, initial_configuration(m, 0))
    assert res.report.total == pytest.approx(0.0319980779305, rel=1e-8)


def test_max_iters_reported():
    m = cone_mesh(0.8, 1.0, 16)
    res = minimize(m, initial_configuration(m, 0), opts=SolveOptions(max_iters=3))
    assert res.iterations == 3 and not res.converged and res.reason == "max_iters"
    conf, report, iters = res
    assert iters == 3 and report is res.report


def test_rejects_p_below_two():
    m = flat_square(2)
    with pytest.raises(NonDifferentiable):
        minimize(m, initial_configuration(m), EnergySettings(p=1.5))


def test_p4_flat():
    m = flat_square(4)
    res = minimize(m, initial_configuration(m, 2), EnergySettings(p=4))
    assert res.report.total <= 1e-10


def test_thread_count_bit_identical():
    m = cone_mesh(0.8, 1.0, 32)
    opts = SolveOptions(max_iters=30)
    _parallel.set_threads(1)
    a = minimize(m, initial_configuration(m, 9), opts=opts)
    _parallel.set_threads(4)
    b = minimize(m, initial_configuration(m, 9), opts=opts)
    assert a.configuration.positions.tobytes() == b.configuration.positions.tobytes()


def test_procrustes_recovers_rotation(rng):
    m = flat_square(3)
    P = rng.random((16, 2))
    P -= area_centroid(m, P)
    Q = P @ rotation(0.9).T
    R = procrustes_rotation(m.vertex_masses, Q, P)
    np.testing.assert_allclose(Q @ R.T, P, atol=1e-13)
    assert aligned_lp_distance(m, Q + 3.0, P, 2.0) <= 1e-12


def test_lp_distance_constant_shift():
    m = flat_square(3, 2.0)
    P = np.zeros((16, 2))
    # |shift| = 5 over area 4: (4 * 5^p)^(1/p)
    for p in (2.0, 3.0):
        assert lp_distance(m, P + [3.0, 4.0], P, p) == pytest.approx((4 * 5 ** p) ** (1 / p))


def test_gamma_experiment_small():
    res = gamma_experiment(lambda n: dislocation_lattice(n, Regime.UNIFORM, 0.3, 0.5), [4, 2])
    assert [r.n for r in res.rows] == [2, 4]
    E = res.column("min_energy")
    assert E[1] < E[0]
    assert all(r.converged for r in res.rows)
    assert all(np.isfinite(r.minimizer_lp_dist) for r in res.rows)
    cold = gamma_experiment(lambda n: dislocation_lattice(n, Regime.UNIFORM, 0.3, 0.5), [2, 4],
                            cold_start=True)
    assert cold.column("min_energy") == pytest.approx(E, rel=1e-6)


def test_triangulation_experiment_small():
    res = triangulation_experiment(spherical_cap, [4, 8], n_ref=16)
    gaps = [abs(r.min_energy - r.limit_energy) for r in res.rows]
    assert gaps[0] > gaps[1]
    with pytest.raises(ValueError):
        triangulation_experiment(spherical_cap, [3], n_ref=16)
