"""Named property checks, one per documented invariant, shared by the CLI and tests."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _parallel
from .body import (BodyMesh, Configuration, area_centroid, cone_deficits, graph_diameter,
                   morphism_stats)
from .constructions import (DislocationParams, Regime, cone_mesh, dipole_pairs, dislocation_block,
                            dislocation_lattice, edge_loop, euclidean_triangulation, flat_disc,
                            flat_square, flat_square_layout, grid_triangles, holonomy,
                            mesh_from_layout, spherical_cap, vertex_loop)
from .energy import (EnergySettings, density, energy_and_gradient, energy_value,
                     p_regularity_check)
from .linmap import (EUCLIDEAN, LinMap2, dist_to_so_set, distortion, frobenius_norm,
                     op_dist_to_SO, operator_norm, random_inner_product, random_matrix, rotation,
                     sampled_distortion, so_set_hausdorff_oracle, special_isometry)
from .solve import SolveOptions, gamma_experiment, initial_configuration, minimize, rng_for


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


_REGISTRY: list[tuple[str, Callable[[], tuple[bool, str]], bool]] = []


def check(name: str, experiment: bool = False):
    def deco(fn):
        _REGISTRY.append((name, fn, experiment))
        return fn
    return deco


def check_names(experiments: bool = False) -> list[str]:
    return [n for n, _, e in _REGISTRY if experiments or not e]


def run_checks(names=None, experiments: bool = False):
    """Yield a :class:`CheckResult` per selected check, in registration order."""
    wanted = set(names) if names else None
    if wanted:
        unknown = wanted - {n for n, _, _ in _REGISTRY}
        if unknown:
            raise KeyError(f"unknown check(s): {sorted(unknown)}")
    for name, fn, exp in _REGISTRY:
        if wanted is not None:
            if name not in wanted:
                continue
        elif exp and not experiments:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


def _rng(stream: int) -> np.random.Generator:
    return rng_for(20240601, stream)


def _random_map(rng, scale=1.5, positive=False) -> LinMap2:
    return LinMap2(random_matrix(rng, scale, positive), random_inner_product(rng), random_inner_product(rng))


# -- linmap --------------------------------------------------------------------

@check("linmap.norm_sandwich")
def _norm_sandwich():
    rng = _rng(1)
    worst = -np.inf
    for _ in range(10_000):
        A = _random_map(rng)
        op, fr = operator_norm(A), frobenius_norm(A)
        worst = max(worst, op - fr, fr - 2.0 * op)
    return worst <= 1e-12, f"max violation {worst:.3g}"


@check("linmap.distortion_zero_on_SO")
def _dis_zero():
    rng = _rng(2)
    worst = 0.0
    for _ in range(1000):
        g, h = random_inner_product(rng), random_inner_product(rng)
        R = special_isometry(rng.uniform(-np.pi, np.pi), g, h)
        worst = max(worst, distortion(LinMap2(R, g, h)))
    return worst <= 1e-12, f"max Dis {worst:.3g}"


@check("linmap.distortion_oracle")
def _dis_oracle():
    rng = _rng(3)
    worst = 0.0
    for _ in range(1000):
        A = _random_map(rng)
        worst = max(worst, abs(distortion(A) - sampled_distortion(A, 720)))
    return worst <= 1e-4, f"max |closed form - sampled| {worst:.3g}"


@check("linmap.lemma_hausdorff_identity")
def _hausdorff():
    rng = _rng(4)
    worst = 0.0
    for _ in range(100):
        g, h = random_inner_product(rng), random_inner_product(rng)
        L = LinMap2(random_matrix(rng, 1.5, positive=True), g, h)
        worst = max(worst, abs(so_set_hausdorff_oracle(g, h, L, 720) - op_dist_to_SO(L)))
    return worst <= 5e-3, f"max |Hausdorff - op dist| {worst:.3g}"


def lemma_composition_margin(A: LinMap2, L: LinMap2, k: float = 2.0) -> float:
    """``(|A| + k) Dis L - |dist(A L, SO(L*h, e)) - dist(A, SO(h, e))|``."""
    AL = LinMap2(A.entries @ L.entries, L.domain_metric, EUCLIDEAN)
    lhs = abs(dist_to_so_set(AL, L.domain_metric) - dist_to_so_set(A, A.domain_metric))
    return (frobenius_norm(A) + k) * distortion(L) - lhs


def _composition_samples(rng, count):
    for i in range(count):
        g, h = random_inner_product(rng), random_inner_product(rng)
        if i % 2:
            # near-isometries stress the small-Dis end of the inequality
            R = special_isometry(rng.uniform(-np.pi, np.pi), g, h)
            L = LinMap2(R @ (np.eye(2) + 0.05 * rng.standard_normal((2, 2))), g, h)
        else:
            L = LinMap2(random_matrix(rng, 1.0, positive=True), g, h)
        A = LinMap2(random_matrix(rng, 2.0), h, EUCLIDEAN)
        yield A, L


@check("linmap.lemma_composition_inequality")
def _composition():
    worst = min(lemma_composition_margin(A, L) for A, L in _composition_samples(_rng(5), 1000))
    return worst >= -1e-10, f"min margin {worst:.3g}"


@check("linmap.isometry_invariance")
def _iso_inv():
    rng = _rng(6)
    worst = 0.0
    for _ in range(1000):
        A = LinMap2(random_matrix(rng))
        Q = rotation(rng.uniform(-np.pi, np.pi))
        worst = max(worst, abs(distortion(LinMap2(A.entries @ Q)) - distortion(A)))
    return worst <= 1e-12, f"max change {worst:.3g}"


# -- body ------------------------------------------------------------------------

def random_planar_mesh(rng, n: int | None = None, jitter: float = 0.25) -> tuple[BodyMesh, np.ndarray]:
    """Grid mesh with a jittered planar reference layout; returns the mesh and that layout."""
    n = int(rng.integers(2, 5)) if n is None else n
    P = flat_square_layout(n) + rng.uniform(-jitter, jitter, ((n + 1) ** 2, 2)) / n
    return mesh_from_layout(grid_triangles(n), P), P


@check("body.heron_matches_cross_product")
def _heron():
    rng = _rng(7)
    worst = 0.0
    for _ in range(50):
        m, _ = random_planar_mesh(rng)
        Q = m.charts
        d1, d2 = Q[:, 1] - Q[:, 0], Q[:, 2] - Q[:, 0]
        cross = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        worst = max(worst, float(np.max(np.abs(cross - m.areas))))
    return worst <= 1e-12, f"max |Heron - cross| {worst:.3g}"


@check("body.self_stats_zero")
def _self_stats():
    meshes = [flat_square(3), cone_mesh(0.8, 1.0, 16),
              dislocation_block(DislocationParams(0.3, 0.05, 1.0), 2)]
    # bilip is max(|dF|, |dF^-1|), whose identity value is 1
    stats = [morphism_stats(m, m) for m in meshes]
    worst = max(max(s.sup_dis, s.mean_dis, s.mean_dis_inverse, s.vol_ratio_dev, s.global_dis) for s in stats)
    ok = worst == 0.0 and all(s.bilip == 1.0 for s in stats)
    return ok, f"max distortion stat {worst:.3g}, bilip {[s.bilip for s in stats]}"


@check("body.reverse_mean_trend")
def _reverse_mean():
    stats = [morphism_stats(*dislocation_lattice(n, Regime.MEAN, 0.3, 0.5)[::-1]) for n in (2, 4, 8)]
    inv = [s.mean_dis_inverse for s in stats]
    ok = inv[0] > inv[1] > inv[2] and max(s.bilip for s in stats) < 4.0
    return ok, "mean_dis_inverse " + ", ".join(f"{v:.4g}" for v in inv)


@check("body.block_deficit_sum")
def _deficit_sum():
    worst = 0.0
    for th, d in ((0.3, 0.05), (0.1, 0.2), (0.6, 0.3)):
        for r in (1, 3):
            worst = max(worst, abs(float(np.sum(cone_deficits(dislocation_block(DislocationParams(th, d, 1.0), r))))))
    return worst <= 1e-10, f"max |sum of deficits| {worst:.3g}"


@check("body.global_dis_scaling")
def _global_scaling():
    worst = 0.0
    for m in (flat_square(4), cone_mesh(0.7, 1.0, 12)):
        for s in (0.5, 1.3, 2.0):
            got = morphism_stats(m, m.scaled(s)).global_dis
            worst = max(worst, abs(got - abs(s - 1.0) * graph_diameter(m)))
    return worst <= 1e-10, f"max error {worst:.3g}"


# -- constructions -------------------------------------------------------------------

@check("constructions.generated_meshes_valid")
def _valid():
    # BodyMesh validates itself; building is the check
    built = [flat_square(5), flat_disc(1.0, 24), cone_mesh(1.2, 2.0, 16),
             dislocation_block(DislocationParams(0.3, 0.05, 1.0), 3),
             *dislocation_lattice(4, Regime.UNIFORM, 0.3, 0.5),
             euclidean_triangulation(spherical_cap, 8)]
    return True, f"{len(built)} meshes"


@check("constructions.block_gauss_bonnet")
def _gauss_bonnet():
    return _deficit_sum()


@check("constructions.lattice_burgers_conservation")
def _burgers():
    theta0 = 0.3
    b0 = 2.0 * math.sin(theta0)
    worst = 0.0
    for mode in Regime:
        for n in (1, 2, 4):
            mesh, _ = dislocation_lattice(n, mode, theta0, 0.5)
            pairs = dipole_pairs(mesh)
            if len(pairs) != n * n:
                return False, f"{mode.value} n={n}: found {len(pairs)} dipoles"
            total = sum(holonomy(mesh, edge_loop(mesh, a, b)).translation_norm for a, b in pairs)
            worst = max(worst, abs(total - b0))
    return worst <= 1e-9, f"max |total Burgers - b0| {worst:.3g}"


@check("constructions.triangulation_defect_halving")
def _defect_halving():
    d = [float(np.max(np.abs(cone_deficits(euclidean_triangulation(spherical_cap, n))))) for n in (8, 16, 32)]
    ratios = [a / b for a, b in zip(d, d[1:])]
    return min(ratios) >= 2.0, "defect ratios " + ", ".join(f"{r:.3f}" for r in ratios)


@check("constructions.holonomy_composition")
def _holonomy_twice():
    mesh = dislocation_block(DislocationParams(0.3, 0.05, 1.0), 2)
    worst = 0.0
    loops = [edge_loop(mesh, *dipole_pairs(mesh)[0])] + [vertex_loop(mesh, v) for v in dipole_pairs(mesh)[0]]
    for loop in loops:
        h1, h2 = holonomy(mesh, loop), holonomy(mesh, loop + loop)
        R = rotation(h1.rotation_angle)
        t1 = np.array(h1.translation)
        expect_t = R @ t1 + t1
        ang_err = abs(math.remainder(h2.rotation_angle - 2.0 * h1.rotation_angle, 2.0 * math.pi))
        worst = max(worst, ang_err, float(np.max(np.abs(np.array(h2.translation) - expect_t))))
    return worst <= 1e-10, f"max error {worst:.3g}"


# -- energy ----------------------------------------------------------------------

@check("energy.isotropy")
def _isotropy():
    rng = _rng(8)
    s = EnergySettings()
    worst = 0.0
    for _ in range(1000):
        A = random_matrix(rng)
        Q, Q2 = rotation(rng.uniform(-np.pi, np.pi)), rotation(rng.uniform(-np.pi, np.pi))
        w = density(LinMap2(A), s)
        worst = max(worst, abs(density(LinMap2(A @ Q), s) - w), abs(density(LinMap2(Q2 @ A), s) - w))
    return worst <= 1e-12, f"max change {worst:.3g}"


def gradient_fd_error(mesh: BodyMesh, P: np.ndarray, settings: EnergySettings, h: float = 1e-6) -> float:
    """Relative error of the analytic gradient against central differences."""
    _, g, _ = energy_and_gradient(mesh, P, settings)
    fd = np.empty_like(P)
    for idx in np.ndindex(*P.shape):
        Pp, Pm = P.copy(), P.copy()
        Pp[idx] += h
        Pm[idx] -= h
        fd[idx] = (energy_value(mesh, Pp, settings) - energy_value(mesh, Pm, settings)) / (2.0 * h)
    return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300))


def _fd_cases(count: int, rng):
    for i in range(count):
        mesh, layout = random_planar_mesh(rng)
        n = int(round(math.sqrt(mesh.vertex_count))) - 1
        P = layout + rng.uniform(-0.3, 0.3, layout.shape) / n
        if i % 2:
            P = P @ rotation(rng.uniform(-np.pi, np.pi)).T * rng.uniform(0.7, 1.4)
        yield mesh, P, (2.0, 3.0, 4.0)[i % 3]


@check("energy.gradient_finite_differences")
def _gradient_fd():
    worst = 0.0
    for mesh, P, p in _fd_cases(100, _rng(9)):
        worst = max(worst, gradient_fd_error(mesh, P, EnergySettings(p=p)))
    return worst <= 1e-5, f"max relative error {worst:.3g}"


@check("energy.translation_invariance")
def _translation():
    # dyadic data keep both the shift and the edge differences exact
    rng = _rng(10)
    mesh = flat_square(4)
    ok = True
    for _ in range(20):
        P = flat_square_layout(4) + rng.integers(-40, 40, (25, 2)) / 1024.0
        shift = rng.integers(-64, 64, 2) / 8.0
        for p in (2.0, 3.0):
            s = EnergySettings(p=p)
            ok &= energy_value(mesh, P, s) == energy_value(mesh, P + shift, s)
    return ok, "bit-identical" if ok else "energy changed under exact translation"


@check("energy.rotation_invariance")
def _rotation_inv():
    rng = _rng(11)
    worst = 0.0
    for mesh, P, p in _fd_cases(30, rng):
        s = EnergySettings(p=p)
        Q = rotation(rng.uniform(-np.pi, np.pi))
        worst = max(worst, abs(energy_value(mesh, P @ Q.T, s) - energy_value(mesh, P, s)))
    return worst <= 1e-12, f"max change {worst:.3g}"


@check("energy.zero_set")
def _zero_set():
    rng = _rng(12)
    mesh = flat_square(4)
    layout = flat_square_layout(4)
    s = EnergySettings()
    ok = True
    for _ in range(20):
        Q = rotation(rng.uniform(-np.pi, np.pi))
        rigid = layout @ Q.T + rng.uniform(-3, 3, 2)
        ok &= energy_value(mesh, rigid, s) <= 1e-10
        bent = rigid + rng.uniform(-0.05, 0.05, rigid.shape)
        ok &= energy_value(mesh, bent, s) > 1e-10
    return ok, "rigid layouts have zero energy; perturbed ones do not"


@check("energy.p_regularity")
def _p_regularity():
    out = []
    ok = True
    for p in (2.0, 4.0):
        r = p_regularity_check(10_000, EnergySettings(p=p), _rng(13))
        ok &= r.ok
        out.append(f"p={p:g}: margins {r.coercivity_margin:.3g}/{r.boundedness_margin:.3g}/{r.lipschitz_margin:.3g}")
    return ok, "; ".join(out)


# -- solve -------------------------------------------------------------------------

@check("solve.gauge")
def _gauge():
    worst = 0.0
    for mesh in (flat_square(4), cone_mesh(0.8, 1.0, 32)):
        res = minimize(mesh, initial_configuration(mesh, 7))
        worst = max(worst, float(np.max(np.abs(area_centroid(mesh, res.configuration.positions)))))
    return worst <= 1e-12, f"max |centroid| {worst:.3g}"


@check("solve.armijo_log")
def _armijo():
    c = SolveOptions().armijo_c
    worst = -np.inf
    for mesh in (cone_mesh(0.8, 1.0, 32), dislocation_block(DislocationParams(0.3, 0.05, 1.0), 2)):
        res = minimize(mesh, initial_configuration(mesh, 3))
        E = np.array(res.energies)
        excess = E[1:] - (E[:-1] + c * np.array(res.steps) * np.array(res.slopes))
        worst = max(worst, float(np.max(excess)) if len(excess) else -np.inf)
    return worst <= 0.0, f"max Armijo excess {worst:.3g}"


@check("solve.determinism")
def _determinism():
    mesh = euclidean_triangulation(spherical_cap, 24)  # several chunks of triangles
    opts = SolveOptions(max_iters=15)
    before = _parallel.get_threads()
    runs = []
    try:
        for t in (1, 1, 3):
            _parallel.set_threads(t)
            r = minimize(mesh, initial_configuration(mesh, 11), opts=opts)
            runs.append(r.configuration.positions.tobytes() + np.float64(r.report.total).tobytes())
    finally:
        _parallel.set_threads(before)
    ok = runs[0] == runs[1] == runs[2]
    return ok, "bit-identical across repeats and thread counts" if ok else "results differ"


def _uniform_sequence():
    return gamma_experiment(lambda n: dislocation_lattice(n, Regime.UNIFORM, 0.3, 0.5), [2, 4, 8, 16])


@check("solve.uniform_energy_proxy", experiment=True)
def _uniform_proxy():
    E = _uniform_sequence().column("min_energy")
    mono = all(b <= a + 1e-10 for a, b in zip(E, E[1:]))
    ratio = E[-1] / E[0]
    return mono and ratio < 1e-4, f"non-increasing={mono}, final/initial={ratio:.3g}"


@check("solve.minimizer_distance_proxy", experiment=True)
def _lp_proxy():
    d = _uniform_sequence().column("minimizer_lp_dist")[-3:]
    return d[0] > d[1] > d[2], "last three " + ", ".join(f"{v:.4g}" for v in d)


# -- cli ---------------------------------------------------------------------------

@check("cli.deterministic_subcommands")
def _cli_det():
    import tempfile
    from pathlib import Path

    from .cli import run
    with tempfile.TemporaryDirectory() as tmp:
        out = []
        for k in range(2):
            mesh_path = Path(tmp, f"m{k}.bm")
            conf_path = Path(tmp, f"u{k}.bc")
            if run(["gen", "--kind", "cone", "--alpha", "0.8", "--r-max", "1", "--resolution", "16",
                    "--out", str(mesh_path)]) != 0:
                return False, "gen failed"
            if run(["minimize", "--mesh", str(mesh_path), "--seed", "5", "--out", str(conf_path)]) != 0:
                return False, "minimize failed"
            out.append(mesh_path.read_bytes() + conf_path.read_bytes())
    return out[0] == out[1], "identical outputs" if out[0] == out[1] else "outputs differ"
