"""Energy minimization and convergence-sequence experiments."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.sparse.linalg import splu

from .body import BodyMesh, Configuration, MorphismStats, area_centroid, morphism_stats
from .energy import EnergyReport, EnergySettings, energy_and_gradient
from .errors import ClosedSurface, LineSearchFailed, NonDifferentiable

log = logging.getLogger(__name__)

MAX_HALVINGS = 60


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 5000
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    seed: int = 0
    precondition: bool = True

    def __post_init__(self):
        if not (isinstance(self.max_iters, int) and self.max_iters > 0):
            raise ValueError("max_iters must be a positive integer")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SolveResult:
    configuration: Configuration
    report: EnergyReport
    iterations: int
    converged: bool
    reason: str
    energies: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    slopes: list[float] = field(default_factory=list)

    def __iter__(self):
        return iter((self.configuration, self.report, self.iterations))


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; ``stream`` separates independent uses of one seed."""
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


# -- starting point ---------------------------------------------------------------

def _eccentric_diameter(mesh: BodyMesh, sources) -> float:
    return float(np.max(dijkstra(mesh.edge_graph, directed=False, indices=sources)))


def tutte_layout(mesh: BodyMesh) -> np.ndarray:
    """Barycentric (Tutte) embedding with the longest boundary loop on a circle.

    Boundary vertices are spaced by reference arc length on a circle of radius
    half the edge-graph diameter (eccentricities taken from boundary vertices);
    interior vertices solve the uniform-weight averaging equations.
    """
    loops = mesh.boundary_loops
    if not loops:
        raise ClosedSurface("mesh has no boundary")
    loop = max(loops, key=len)
    if len(loop) < 3:
        raise ClosedSurface("boundary loop has fewer than three vertices")
    radius = 0.5 * _eccentric_diameter(mesh, loop)
    G = mesh.edge_graph
    seg = np.asarray(G[loop, np.roll(loop, -1)]).ravel()
    arc = np.r_[0.0, np.cumsum(seg)[:-1]] / np.sum(seg)
    V = mesh.vertex_count
    P = np.zeros((V, 2))
    P[loop, 0] = radius * np.cos(2 * np.pi * arc)
    P[loop, 1] = radius * np.sin(2 * np.pi * arc)
    fixed = np.zeros(V, dtype=bool)
    fixed[loop] = True
    free = np.flatnonzero(~fixed)
    if len(free):
        A = (G > 0).astype(float).tocsr()
        deg = np.asarray(A.sum(axis=1)).ravel()
        Lap = (sp.diags(deg) - A).tocsc()
        Lff = Lap[free][:, free].tocsc()
        rhs = -(Lap[free][:, loop] @ P[loop])
        lu = splu(Lff)
        X = lu.solve(rhs)
        for _ in range(3):
            res = rhs - Lff @ X
            if np.max(np.abs(res)) <= 1e-10 * max(1.0, radius):
                break
            X = X + lu.solve(res)
        P[free] = X
    return P


def initial_configuration(mesh: BodyMesh, seed: int = 0) -> Configuration:
    """Tutte layout plus seeded uniform jitter of 1% of the mean edge length."""
    P = tutte_layout(mesh)
    amp = 1e-2 * mesh.mean_edge_length
    P = P + rng_for(seed).uniform(-amp, amp, size=P.shape)
    return Configuration(P)


# -- minimization ----------------------------------------------------------------

def stiffness_matrix(mesh: BodyMesh) -> sp.csc_matrix:
    """Scalar Dirichlet stiffness ``sum_T Area * grad(phi_i) . grad(phi_j)`` of the reference mesh."""
    B = mesh.ref_inverse
    E = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    G = np.swapaxes(B, -1, -2) @ E  # (T, 2, 3) hat-function gradients
    K = mesh.areas[:, None, None] * (np.swapaxes(G, -1, -2) @ G)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    V = mesh.vertex_count
    return sp.coo_matrix((K.ravel(), (rows, cols)), shape=(V, V)).tocsc()


class _Preconditioner:
    def __init__(self, mesh: BodyMesh):
        K = stiffness_matrix(mesh)
        M = mesh.vertex_masses
        shift = 1e-9 * float(K.diagonal().mean()) / float(M.mean())
        self._lu = splu((2.0 * K + sp.diags(shift * M)).tocsc())

    def __call__(self, g: np.ndarray) -> np.ndarray:
        return self._lu.solve(g - np.mean(g, axis=0))


def _centered(mesh: BodyMesh, P: np.ndarray) -> np.ndarray:
    return P - area_centroid(mesh, P)


def minimize(mesh: BodyMesh, u0: Configuration, settings: EnergySettings = EnergySettings(),
             opts: SolveOptions = SolveOptions()) -> SolveResult:
    """Descent with Armijo backtracking from ``u0``; the result is centroid-free.

    With ``opts.precondition`` the search direction is ``-P^-1 grad`` for the
    reference Dirichlet stiffness ``P``, which for ``p = 2`` is the
    as-rigid-as-possible global step; otherwise it is ``-grad``.  Each accepted
    step satisfies ``E_new <= E + c * t * <grad, d>``.  The trial step starts
    from twice the last accepted one.
    """
    if settings.p < 2.0:
        raise NonDifferentiable("the solver requires p >= 2")
    u0.check(mesh)
    P = np.array(u0.positions, dtype=float)
    precond = _Preconditioner(mesh) if opts.precondition else None
    E, g, _ = energy_and_gradient(mesh, P, settings)
    energies, steps, slopes = [E], [], []
    t_prev, grow = 1.0, False
    reason = "max_iters"
    it = 0
    tiny = 64.0 * np.finfo(float).eps
    while True:
        gnorm = math.sqrt(float(np.sum(g * g)))
        if gnorm < opts.grad_tol:
            reason = "grad_tol"
            break
        if it >= opts.max_iters:
            break
        d = -precond(g) if precond is not None else -g
        slope = float(np.sum(g * d))
        if not slope < 0:
            d, slope = -g, -gnorm * gnorm
        t = 2.0 * t_prev if grow else t_prev
        t0 = t
        for k in range(MAX_HALVINGS + 1):
            trial = P + t * d
            E_new, g_new, _ = energy_and_gradient(mesh, trial, settings)
            if E_new <= E + opts.armijo_c * t * slope:
                break
            t *= opts.backtrack
        else:
            if abs(t0 * slope) <= tiny * max(abs(E), np.finfo(float).tiny):
                reason = "precision"
                break
            raise LineSearchFailed(f"no Armijo step after {MAX_HALVINGS} halvings at iteration {it}")
        P, E, g = trial, E_new, g_new
        t_prev, grow = t, k == 0
        energies.append(E)
        steps.append(t)
        slopes.append(slope)
        it += 1
    P = _centered(mesh, P)
    E, g, per = energy_and_gradient(mesh, P, settings)
    report = EnergyReport(E, per, math.sqrt(float(np.sum(g * g))))
    log.debug("minimize: %d iterations, E = %.6g, |g| = %.3g (%s)", it, E, report.grad_norm, reason)
    return SolveResult(Configuration(P), report, it, reason == "grad_tol", reason, energies, steps, slopes)


# -- comparing minimizers ----------------------------------------------------------

def procrustes_rotation(masses: np.ndarray, moving: np.ndarray, fixed: np.ndarray) -> np.ndarray:
    """Rotation ``R`` maximizing ``sum_i m_i <fixed_i, R moving_i>``."""
    a = moving * masses[:, None]
    s = float(np.sum(a[:, 0] * fixed[:, 1] - a[:, 1] * fixed[:, 0]))
    c = float(np.sum(a[:, 0] * fixed[:, 0] + a[:, 1] * fixed[:, 1]))
    ang = math.atan2(s, c)
    return np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])


def lp_distance(mesh: BodyMesh, u: np.ndarray, v: np.ndarray, p: float) -> float:
    """``(sum_T Area * |u - v|^p)^(1/p)`` with the edge-midpoint rule on each triangle."""
    D = np.asarray(u) - np.asarray(v)
    tri = mesh.triangles
    mids = 0.5 * (D[tri] + D[tri[:, [1, 2, 0]]])
    w = np.sum(np.hypot(mids[..., 0], mids[..., 1]) ** p, axis=1) / 3.0
    return float(np.sum(mesh.areas * w) ** (1.0 / p))


def aligned_lp_distance(mesh: BodyMesh, u: np.ndarray, v: np.ndarray, p: float) -> float:
    """L^p distance after removing centroids and the best rotation of ``u`` onto ``v``."""
    u = _centered(mesh, np.asarray(u))
    v = _centered(mesh, np.asarray(v))
    R = procrustes_rotation(mesh.vertex_masses, u, v)
    return lp_distance(mesh, u @ R.T, v, p)


# -- sequences -----------------------------------------------------------------------

@dataclass
class SequenceRow:
    n: int
    min_energy: float
    grad_norm: float
    stats: MorphismStats
    minimizer_lp_dist: float
    limit_energy: float = float("nan")
    iterations: int = 0
    converged: bool = False


@dataclass
class SequenceResult:
    rows: list[SequenceRow] = field(default_factory=list)

    def column(self, name: str) -> list[float]:
        if name in MorphismStats.FIELDS:
            return [getattr(r.stats, name) for r in self.rows]
        return [getattr(r, name) for r in self.rows]


def _same_mesh(a: BodyMesh, b: BodyMesh) -> bool:
    return (a.vertex_count == b.vertex_count and np.array_equal(a.triangles, b.triangles)
            and np.array_equal(a.ref_lengths, b.ref_lengths))


def _same_connectivity(a: BodyMesh, b: BodyMesh) -> bool:
    return a.vertex_count == b.vertex_count and np.array_equal(a.triangles, b.triangles)


def gamma_experiment(generator: Callable[[int], tuple[BodyMesh, BodyMesh]], n_list: Iterable[int],
                     settings: EnergySettings = EnergySettings(), opts: SolveOptions = SolveOptions(),
                     cold_start: bool = False) -> SequenceResult:
    """Minimize along ``(M_n, M_limit) = generator(n)`` and compare with the limit.

    The limit problem is solved once per distinct limit mesh from the seeded
    Tutte start.  ``M_n`` starts from the previous ``M_n`` minimizer when the
    connectivity matches, else from the limit minimizer (same connectivity by
    contract); ``cold_start`` uses a fresh seeded Tutte start every time.
    """
    result = SequenceResult()
    limit_cache: list[tuple[BodyMesh, object]] = []
    prev: tuple[BodyMesh, np.ndarray] | None = None
    for n in sorted(int(k) for k in n_list):
        mesh, limit = generator(n)
        stats = morphism_stats(limit, mesh)
        sol_lim = next((s for m, s in limit_cache if _same_mesh(m, limit)), None)
        if sol_lim is None:
            sol_lim = minimize(limit, initial_configuration(limit, opts.seed), settings, opts)
            limit_cache[:] = [(limit, sol_lim)]
        if cold_start:
            start = initial_configuration(mesh, opts.seed)
        elif prev is not None and _same_connectivity(prev[0], mesh):
            start = Configuration(prev[1])
        else:
            start = sol_lim.configuration
        sol = minimize(mesh, start, settings, opts)
        prev = (mesh, sol.configuration.positions)
        dist = aligned_lp_distance(limit, sol.configuration.positions, sol_lim.configuration.positions, settings.p)
        log.info("n=%d  E_n=%.6g  E_lim=%.6g  dist=%.4g  iters=%d", n, sol.report.total,
                 sol_lim.report.total, dist, sol.iterations)
        result.rows.append(SequenceRow(n, sol.report.total, sol.report.grad_norm, stats, dist,
                                       sol_lim.report.total, sol.iterations, sol.converged))
    return result


def triangulation_experiment(phi: Callable, n_list: Iterable[int], n_ref: int = 64,
                             settings: EnergySettings = EnergySettings(),
                             opts: SolveOptions = SolveOptions()) -> SequenceResult:
    """Grid triangulations of ``exp(2 phi)|dx|^2`` compared with the ``n_ref`` grid.

    Each ``T_n`` is minimized on its own connectivity.  For the statistics and
    the L^p distance, ``T_n`` is subdivided (same piecewise-flat surface) and
    its minimizer prolonged affinely to the reference grid.
    """
    from .constructions import euclidean_triangulation, prolong_grid, refine_grid

    ref = euclidean_triangulation(phi, n_ref)
    sol_ref = minimize(ref, initial_configuration(ref, opts.seed), settings, opts)
    result = SequenceResult()
    for n in sorted(int(k) for k in n_list):
        if n_ref % n or (n_ref // n) & (n_ref // n - 1):
            raise ValueError("n_ref / n must be a power of two")
        mesh = euclidean_triangulation(phi, n)
        sol = minimize(mesh, initial_configuration(mesh, opts.seed), settings, opts)
        fine, P, k = mesh, sol.configuration.positions, n
        while k < n_ref:
            fine, P, k = refine_grid(fine, k), prolong_grid(P, k), 2 * k
        stats = morphism_stats(ref, fine)
        dist = aligned_lp_distance(ref, P, sol_ref.configuration.positions, settings.p)
        log.info("n=%d  E_n=%.6g  E_ref=%.6g  dist=%.4g", n, sol.report.total, sol_ref.report.total, dist)
        result.rows.append(SequenceRow(n, sol.report.total, sol.report.grad_norm, stats, dist,
                                       sol_ref.report.total, sol.iterations, sol.converged))
    return result
