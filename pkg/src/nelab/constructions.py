"""Generators for the manifold families used in the experiments.

All generators build triangles from *planar charts*: each triangle is given by
the coordinates of its corners in some locally isometric development, and
every undirected edge takes its length from the first chart that contains it,
so shared edges are bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .body import BodyMesh, _Edges
from .errors import BadParams, BoundaryVertex, NotAStrip, NotClosed


def _assemble(vertex_count: int, triangles: np.ndarray, charts: np.ndarray) -> BodyMesh:
    tri = np.asarray(triangles, dtype=np.int64)
    Q = np.asarray(charts, dtype=float)
    slot_len = np.hypot(*(Q[:, [1, 2, 0]] - Q).transpose(2, 0, 1)).ravel()
    e = _Edges.build(tri, vertex_count)
    lengths = slot_len[e.first][e.slot_edge].reshape(-1, 3)
    return BodyMesh(vertex_count, tri, lengths)


def _orient_ccw(tri: np.ndarray, Q: np.ndarray):
    d1, d2 = Q[:, 1] - Q[:, 0], Q[:, 2] - Q[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri, Q = tri.copy(), Q.copy()
    tri[neg] = tri[neg][:, [0, 2, 1]]
    Q[neg] = Q[neg][:, [0, 2, 1]]
    return tri, Q


def mesh_from_layout(triangles, positions) -> BodyMesh:
    """Intrinsic mesh whose lengths are those of a planar layout; triangles are made counterclockwise."""
    tri = np.asarray(triangles, dtype=np.int64)
    P = np.asarray(positions, dtype=float)
    tri, Q = _orient_ccw(tri, P[tri])
    return _assemble(len(P), tri, Q)


# -- flat grids ------------------------------------------------------------------

def grid_triangles(nx: int, ny: int | None = None) -> np.ndarray:
    """Triangles of an ``nx x ny`` cell grid; vertex ``(i, j)`` has index ``j*(nx+1) + i``.

    Each cell is split along its ``(i, j)-(i+1, j+1)`` diagonal, lower triangle first.
    """
    ny = nx if ny is None else ny
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10, v01 = v00 + 1, v00 + nx + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], -1)
    upper = np.stack([v00, v11, v01], -1)
    return np.stack([lower, upper], 1).reshape(-1, 3)


def flat_square_layout(n: int, side: float = 1.0) -> np.ndarray:
    """Isometric planar positions of the :func:`flat_square` vertices."""
    t = np.linspace(0.0, side, n + 1)
    x, y = np.meshgrid(t, t)
    return np.stack([x.ravel(), y.ravel()], -1)


def flat_square(n: int, side: float = 1.0) -> BodyMesh:
    if n < 1 or not side > 0:
        raise BadParams("flat_square needs n >= 1 and side > 0")
    tri = grid_triangles(n)
    P = flat_square_layout(n, side)
    return _assemble((n + 1) ** 2, tri, P[tri])


# -- cones ----------------------------------------------------------------------

def _polar_mesh(alpha: float, r_max: float, resolution: int) -> BodyMesh:
    if resolution < 8:
        raise BadParams("resolution must be >= 8")
    if not (alpha > 0 and r_max > 0):
        raise BadParams("alpha and r_max must be positive")
    wedge = alpha * 2.0 * np.pi / resolution
    if wedge >= np.pi:
        raise BadParams("alpha too large for this resolution (sector angle >= pi)")
    N, R = resolution, max(2, resolution // 4)
    radii = r_max * np.arange(1, R + 1) / R

    def ring(i, j):  # i = 1..R
        return 1 + (i - 1) * N + (j % N)

    tris, charts = [], []
    c0, c1 = np.array([1.0, 0.0]), np.array([np.cos(wedge), np.sin(wedge)])
    for j in range(N):
        tris.append((0, ring(1, j), ring(1, j + 1)))
        charts.append((np.zeros(2), radii[0] * c0, radii[0] * c1))
    for i in range(1, R):
        ri, ro = radii[i - 1], radii[i]
        for j in range(N):
            a, b, c, d = ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1)
            tris.append((a, b, c))
            charts.append((ri * c0, ro * c0, ro * c1))
            tris.append((a, c, d))
            charts.append((ri * c0, ro * c1, ri * c1))
    return _assemble(1 + R * N, np.array(tris), np.array(charts))


def cone_mesh(alpha: float, r_max: float, resolution: int) -> BodyMesh:
    """Disc of radius ``r_max`` with the cone metric ``dr^2 + alpha^2 r^2 dphi^2``.

    ``resolution`` angular sectors and ``max(2, resolution // 4)`` rings; vertex
    0 is the tip.  Azimuthal edges are chords of the developed sector, so the
    surface is exactly flat away from the tip, whose cone angle is ``2*pi*alpha``.
    """
    if abs(alpha - 1.0) <= 1e-12:
        raise BadParams("alpha = 1 is the flat disc; use flat_disc")
    return _polar_mesh(alpha, r_max, resolution)


def flat_disc(r_max: float, resolution: int) -> BodyMesh:
    """Flat counterpart of :func:`cone_mesh` on the same connectivity."""
    return _polar_mesh(1.0, r_max, resolution)


# -- dislocations -----------------------------------------------------------------

@dataclass(frozen=True)
class DislocationParams:
    theta: float
    d: float
    block_size: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and 0 < self.theta < np.pi / 2):
            raise BadParams("theta must lie in (0, pi/2)")
        if not (math.isfinite(self.d) and self.d > 0 and math.isfinite(self.block_size) and self.block_size > 0):
            raise BadParams("d and block_size must be positive and finite")
        if not 2 * self.d * math.sin(self.theta) < self.block_size:
            raise BadParams("Burgers step 2 d sin(theta) must be smaller than block_size")
        if not self.d * math.cos(self.theta) < self.block_size:
            raise BadParams("disclination segment does not fit inside the block")

    @property
    def burgers(self) -> float:
        return 2.0 * self.d * math.sin(self.theta)


@dataclass(frozen=True)
class Holonomy:
    rotation_angle: float
    translation: tuple[float, float]

    @property
    def translation_norm(self) -> float:
        return float(np.hypot(*self.translation))


def _block_grid(p: DislocationParams, m: int):
    """Chart and limit coordinates on the ``(2m+2) x (2m+1)`` line grid of one block.

    Columns: ``m`` cells left of ``p-``, one cell spanning the disclination
    segment, ``m`` cells right of ``p+``.  Rows ``0..m`` belong to the lower
    polygon and ``m..2m`` to the upper one; row ``m`` is the glued seam.
    """
    s, th, d = p.block_size, p.theta, p.d
    dc, ds = d * math.cos(th), d * math.sin(th)
    a = 0.5 * (s - dc)
    xs = np.r_[np.linspace(0.0, a, m + 1), np.linspace(a + dc, s, m + 1)]
    seam = np.clip(xs - a, 0.0, dc) * math.tan(th)
    seam[m + 1:] = ds  # exact value past p+
    t = np.arange(m + 1) / m
    upper = np.empty((2 * m + 2, m + 1, 2))
    lower = np.empty((2 * m + 2, m + 1, 2))
    upper[..., 0] = xs[:, None]
    lower[..., 0] = xs[:, None]
    upper[..., 1] = -seam[:, None] + t[None, :] * (0.5 * s + seam[:, None])
    lower[..., 1] = -0.5 * s + t[None, :] * (seam[:, None] + 0.5 * s)
    ys = np.arange(2 * m + 1) * s / (2 * m)
    return xs, ys, upper, lower


def _block_cells(p: DislocationParams, m: int, mirror: bool):
    """Triangles of one block in local ``(k, l)`` line indices, with their charts."""
    s = p.block_size
    _, _, upper, lower = _block_grid(p, m)
    nk = 2 * m + 1
    tris, charts = [], []
    for l in range(2 * m):
        chart, row = (lower, l) if l < m else (upper, l - m)
        for k in range(nk):
            c00, c10 = chart[k, row], chart[k + 1, row]
            c01, c11 = chart[k, row + 1], chart[k + 1, row + 1]
            tris.append(((k, l), (k + 1, l), (k + 1, l + 1)))
            charts.append((c00, c10, c11))
            tris.append(((k, l), (k + 1, l + 1), (k, l + 1)))
            charts.append((c00, c11, c01))
    tris = np.array(tris)
    charts = np.array(charts)
    if mirror:
        tris[..., 0] = nk - tris[..., 0]
        charts[..., 0] = s - charts[..., 0]
        tris = tris[:, [0, 2, 1]]
        charts = charts[:, [0, 2, 1]]
    return tris, charts


def _limit_x(p: DislocationParams, m: int, mirror: bool) -> np.ndarray:
    xs = _block_grid(p, m)[0]
    return p.block_size - xs[::-1] if mirror else xs


def _tile(n: int, p: DislocationParams, m: int):
    """Assemble an ``n x n`` array of blocks; odd columns are mirror images."""
    nk, nl = 2 * m + 1, 2 * m
    NX = n * nk
    tris, charts, limit = [], [], []
    ys = np.arange(nl + 1) * p.block_size / nl
    for J in range(n):
        for I in range(n):
            mirror = I % 2 == 1
            t, c = _block_cells(p, m, mirror)
            K = I * nk + t[..., 0]
            L = J * nl + t[..., 1]
            tris.append(L * (NX + 1) + K)
            charts.append(c)
            lx = _limit_x(p, m, mirror)
            limit.append(np.stack([I * p.block_size + lx[t[..., 0]], J * p.block_size + ys[t[..., 1]]], -1))
    V = (NX + 1) * (n * nl + 1)
    return V, np.concatenate(tris), np.concatenate(charts), np.concatenate(limit)


def dislocation_block(params: DislocationParams, refinement: int = 1) -> BodyMesh:
    """Edge dislocation as a glued pair of polygons carrying a disclination dipole.

    The lower edge of the upper polygon runs ``x -> p- -> p+ -> y`` dipping by
    ``d sin(theta)``; the lower polygon mirrors it upward, and the two are glued
    along it.  ``p-`` gets cone angle ``2pi + 2theta`` and ``p+`` ``2pi - 2theta``.
    """
    if refinement < 1:
        raise BadParams("refinement must be >= 1")
    V, tri, charts, _ = _tile(1, params, refinement)
    return _assemble(V, tri, charts)


class Regime(str, Enum):
    MEAN = "MeanRegime"
    UNIFORM = "UniformRegime"


def lattice_params(n: int, mode: Regime | str, theta0: float, epsilon: float) -> DislocationParams:
    mode = Regime(mode)
    if n < 1:
        raise BadParams("n must be >= 1")
    if not (0 < theta0 <= np.pi / 4):
        raise BadParams("theta0 must lie in (0, pi/4]")
    if not (0 < epsilon < 1):
        raise BadParams("epsilon must lie in (0, 1)")
    theta = theta0 if mode is Regime.MEAN else theta0 * n ** (-epsilon)
    b = 2.0 * math.sin(theta0) / n ** 2
    return DislocationParams(theta=theta, d=b / (2.0 * math.sin(theta)), block_size=1.0 / n)


def dislocation_lattice(n: int, mode: Regime | str, theta0: float, epsilon: float,
                        refinement: int = 1) -> tuple[BodyMesh, BodyMesh]:
    """``n x n`` dislocation blocks tiling the unit square, and the flat limit.

    Every block carries Burgers magnitude ``2 sin(theta0) / n^2``; in the mean
    regime the disclination angle stays ``theta0``, in the uniform regime it
    shrinks as ``theta0 * n^-epsilon``.  Columns alternate with their mirror
    image so neighbouring block sides have equal lengths.  The second mesh
    has the same connectivity and the flat unit-square lengths obtained by
    straightening every seam.
    """
    p = lattice_params(n, mode, theta0, epsilon)
    V, tri, charts, limit = _tile(n, p, refinement)
    return _assemble(V, tri, charts), _assemble(V, tri, limit)


def lattice_limit_layout(n: int, mode: Regime | str, theta0: float, epsilon: float,
                         refinement: int = 1) -> np.ndarray:
    """Planar positions realizing the flat limit mesh of :func:`dislocation_lattice` isometrically."""
    p = lattice_params(n, mode, theta0, epsilon)
    V, tri, _, limit = _tile(n, p, refinement)
    P = np.empty((V, 2))
    P[tri.ravel()] = limit.reshape(-1, 2)
    return P


# -- smooth metrics by Euclidean triangles --------------------------------------

def spherical_cap(x, y):
    """Conformal factor of a round metric: ``-log(1 + (x^2 + y^2) / 4)``."""
    return -np.log1p(0.25 * (x * x + y * y))


def _segment_lengths(phi: Callable, P0: np.ndarray, P1: np.ndarray) -> np.ndarray:
    def simpson(panels):
        t = np.linspace(0.0, 1.0, panels + 1)
        pts = P0[:, None, :] + t[None, :, None] * (P1 - P0)[:, None, :]
        f = np.exp(np.asarray(phi(pts[..., 0], pts[..., 1]), dtype=float))
        w = np.ones(panels + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return (f @ w) / (3.0 * panels)

    s16, s32 = simpson(16), simpson(32)
    return np.hypot(*(P1 - P0).T) * (s32 + (s32 - s16) / 15.0)


def euclidean_triangulation(phi: Callable, n: int) -> BodyMesh:
    """Unit-square grid whose edges carry ``exp(phi)``-lengths of the straight segments.

    ``phi(x, y)`` must accept arrays.  Each integral uses composite Simpson on
    16 and 32 panels combined by one Richardson step.  The connectivity is that
    of :func:`flat_square`.
    """
    if n < 2:
        raise BadParams("n must be >= 2")
    tri = grid_triangles(n)
    P = flat_square_layout(n, 1.0)
    e = _Edges.build(tri, (n + 1) ** 2)
    edge_len = _segment_lengths(phi, P[e.u], P[e.v])
    return BodyMesh((n + 1) ** 2, tri, edge_len[e.slot_edge].reshape(-1, 3))


def refine_grid(mesh: BodyMesh, n: int) -> BodyMesh:
    """Midpoint subdivision of an ``n x n`` grid mesh, re-indexed as the ``2n x 2n`` grid.

    Every triangle splits into four half-scale copies, so the result is the
    same piecewise-flat surface with the connectivity of ``flat_square(2n)``.
    """
    if mesh.vertex_count != (n + 1) ** 2 or not np.array_equal(mesh.triangles, grid_triangles(n)):
        raise BadParams("mesh is not an n x n grid mesh")
    N = 2 * n
    k = np.arange(2 * N * N)
    cell, upper = k // 2, k % 2
    ci, cj = cell % N, cell // N
    cx = (ci % 2 + np.where(upper, 1.0 / 3, 2.0 / 3)) / 2
    cy = (cj % 2 + np.where(upper, 2.0 / 3, 1.0 / 3)) / 2
    parent = 2 * ((cj // 2) * n + ci // 2) + (cy > cx)
    PL = mesh.ref_lengths[parent]
    parent_upper = cy > cx
    # columns: horizontal, vertical, diagonal lengths of the parent
    hor = np.where(parent_upper, PL[:, 1], PL[:, 0])
    ver = np.where(parent_upper, PL[:, 2], PL[:, 1])
    dia = np.where(parent_upper, PL[:, 0], PL[:, 2])
    L = np.where(upper[:, None] == 1, np.stack([dia, hor, ver], -1), np.stack([hor, ver, dia], -1)) * 0.5
    return BodyMesh((N + 1) ** 2, grid_triangles(N), L)


def prolong_grid(positions: np.ndarray, n: int) -> np.ndarray:
    """Piecewise-affine prolongation of grid vertex positions from ``n`` to ``2n``."""
    P = np.asarray(positions).reshape(n + 1, n + 1, 2)
    N = 2 * n
    out = np.empty((N + 1, N + 1, 2))
    out[::2, ::2] = P
    out[::2, 1::2] = 0.5 * (P[:, :-1] + P[:, 1:])
    out[1::2, ::2] = 0.5 * (P[:-1] + P[1:])
    out[1::2, 1::2] = 0.5 * (P[:-1, :-1] + P[1:, 1:])
    return out.reshape(-1, 2)


# -- development and holonomy ----------------------------------------------------

def _place(chart_pts: np.ndarray, known_idx, known_pos) -> np.ndarray:
    """Orientation-preserving rigid image of a chart fixing two placed corners."""
    i, j = known_idx
    src = chart_pts[j] - chart_pts[i]
    dst = known_pos[1] - known_pos[0]
    ang = math.atan2(dst[1], dst[0]) - math.atan2(src[1], src[0])
    c, s = math.cos(ang), math.sin(ang)
    R = np.array([[c, -s], [s, c]])
    return (chart_pts - chart_pts[i]) @ R.T + known_pos[0]


def develop(mesh: BodyMesh, loop) -> list[np.ndarray]:
    """Lay out a closed strip of triangles in the plane, one copy per step.

    Returns ``len(loop) + 1`` corner arrays; the last is the second copy of
    ``loop[0]`` reached by continuing the development across the closing edge.
    """
    loop = [int(t) for t in loop]
    if len(loop) < 2:
        raise NotAStrip("a strip needs at least two triangles")
    tri = mesh.triangles
    placed = [mesh.charts[loop[0]].copy()]
    for prev, cur in zip(loop, loop[1:] + loop[:1]):
        shared = [v for v in tri[cur] if v in tri[prev]]
        if len(shared) != 2:
            if cur == loop[0]:
                raise NotClosed("the strip does not return to its first triangle")
            raise NotAStrip(f"triangles {prev} and {cur} do not share an edge")
        pos_prev = {v: placed[-1][k] for k, v in enumerate(tri[prev])}
        idx = [list(tri[cur]).index(v) for v in shared]
        placed.append(_place(mesh.charts[cur], idx, [pos_prev[v] for v in shared]))
    return placed


def holonomy(mesh: BodyMesh, loop) -> Holonomy:
    """Rigid motion taking the first copy of ``loop[0]`` to its developed final copy."""
    copies = develop(mesh, loop)
    first, last = copies[0], copies[-1]
    e0, e1 = first[1] - first[0], last[1] - last[0]
    ang = math.atan2(e1[1], e1[0]) - math.atan2(e0[1], e0[0])
    ang = math.remainder(ang, 2.0 * math.pi)
    if ang <= -math.pi:
        ang += 2.0 * math.pi
    c, s = math.cos(ang), math.sin(ang)
    t = last[0] - np.array([[c, -s], [s, c]]) @ first[0]
    return Holonomy(float(ang), (float(t[0]), float(t[1])))


def _fan(mesh: BodyMesh, v: int) -> list[int]:
    """Triangles around interior vertex ``v`` in counterclockwise order."""
    if mesh.boundary_mask[v]:
        raise BoundaryVertex(f"vertex {v} lies on the boundary")
    tri = mesh.triangles
    ts, ks = np.nonzero(tri == v)
    by_in = {int(tri[t, (k + 1) % 3]): int(t) for t, k in zip(ts, ks)}
    out_of = {int(t): int(tri[t, (k + 2) % 3]) for t, k in zip(ts, ks)}
    start = int(ts.min())
    fan = [start]
    while True:
        nxt = by_in[out_of[fan[-1]]]
        if nxt == start:
            return fan
        fan.append(nxt)


def vertex_loop(mesh: BodyMesh, v: int) -> list[int]:
    """Clockwise strip around ``v``; its holonomy rotation is the cone deficit at ``v``."""
    return _fan(mesh, v)[::-1]


def edge_loop(mesh: BodyMesh, a: int, b: int) -> list[int]:
    """Clockwise strip around both endpoints of the interior edge ``a-b``."""
    fa, fb = _fan(mesh, a), _fan(mesh, b)
    tri = mesh.triangles
    with_ab = [t for t in fa if b in tri[t]]
    if len(with_ab) != 2:
        raise NotAStrip(f"{a}-{b} is not an interior edge")
    # t1 has a -> b counterclockwise, t2 has b -> a
    t1 = next(t for t in with_ab if tri[t][(list(tri[t]).index(a) + 1) % 3] == b)
    t2 = next(t for t in with_ab if t != t1)
    i = fa.index(t1)
    fa = fa[i:] + fa[:i]
    j = fb.index(t2)
    fb = fb[j:] + fb[:j]
    ring = fa + fb[1:-1]
    return ring[::-1]


def dipole_pairs(mesh: BodyMesh, tol: float = 1e-9) -> list[tuple[int, int]]:
    """``(p-, p+)`` pairs: adjacent interior vertices with excess and deficit angle."""
    sums = mesh.angle_sums
    interior = ~mesh.boundary_mask
    minus = np.flatnonzero(interior & (sums > 2 * np.pi + tol))
    plus = set(np.flatnonzero(interior & (sums < 2 * np.pi - tol)).tolist())
    e = mesh.edges
    nbrs: dict[int, set[int]] = {}
    for u, v in zip(e.u.tolist(), e.v.tolist()):
        nbrs.setdefault(u, set()).add(v)
        nbrs.setdefault(v, set()).add(u)
    pairs = []
    for pm in minus.tolist():
        cand = sorted(nbrs[pm] & plus)
        if len(cand) == 1:
            pairs.append((pm, cand[0]))
    return pairs
