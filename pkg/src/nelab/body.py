"""Intrinsic triangle meshes, piecewise-affine configurations, morphism statistics.

A :class:`BodyMesh` carries no vertex coordinates.  Each triangle is described
by its three reference edge lengths and is realized on demand as a planar
chart (:func:`flatten_triangle`); curvature lives only at vertices whose
incident angles do not sum to 2*pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import (BadMesh, BadTriangle, BoundaryVertex, ConnectivityMismatch,
                     EmptySequence, FormatError)
from .linmap import LinMap2, distortion_values, signed_singular_values


def _check_lengths(L: np.ndarray) -> None:
    a, b, c = L[..., 0], L[..., 1], L[..., 2]
    ok = np.isfinite(L).all(axis=-1) & (L > 0).all(axis=-1) & (a < b + c) & (b < c + a) & (c < a + b)
    if not np.all(ok):
        bad = np.flatnonzero(~np.atleast_1d(ok))
        raise BadTriangle(f"triangle inequality violated for triangle(s) {bad[:5].tolist()}")


def _heron(L: np.ndarray) -> np.ndarray:
    # Kahan's cancellation-safe arrangement
    s = np.sort(L, axis=-1)
    c, b, a = s[..., 0], s[..., 1], s[..., 2]
    return 0.25 * np.sqrt((a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c)))


def _flatten(L: np.ndarray) -> np.ndarray:
    l01, l12, l20 = L[..., 0], L[..., 1], L[..., 2]
    x2 = (l01 * l01 + l20 * l20 - l12 * l12) / (2.0 * l01)
    y2 = 2.0 * _heron(L) / l01
    Q = np.zeros(L.shape[:-1] + (3, 2))
    Q[..., 1, 0] = l01
    Q[..., 2, 0] = x2
    Q[..., 2, 1] = y2
    return Q


def flatten_triangle(lengths) -> np.ndarray:
    """Isometric planar chart ``(q0, q1, q2)`` of a triangle with lengths ``(l01, l12, l20)``.

    ``q0`` is the origin, ``q1`` lies on the positive x-axis and ``q2`` in the
    upper half-plane.
    """
    L = np.asarray(lengths, dtype=float)
    _check_lengths(L)
    return _flatten(L)


@dataclass(frozen=True, eq=False)
class BodyMesh:
    vertex_count: int
    triangles: np.ndarray
    ref_lengths: np.ndarray

    def __post_init__(self):
        tri = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        L = np.array(self.ref_lengths, dtype=float).reshape(-1, 3)
        V = int(self.vertex_count)
        if V <= 0 or len(tri) == 0:
            raise BadMesh("mesh needs at least one vertex and one triangle")
        if len(L) != len(tri):
            raise BadMesh("one length triple per triangle required")
        if tri.min() < 0 or tri.max() >= V:
            raise BadMesh("triangle index out of range")
        if np.any((tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 2] == tri[:, 0])):
            raise BadMesh("triangle with repeated vertex")
        if len(np.unique(tri)) != V:
            raise BadMesh("every vertex must belong to a triangle")
        _check_lengths(L)
        tri.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "vertex_count", V)
        object.__setattr__(self, "triangles", tri)
        object.__setattr__(self, "ref_lengths", L)
        self._check_edges()

    def _check_edges(self):
        e = self.edges
        if np.any(e.counts > 2):
            raise BadMesh("non-manifold edge (more than two incident triangles)")
        directed = self.triangles.ravel() * self.vertex_count + self.triangles[:, [1, 2, 0]].ravel()
        if len(np.unique(directed)) != len(directed):
            raise BadMesh("inconsistent orientation: an edge is traversed twice in the same direction")
        interior = e.counts == 2
        first, second = e.first[interior], e.second[interior]
        flat = self.ref_lengths.ravel()
        if np.any(flat[first] != flat[second]):
            raise BadMesh("edge-length mismatch across an interior edge")
        nt = len(self.triangles)
        adj = sp.coo_matrix((np.ones(interior.sum()), (first // 3, second // 3)), shape=(nt, nt))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise BadMesh("triangle adjacency graph is disconnected")

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @cached_property
    def edges(self) -> "_Edges":
        return _Edges.build(self.triangles, self.vertex_count)

    @cached_property
    def charts(self) -> np.ndarray:
        """Planar chart of every triangle, shape ``(T, 3, 2)``."""
        return _flatten(self.ref_lengths)

    @cached_property
    def areas(self) -> np.ndarray:
        return _heron(self.ref_lengths)

    @cached_property
    def total_area(self) -> float:
        return float(np.sum(self.areas))

    @cached_property
    def ref_inverse(self) -> np.ndarray:
        """Inverse of the reference edge matrix ``[q1 - q0, q2 - q0]`` per triangle."""
        Q = self.charts
        l01, x2, y2 = Q[:, 1, 0], Q[:, 2, 0], Q[:, 2, 1]
        B = np.zeros((len(Q), 2, 2))
        B[:, 0, 0] = 1.0 / l01
        B[:, 0, 1] = -x2 / (l01 * y2)
        B[:, 1, 1] = 1.0 / y2
        return B

    @cached_property
    def corner_angles(self) -> np.ndarray:
        Q = self.charts
        out = np.empty((len(Q), 3))
        for k in range(3):
            u = Q[:, (k + 1) % 3] - Q[:, k]
            v = Q[:, (k + 2) % 3] - Q[:, k]
            cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
            dot = u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]
            out[:, k] = np.arctan2(np.abs(cross), dot)
        return out

    @cached_property
    def angle_sums(self) -> np.ndarray:
        return np.bincount(self.triangles.ravel(), weights=self.corner_angles.ravel(),
                           minlength=self.vertex_count)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        e = self.edges
        b = e.counts == 1
        mask = np.zeros(self.vertex_count, dtype=bool)
        mask[e.u[b]] = True
        mask[e.v[b]] = True
        return mask

    @cached_property
    def boundary_loops(self) -> list[np.ndarray]:
        """Boundary cycles, each traversed with the mesh's orientation."""
        e = self.edges
        b = np.flatnonzero(e.counts == 1)
        t, k = e.first[b] // 3, e.first[b] % 3
        start = self.triangles[t, k]
        end = self.triangles[t, (k + 1) % 3]
        nxt = dict(zip(start.tolist(), end.tolist()))
        loops, seen = [], set()
        for s in sorted(nxt):
            if s in seen:
                continue
            loop = [s]
            seen.add(s)
            v = nxt[s]
            while v != s:
                if v in seen:
                    raise BadMesh("boundary is not a union of simple cycles")
                loop.append(v)
                seen.add(v)
                v = nxt[v]
            loops.append(np.array(loop, dtype=np.int64))
        return loops

    @cached_property
    def edge_graph(self) -> sp.csr_matrix:
        e = self.edges
        V = self.vertex_count
        w = self.ref_lengths.ravel()[e.first]
        g = sp.coo_matrix((np.r_[w, w], (np.r_[e.u, e.v], np.r_[e.v, e.u])), shape=(V, V))
        return g.tocsr()

    @cached_property
    def vertex_masses(self) -> np.ndarray:
        """Lumped mass (one third of each incident triangle area) per vertex."""
        return np.bincount(self.triangles.ravel(), weights=np.repeat(self.areas / 3.0, 3),
                           minlength=self.vertex_count)

    @cached_property
    def mean_edge_length(self) -> float:
        return float(np.mean(self.ref_lengths.ravel()[self.edges.first]))

    def scaled(self, factor: float) -> "BodyMesh":
        return BodyMesh(self.vertex_count, self.triangles, self.ref_lengths * factor)

    def with_lengths(self, lengths) -> "BodyMesh":
        return BodyMesh(self.vertex_count, self.triangles, lengths)


@dataclass(frozen=True, eq=False)
class _Edges:
    """Undirected edges; ``first``/``second`` index flattened ``(T*3)`` half-edge slots."""
    u: np.ndarray
    v: np.ndarray
    counts: np.ndarray
    first: np.ndarray
    second: np.ndarray
    slot_edge: np.ndarray

    @classmethod
    def build(cls, tri: np.ndarray, V: int) -> "_Edges":
        a = tri.ravel()
        b = tri[:, [1, 2, 0]].ravel()
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * V + hi
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        order = np.argsort(inverse, kind="stable")
        starts = np.r_[0, np.cumsum(counts)[:-1]]
        first = order[starts]
        second = np.where(counts >= 2, order[np.minimum(starts + 1, len(order) - 1)], first)
        return cls(uniq // V, uniq % V, counts, first, second, inverse)


@dataclass(frozen=True, eq=False)
class Configuration:
    positions: np.ndarray

    def __post_init__(self):
        P = np.array(self.positions, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(P)):
            raise ValueError("configuration coordinates must be finite")
        P.setflags(write=False)
        object.__setattr__(self, "positions", P)

    def check(self, mesh: BodyMesh) -> None:
        if len(self.positions) != mesh.vertex_count:
            raise ConnectivityMismatch(
                f"configuration has {len(self.positions)} positions, mesh has {mesh.vertex_count} vertices")


# -- geometry queries --------------------------------------------------------

def triangle_area(mesh: BodyMesh, t: int) -> float:
    return float(mesh.areas[t])


def cone_angle(mesh: BodyMesh, v: int) -> float:
    if mesh.boundary_mask[v]:
        raise BoundaryVertex(f"vertex {v} lies on the boundary")
    return float(mesh.angle_sums[v])


def interior_vertices(mesh: BodyMesh) -> np.ndarray:
    return np.flatnonzero(~mesh.boundary_mask)


def cone_deficits(mesh: BodyMesh) -> np.ndarray:
    """``2*pi - angle sum`` at every interior vertex (ordered as :func:`interior_vertices`)."""
    iv = interior_vertices(mesh)
    return 2.0 * np.pi - mesh.angle_sums[iv]


def deformation_gradients(mesh: BodyMesh, positions: np.ndarray, sl: slice = slice(None)) -> np.ndarray:
    tri = mesh.triangles[sl]
    P = np.asarray(positions)
    p0 = P[tri[:, 0]]
    d1, d2 = P[tri[:, 1]] - p0, P[tri[:, 2]] - p0
    B = mesh.ref_inverse[sl]
    # B is upper triangular; spelled out, this is much faster than a stacked matmul
    F = np.empty((len(tri), 2, 2))
    F[:, :, 0] = d1 * B[:, 0, 0, None]
    F[:, :, 1] = d1 * B[:, 0, 1, None] + d2 * B[:, 1, 1, None]
    return F


def deformation_gradient(mesh: BodyMesh, u: Configuration, t: int) -> LinMap2:
    u.check(mesh)
    return LinMap2(deformation_gradients(mesh, u.positions, slice(t, t + 1))[0])


def area_centroid(mesh: BodyMesh, positions: np.ndarray) -> np.ndarray:
    """Volume-weighted mean of a piecewise-affine map."""
    m = mesh.vertex_masses
    return (m @ np.asarray(positions)) / np.sum(m)


def graph_distances(mesh: BodyMesh, sources=None) -> np.ndarray:
    return dijkstra(mesh.edge_graph, directed=False, indices=sources)


def graph_diameter(mesh: BodyMesh) -> float:
    return float(np.max(graph_distances(mesh)))


# -- morphisms -----------------------------------------------------------------

@dataclass(frozen=True)
class MorphismStats:
    sup_dis: float
    mean_dis: float
    mean_dis_inverse: float
    bilip: float
    vol_ratio_dev: float
    global_dis: float

    FIELDS = ("sup_dis", "mean_dis", "mean_dis_inverse", "bilip", "vol_ratio_dev", "global_dis")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in self.FIELDS)


def _pair_sources(V: int, max_sources: int) -> np.ndarray | None:
    if V <= max_sources:
        return None
    return np.unique(np.linspace(0, V - 1, max_sources).round().astype(np.int64))


def morphism_gradients(source: BodyMesh, target: BodyMesh) -> np.ndarray:
    """Per-triangle differential of the vertex-identity morphism ``source -> target``."""
    if source.vertex_count != target.vertex_count or not np.array_equal(source.triangles, target.triangles):
        raise ConnectivityMismatch("source and target meshes differ in connectivity")
    Qt = target.charts
    D = np.stack([Qt[:, 1] - Qt[:, 0], Qt[:, 2] - Qt[:, 0]], axis=-1)
    return D @ source.ref_inverse


def morphism_stats(source: BodyMesh, target: BodyMesh, max_sources: int = 1500) -> MorphismStats:
    """Distortion statistics of the vertex-identity morphism ``F: source -> target``.

    ``mean_dis`` is the integral of ``Dis dF`` over the source, and
    ``mean_dis_inverse`` the integral of ``Dis dF^-1`` over the target.  The
    global distortion compares edge-graph shortest paths, from every vertex
    when the mesh has at most ``max_sources`` vertices and from an evenly
    spaced subset otherwise.
    """
    dF = morphism_gradients(source, target)
    if np.array_equal(source.ref_lengths, target.ref_lengths):
        # the identity is an exact isometry; skip the rounding of chart products
        return MorphismStats(0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    dis = distortion_values(dF)
    dFinv = np.linalg.inv(dF)
    dis_inv = distortion_values(dFinv)
    s1, s2 = signed_singular_values(dF)
    bilip = np.maximum(s1, 1.0 / np.abs(s2))
    ratio = target.areas / source.areas
    src = _pair_sources(source.vertex_count, max_sources)
    gd = np.max(np.abs(graph_distances(source, src) - graph_distances(target, src)))
    return MorphismStats(
        sup_dis=float(np.max(dis)),
        mean_dis=float(np.sum(source.areas * dis)),
        mean_dis_inverse=float(np.sum(target.areas * dis_inv)),
        bilip=float(np.max(bilip)),
        vol_ratio_dev=float(np.max(np.abs(ratio - 1.0))),
        global_dis=float(gd),
    )


class Convergence(str, Enum):
    UNIFORM = "Uniform"
    MEAN = "Mean"
    NEITHER = "Neither"


@dataclass(frozen=True)
class ConvergenceThresholds:
    sup: float = 0.1
    mean: float = 0.05
    bilip: float = 4.0
    vol: float = 0.25
    global_: float = 0.25


def _strictly_decreasing(x) -> bool:
    return all(b < a for a, b in zip(x, x[1:]))


def classify_convergence(stats_sequence, thresholds: ConvergenceThresholds | None = None) -> Convergence:
    """Finite-sample reading of the uniform and mean convergence definitions.

    Uniform: ``sup_dis`` strictly decreasing with final value below
    ``thresholds.sup``.  Mean: ``mean_dis`` strictly decreasing and below
    ``thresholds.mean`` at the end, ``bilip`` below its bound throughout, and
    the final volume-ratio and global distortions below theirs.
    """
    seq = list(stats_sequence)
    if not seq:
        raise EmptySequence("no statistics to classify")
    th = thresholds or ConvergenceThresholds()
    sup = [s.sup_dis for s in seq]
    if _strictly_decreasing(sup) and sup[-1] < th.sup:
        return Convergence.UNIFORM
    last = seq[-1]
    mean = [s.mean_dis for s in seq]
    if (_strictly_decreasing(mean) and mean[-1] < th.mean
            and max(s.bilip for s in seq) < th.bilip
            and last.vol_ratio_dev < th.vol and last.global_dis < th.global_):
        return Convergence.MEAN
    return Convergence.NEITHER


# -- file formats --------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % x


def format_bodymesh(mesh: BodyMesh) -> str:
    lines = ["bodymesh 1", f"V {mesh.vertex_count}", f"T {mesh.triangle_count}"]
    for (i, j, k), (a, b, c) in zip(mesh.triangles.tolist(), mesh.ref_lengths.tolist()):
        lines.append(f"{i} {j} {k} {_fmt(a)} {_fmt(b)} {_fmt(c)}")
    return "\n".join(lines) + "\n"


def format_bodyconf(u: Configuration) -> str:
    lines = ["bodyconf 1", f"V {len(u.positions)}"]
    lines += [f"{_fmt(x)} {_fmt(y)}" for x, y in u.positions.tolist()]
    return "\n".join(lines) + "\n"


def _count_line(line: str, tag: str) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != tag:
        raise FormatError(f"expected '{tag} <count>', got {line!r}")
    try:
        n = int(parts[1])
    except ValueError:
        raise FormatError(f"bad count in {line!r}") from None
    if n < 0:
        raise FormatError(f"negative count in {line!r}")
    return n


def _finite(tokens, where: str) -> list[float]:
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise FormatError(f"non-numeric value at {where}") from None
    if not all(math.isfinite(v) for v in vals):
        raise FormatError(f"non-finite value at {where}")
    return vals


def _body_lines(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln.strip()]


def parse_bodymesh(text: str) -> BodyMesh:
    lines = _body_lines(text)
    if len(lines) < 3 or lines[0].split() != ["bodymesh", "1"]:
        raise FormatError("missing 'bodymesh 1' header")
    V = _count_line(lines[1], "V")
    T = _count_line(lines[2], "T")
    body = lines[3:]
    if len(body) != T:
        raise FormatError(f"header declares {T} triangles, file has {len(body)}")
    tri = np.empty((T, 3), dtype=np.int64)
    L = np.empty((T, 3))
    for n, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != 6:
            raise FormatError(f"triangle line {n}: expected 6 fields")
        try:
            tri[n] = [int(p) for p in parts[:3]]
        except ValueError:
            raise FormatError(f"triangle line {n}: bad vertex index") from None
        L[n] = _finite(parts[3:], f"triangle line {n}")
    return BodyMesh(V, tri, L)


def parse_bodyconf(text: str) -> Configuration:
    lines = _body_lines(text)
    if len(lines) < 2 or lines[0].split() != ["bodyconf", "1"]:
        raise FormatError("missing 'bodyconf 1' header")
    V = _count_line(lines[1], "V")
    body = lines[2:]
    if len(body) != V:
        raise FormatError(f"header declares {V} vertices, file has {len(body)}")
    P = np.empty((V, 2))
    for n, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != 2:
            raise FormatError(f"vertex line {n}: expected 2 fields")
        P[n] = _finite(parts, f"vertex line {n}")
    return Configuration(P)


def read_bodymesh(path) -> BodyMesh:
    with open(path) as fh:
        return parse_bodymesh(fh.read())


def write_bodymesh(mesh: BodyMesh, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_bodymesh(mesh))


def read_bodyconf(path) -> Configuration:
    with open(path) as fh:
        return parse_bodyconf(fh.read())


def write_bodyconf(u: Configuration, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_bodyconf(u))
