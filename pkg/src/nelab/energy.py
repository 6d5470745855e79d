"""Distortion energy ``W(A) = Dis(A)^p`` and its assembled mesh functional."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _parallel
from .body import BodyMesh, Configuration, deformation_gradients
from .errors import DegenerateMap, NonDifferentiable
from .linmap import (DEGENERACY_TOL, EUCLIDEAN, LinMap2, closest_rotation, dist_to_so_set,
                     distortion, frobenius_norm, random_inner_product, random_matrix)


@dataclass(frozen=True)
class EnergySettings:
    p: float = 2.0
    dis_floor: float = 1e-12

    def __post_init__(self):
        if not (1.0 < self.p < np.inf):
            raise ValueError("p must lie in (1, inf)")
        if not self.dis_floor >= 0:
            raise ValueError("dis_floor must be non-negative")


@dataclass(frozen=True)
class EnergyReport:
    total: float
    per_triangle: np.ndarray
    grad_norm: float


def _density_terms(F: np.ndarray, settings: EnergySettings, want_grad: bool):
    """Per-matrix density and (optionally) its derivative, batched over ``(..., 2, 2)``."""
    R, q = closest_rotation(F)
    # |F - R|^2 = |F|^2 - 4q + 2 avoids forming R where q == 0
    d2 = np.maximum(np.sum(F * F, axis=(-2, -1)) - 4.0 * q + 2.0, 0.0)
    dis = np.sqrt(d2)
    p = settings.p
    W = d2 if p == 2.0 else dis ** p
    if not want_grad:
        return W, None
    if np.any(2.0 * q <= DEGENERACY_TOL):
        raise DegenerateMap("closest rotation not unique for some deformation gradient")
    small = dis <= settings.dis_floor
    if p < 2.0 and np.any(small):
        raise NonDifferentiable(f"density with p = {p} is not differentiable at Dis = 0")
    if p == 2.0:
        coef = np.full_like(dis, 2.0)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = p * dis ** (p - 2.0)
    coef = np.where(small, 0.0, coef)
    G = coef[..., None, None] * (F - R)
    return W, G


def density(A: LinMap2, settings: EnergySettings = EnergySettings()) -> float:
    return float(distortion(A) ** settings.p)


def density_gradient(A: LinMap2, settings: EnergySettings = EnergySettings()) -> LinMap2:
    """Derivative of ``density`` with respect to the entries of ``A`` (Euclidean metrics)."""
    _, G = _density_terms(A.frame_matrix[None], settings, True)
    return LinMap2(G[0])


def _mesh_terms(mesh: BodyMesh, P: np.ndarray, settings: EnergySettings, want_grad: bool):
    def chunk(sl):
        F = deformation_gradients(mesh, P, sl)
        W, G = _density_terms(F, settings, want_grad)
        e = mesh.areas[sl] * W
        if not want_grad:
            return e, None
        # dE/dD = area * G B^T, columns belong to corners 1 and 2
        B = mesh.ref_inverse[sl]
        a = mesh.areas[sl, None]
        H = np.empty_like(G)
        H[:, :, 0] = a * G[:, :, 0] * B[:, 0, 0, None] + a * G[:, :, 1] * B[:, 0, 1, None]
        H[:, :, 1] = a * G[:, :, 1] * B[:, 1, 1, None]
        return e, H

    parts = _parallel.map_chunks(chunk, mesh.triangle_count)
    per = np.concatenate([e for e, _ in parts])
    if not want_grad:
        return per, None
    H = np.concatenate([h for _, h in parts])
    tri = mesh.triangles
    V = mesh.vertex_count
    grad = np.empty((V, 2))
    for c in range(2):
        g1, g2 = H[:, c, 0], H[:, c, 1]
        grad[:, c] = (np.bincount(tri[:, 1], g1, V) + np.bincount(tri[:, 2], g2, V)
                      - np.bincount(tri[:, 0], g1 + g2, V))
    return per, grad


def energy_value(mesh: BodyMesh, positions: np.ndarray, settings: EnergySettings) -> float:
    per, _ = _mesh_terms(mesh, positions, settings, False)
    return float(np.sum(per))


def energy_and_gradient(mesh: BodyMesh, positions: np.ndarray, settings: EnergySettings):
    per, grad = _mesh_terms(mesh, positions, settings, True)
    return float(np.sum(per)), grad, per


def total_energy(mesh: BodyMesh, u: Configuration, settings: EnergySettings = EnergySettings()) -> EnergyReport:
    """``sum_T Area(T) * W(dF_T)`` with the norm of its vertex gradient."""
    u.check(mesh)
    total, grad, per = energy_and_gradient(mesh, u.positions, settings)
    return EnergyReport(total, per, float(np.linalg.norm(grad)))


def total_gradient(mesh: BodyMesh, u: Configuration, settings: EnergySettings = EnergySettings()) -> np.ndarray:
    u.check(mesh)
    return energy_and_gradient(mesh, u.positions, settings)[1]


# -- p-regularity -----------------------------------------------------------------

@dataclass(frozen=True)
class RegularityReport:
    coercivity: bool
    boundedness: bool
    metric_lipschitz: bool
    coercivity_margin: float
    boundedness_margin: float
    lipschitz_margin: float
    samples: int

    @property
    def ok(self) -> bool:
        return self.coercivity and self.boundedness and self.metric_lipschitz


def regularity_constants(p: float) -> tuple[float, float, float]:
    """``(alpha, beta, gamma)`` with ``alpha |A|^p - beta <= W(A) <= gamma (|A|^p + 1)``."""
    return 2.0 ** (1.0 - p), 2.0 ** (p / 2.0), 2.0 ** p


def regularity_margins(A: LinMap2, L: LinMap2, settings: EnergySettings) -> tuple[float, float, float]:
    """Slack of the three growth/continuity inequalities for one ``(A, L)``.

    ``A: (W, h) -> (R^2, e)`` and ``L: (V, g) -> (W, h)``.  The third margin is
    ``(|A| + 4) Dis L - |Dis(A L) - Dis A|`` with ``Dis(A L)`` measured against
    SO(g, e).  Non-negative margins mean the inequality holds.
    """
    p = settings.p
    alpha, beta, gamma = regularity_constants(p)
    W = density(A, settings)
    nA = frobenius_norm(A)
    coer = W - (alpha * nA ** p - beta)
    bound = gamma * (nA ** p + 1.0) - W
    AL = LinMap2(A.entries @ L.entries, L.domain_metric, EUCLIDEAN)
    lhs = abs(dist_to_so_set(AL, L.domain_metric) - dist_to_so_set(A, A.domain_metric))
    lip = (nA + 4.0) * distortion(L) - lhs
    return coer, bound, lip


def p_regularity_check(samples: int, settings: EnergySettings = EnergySettings(),
                       rng: np.random.Generator | None = None) -> RegularityReport:
    """Sample random ``(A, L, g, h)`` and report the worst margin of each condition."""
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    rng = np.random.default_rng(0) if rng is None else rng
    worst = [np.inf, np.inf, np.inf]
    for _ in range(samples):
        g, h = random_inner_product(rng), random_inner_product(rng)
        L = LinMap2(random_matrix(rng, 1.0, positive=True), g, h)
        A = LinMap2(random_matrix(rng, 2.0), h, EUCLIDEAN)
        for i, m in enumerate(regularity_margins(A, L, settings)):
            worst[i] = min(worst[i], m)
    tol = 1e-10
    return RegularityReport(worst[0] >= -tol, worst[1] >= -tol, worst[2] >= -tol,
                            float(worst[0]), float(worst[1]), float(worst[2]), samples)

