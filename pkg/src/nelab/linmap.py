"""Linear maps between oriented inner-product planes.

A map ``A: (V, g) -> (W, h)`` is stored as a plain 2x2 matrix together with the
two metrics.  Every metric quantity is computed on the matrix expressed in
metric-orthonormal frames, ``h^(1/2) A g^(-1/2)``, where the square roots are
symmetric (eigendecomposition of the 2x2 Gram matrix).

Singular values are *signed*: ``sigma1 >= |sigma2|`` and ``sigma1 * sigma2 =
det``, so the singular-value distortion formula stays equal to the Frobenius
distance to SO(2) for orientation-reversing maps as well.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateMap

DEGENERACY_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class InnerProduct2:
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float).reshape(2, 2)
        if not np.all(np.isfinite(m)):
            raise ValueError("metric entries must be finite")
        if m[0, 1] != m[1, 0]:
            raise ValueError("metric must be symmetric")
        if not (m[0, 0] > 0 and m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] > 0):
            raise ValueError("metric must be positive definite")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @cached_property
    def sqrt(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.entries)
        return (v * np.sqrt(w)) @ v.T

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.entries)
        return (v / np.sqrt(w)) @ v.T


EUCLIDEAN = InnerProduct2(np.eye(2))


@dataclass(frozen=True, eq=False)
class LinMap2:
    entries: np.ndarray
    domain_metric: InnerProduct2 = EUCLIDEAN
    codomain_metric: InnerProduct2 = EUCLIDEAN

    def __post_init__(self):
        m = np.array(self.entries, dtype=float).reshape(2, 2)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @cached_property
    def frame_matrix(self) -> np.ndarray:
        """The map in metric-orthonormal frames of domain and codomain."""
        return self.codomain_metric.sqrt @ self.entries @ self.domain_metric.inv_sqrt

    def __matmul__(self, other: "LinMap2") -> "LinMap2":
        # A @ L is A∘L; metrics are taken from the outer factors
        return LinMap2(self.entries @ other.entries, other.domain_metric, self.codomain_metric)


@dataclass(frozen=True)
class SignedSpectrum:
    sigma: tuple[float, float]
    rotation_factor: np.ndarray | None


# -- batched kernels on Euclidean-frame matrices of shape (..., 2, 2) -------

def _conformal_parts(F):
    a, b = F[..., 0, 0], F[..., 0, 1]
    c, d = F[..., 1, 0], F[..., 1, 1]
    e = 0.5 * (a + d)
    h = 0.5 * (c - b)
    f = 0.5 * (a - d)
    g = 0.5 * (c + b)
    return e, f, g, h


def signed_singular_values(F):
    """Signed singular values ``(sigma1, sigma2)`` of 2x2 matrices.

    Uses the conformal/anticonformal split ``F = q*Rot + r*Refl``: then
    ``sigma1 = q + r`` and ``sigma2 = q - r``.
    """
    e, f, g, h = _conformal_parts(F)
    q = np.hypot(e, h)
    r = np.hypot(f, g)
    return q + r, q - r


def closest_rotation(F):
    """Closest rotation(s) in SO(2) to ``F`` in Frobenius norm, plus ``q = (s1+s2)/2``.

    Where ``q == 0`` the minimizer is not unique; those entries come back as NaN.
    """
    e, f, g, h = _conformal_parts(F)
    q = np.hypot(e, h)
    with np.errstate(invalid="ignore", divide="ignore"):
        cs = e / q
        sn = h / q
    R = np.empty(np.shape(F), dtype=float)
    R[..., 0, 0] = cs
    R[..., 0, 1] = -sn
    R[..., 1, 0] = sn
    R[..., 1, 1] = cs
    return R, q


def distortion_values(F):
    """``sqrt((s1-1)^2 + (s2-1)^2)`` for Euclidean-frame matrices."""
    s1, s2 = signed_singular_values(F)
    return np.sqrt((s1 - 1.0) ** 2 + (s2 - 1.0) ** 2)


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotations(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


# -- public scalar API -------------------------------------------------------

def frobenius_norm(A: LinMap2) -> float:
    return float(np.sqrt(np.sum(A.frame_matrix ** 2)))


def operator_norm(A: LinMap2) -> float:
    s1, _ = signed_singular_values(A.frame_matrix)
    return float(s1)


def signed_svd(A: LinMap2) -> SignedSpectrum:
    """Signed spectrum of ``A``; ``rotation_factor`` is None when ``s1 + s2 <= 1e-14``."""
    F = A.frame_matrix
    s1, s2 = signed_singular_values(F)
    R = None
    if s1 + s2 > DEGENERACY_TOL:
        R_hat, _ = closest_rotation(F)
        R = A.codomain_metric.inv_sqrt @ R_hat @ A.domain_metric.sqrt
    return SignedSpectrum((float(s1), float(s2)), R)


def closest_special_isometry(A: LinMap2) -> np.ndarray:
    """Frobenius-closest element of SO(g, h); raises :class:`DegenerateMap` if not unique."""
    svd = signed_svd(A)
    if svd.rotation_factor is None:
        raise DegenerateMap(f"closest rotation not unique (sigma = {svd.sigma[0]!r}, {svd.sigma[1]!r})")
    return svd.rotation_factor


def distortion(A: LinMap2) -> float:
    return float(distortion_values(A.frame_matrix))


def op_dist_to_SO(A: LinMap2) -> float:
    s1, s2 = signed_singular_values(A.frame_matrix)
    return float(max(abs(s1 - 1.0), abs(s2 - 1.0)))


def is_special_isometry(R: np.ndarray, g: InnerProduct2, h: InnerProduct2, tol: float = 1e-10) -> bool:
    """Membership test for SO(g, h): ``R^T h R = g`` and ``det R > 0``."""
    R = np.asarray(R, dtype=float)
    gram = R.T @ h.entries @ R
    scale = max(1.0, float(np.max(np.abs(g.entries))))
    return bool(np.max(np.abs(gram - g.entries)) <= tol * scale and np.linalg.det(R) > 0)


def special_isometry(angle: float, g: InnerProduct2, h: InnerProduct2) -> np.ndarray:
    """The element of SO(g, h) whose orthonormal-frame form is ``rotation(angle)``."""
    return h.inv_sqrt @ rotation(angle) @ g.sqrt


def pullback(L: LinMap2, h: InnerProduct2 | None = None) -> InnerProduct2:
    """``L* h`` on the domain of ``L`` (defaults to ``L``'s codomain metric)."""
    h = L.codomain_metric if h is None else h
    m = L.entries.T @ h.entries @ L.entries
    m = 0.5 * (m + m.T)
    return InnerProduct2(m)


def dist_to_so_set(X: LinMap2, metric: InnerProduct2) -> float:
    """Frobenius distance from ``X: (V, g) -> (R^2, e)`` to the set SO(metric, e).

    Elements of SO(m, e) are ``Rot * m^(1/2)``; in the ``g``-orthonormal frame
    the problem is orthogonal Procrustes against the fixed factor
    ``N = m^(1/2) g^(-1/2)`` and has the closed form
    ``|X|^2 + |N|^2 - 2 (s1 + s2)(X N^T)``.
    """
    Xh = X.entries @ X.domain_metric.inv_sqrt
    N = metric.sqrt @ X.domain_metric.inv_sqrt
    s1, s2 = signed_singular_values(Xh @ N.T)
    d2 = np.sum(Xh ** 2) + np.sum(N ** 2) - 2.0 * (s1 + s2)
    return float(np.sqrt(max(d2, 0.0)))


# -- brute-force oracles -----------------------------------------------------

def sampled_distortion(A: LinMap2, samples: int = 720, refine: bool = True) -> float:
    """Min over ``samples`` equally spaced rotations of the Frobenius distance.

    With ``refine`` the best grid angle is polished by parabolic interpolation
    of the squared distance through it and its two neighbours, and the
    distance is re-evaluated at the interpolated angle.  The raw grid error is
    up to ``sqrt(sigma1 + sigma2) * pi / samples`` near isometries.
    """
    M = A.frame_matrix
    theta = 2.0 * np.pi * np.arange(samples) / samples
    f = np.sum((M[None] - rotations(theta)) ** 2, axis=(1, 2))
    k = int(np.argmin(f))
    best = f[k]
    if refine:
        fm, fp = f[k - 1], f[(k + 1) % samples]
        den = fm - 2.0 * best + fp
        if den > 0:
            h = 2.0 * np.pi / samples
            t = theta[k] + 0.5 * h * (fm - fp) / den
            best = min(best, float(np.sum((M - rotation(t)) ** 2)))
    return float(np.sqrt(best))


def _op_norms(M):
    # largest singular value of each 2x2 in a batch
    s1, _ = signed_singular_values(M)
    return s1


def sampled_op_dist(A: LinMap2, samples: int = 720) -> float:
    R = rotations(2.0 * np.pi * np.arange(samples) / samples)
    return float(np.min(_op_norms(A.frame_matrix[None] - R)))


def so_set_hausdorff_oracle(g: InnerProduct2, h: InnerProduct2, L: LinMap2, samples: int = 720) -> float:
    """Operator-norm Hausdorff distance between SO(g, e) and SO(L* h, e), by sampling.

    Both sets are one-parameter families ``Rot(phi) m^(1/2)``; distances are
    measured with ``g`` as the reference metric on the common domain.  Every
    pair of the ``samples x samples`` grid is evaluated, so the cost is
    quadratic; the sampling error is O(1/samples).
    """
    if samples < 360:
        raise ValueError("samples must be >= 360")
    if np.linalg.det(L.entries) <= 0:
        raise DegenerateMap("L must be an orientation-preserving isomorphism")
    m = L.entries.T @ h.entries @ L.entries
    lh = InnerProduct2(0.5 * (m + m.T))
    rots = rotations(2.0 * np.pi * np.arange(samples) / samples)
    first = rots @ (g.sqrt @ g.inv_sqrt)  # Rot(phi) g^(1/2), in g-frames
    second = rots @ (lh.sqrt @ g.inv_sqrt)
    row_min = np.full(samples, np.inf)
    col_min = np.full(samples, np.inf)
    step = max(1, 2_000_000 // (samples * 4))
    for i0 in range(0, samples, step):
        d = _op_norms(first[i0:i0 + step, None] - second[None, :])
        row_min[i0:i0 + step] = d.min(axis=1)
        np.minimum(col_min, d.min(axis=0), out=col_min)
    return float(max(row_min.max(), col_min.max()))


# -- random instances (tests, check suite) -----------------------------------

def random_inner_product(rng: np.random.Generator, spread: float = 1.0) -> InnerProduct2:
    """SPD metric with eigenvalues in ``[exp(-spread), exp(spread)]``."""
    w = np.exp(rng.uniform(-spread, spread, size=2))
    R = rotation(rng.uniform(0, 2 * np.pi))
    m = (R * w) @ R.T
    m = 0.5 * (m + m.T)
    return InnerProduct2(m)


def random_matrix(rng: np.random.Generator, scale: float = 1.5, positive: bool = False) -> np.ndarray:
    while True:
        M = rng.normal(scale=scale, size=(2, 2))
        if not positive:
            return M
        d = np.linalg.det(M)
        if abs(d) > 1e-3:
            if d < 0:
                M[:, 0] = -M[:, 0]
            return M
