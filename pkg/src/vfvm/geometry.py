"""Geometric kernel: circumballs, diametrical balls, projections, measures.

All functions accept simplices as arrays of vertex coordinates with shape
``(m + 1, d)``.  The ``batch_*`` variants operate on stacks of simplices of
shape ``(k, m + 1, d)`` and are what the mesh routines use internally.

Predicates are tolerance based.  A point whose squared distance to the ball
center is within ``tol * radius_sq`` of ``radius_sq`` is reported as
:attr:`Location.ON_SPHERE`; co-circular configurations are therefore
classified explicitly instead of by the sign of a rounding error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSimplex

DEFAULT_TOL = 1e-12
DEGENERACY_TOL = 1e-12


class Location(enum.IntEnum):
    INSIDE = -1
    ON_SPHERE = 0
    OUTSIDE = 1


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius_sq: float

    @property
    def radius(self) -> float:
        return math.sqrt(self.radius_sq)


def _as_simplex(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] < 2:
        raise ValueError(f"expected (m+1, d) vertex array, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("simplex coordinates must be finite")
    return s


def _local_frame(s: np.ndarray, degeneracy_tol: float):
    """Orthonormal basis of the affine hull of ``s`` and local edge coordinates."""
    edges = s[1:] - s[0]
    lengths = np.linalg.norm(edges, axis=1)
    if np.any(lengths == 0.0):
        raise DegenerateSimplex("coincident vertices")
    q, r = np.linalg.qr(edges.T)
    scaled_det = abs(np.prod(np.diag(r))) / np.prod(lengths)
    if scaled_det < degeneracy_tol:
        raise DegenerateSimplex(f"scaled determinant {scaled_det:.3e}")
    return q, r


def circumcenter(s, degeneracy_tol: float = DEGENERACY_TOL) -> Ball:
    """Circumball of a simplex, computed within its own affine hull.

    For a full-dimensional simplex this is the circumball; for a lower
    dimensional one it is the smallest ball whose boundary passes through all
    vertices (the diametrical ball).
    """
    s = _as_simplex(s)
    q, r = _local_frame(s, degeneracy_tol)
    # local edge vectors are the columns of r
    rhs = 0.5 * np.sum(r * r, axis=0)
    y = np.linalg.solve(r.T, rhs)
    center = s[0] + q @ y
    radius_sq = float(np.mean(np.sum((s - center) ** 2, axis=1)))
    return Ball(center, radius_sq)


def classify(ball: Ball, p, tol: float = DEFAULT_TOL) -> Location:
    p = np.asarray(p, dtype=float)
    dist_sq = float(np.sum((p - ball.center) ** 2))
    band = tol * ball.radius_sq
    if dist_sq < ball.radius_sq - band:
        return Location.INSIDE
    if dist_sq > ball.radius_sq + band:
        return Location.OUTSIDE
    return Location.ON_SPHERE


def in_open_circumball(s, p, tol: float = DEFAULT_TOL) -> Location:
    s = _as_simplex(s)
    if s.shape[0] != s.shape[1] + 1:
        raise ValueError("in_open_circumball needs a full-dimensional simplex")
    return classify(circumcenter(s), p, tol)


def in_diametrical_ball(sub, p, tol: float = DEFAULT_TOL) -> Location:
    sub = _as_simplex(sub)
    if sub.shape[0] > sub.shape[1]:
        raise ValueError("in_diametrical_ball needs a lower-dimensional simplex")
    return classify(circumcenter(sub), p, tol)


def project_onto(sub, p, degeneracy_tol: float = DEGENERACY_TOL):
    """Orthogonal projection of ``p`` onto the affine hull of ``sub``.

    Returns ``(point, barycentric)``; the point lies inside the closed
    simplex iff all barycentric coordinates are nonnegative.
    """
    sub = _as_simplex(sub)
    p = np.asarray(p, dtype=float)
    q, r = _local_frame(sub, degeneracy_tol)
    local = q.T @ (p - sub[0])
    lam = np.linalg.solve(r, local)
    bary = np.concatenate([[1.0 - lam.sum()], lam])
    return sub[0] + q @ local, bary


def measure(s) -> float:
    """Lebesgue measure of an m-simplex in d dimensions (0 when degenerate)."""
    s = np.asarray(s, dtype=float)
    edges = s[1:] - s[0]
    m = edges.shape[0]
    gram = edges @ edges.T
    det = np.linalg.det(gram)
    return math.sqrt(max(det, 0.0)) / math.factorial(m)


def signed_volume(s) -> float:
    s = np.asarray(s, dtype=float)
    edges = s[1:] - s[0]
    return float(np.linalg.det(edges)) / math.factorial(edges.shape[0])


# --------------------------------------------------------------------------
# batched versions


def batch_signed_volumes(simplices: np.ndarray) -> np.ndarray:
    edges = simplices[:, 1:] - simplices[:, :1]
    d = edges.shape[1]
    if d == 1:
        return edges[:, 0, 0]
    return np.linalg.det(edges) / math.factorial(d)


def batch_measures(simplices: np.ndarray) -> np.ndarray:
    edges = simplices[:, 1:] - simplices[:, :1]
    m = edges.shape[1]
    if m == 1:
        return np.linalg.norm(edges[:, 0], axis=1)
    gram = np.einsum("kid,kjd->kij", edges, edges)
    return np.sqrt(np.maximum(np.linalg.det(gram), 0.0)) / math.factorial(m)


def batch_circumcenters(simplices: np.ndarray, degeneracy_tol: float = DEGENERACY_TOL):
    """Circumcenters and squared radii of a stack of simplices.

    Raises :class:`DegenerateSimplex` with the index of the first offending
    simplex.
    """
    simplices = np.asarray(simplices, dtype=float)
    k, npts, d = simplices.shape
    if npts == 2:
        center = 0.5 * (simplices[:, 0] + simplices[:, 1])
        rsq = 0.25 * np.sum((simplices[:, 1] - simplices[:, 0]) ** 2, axis=1)
        bad = np.flatnonzero(rsq == 0.0)
        if bad.size:
            raise DegenerateSimplex("zero-length edge", cell=int(bad[0]))
        return center, rsq
    edges = simplices[:, 1:] - simplices[:, :1]
    lengths = np.linalg.norm(edges, axis=2)
    q, r = np.linalg.qr(np.swapaxes(edges, 1, 2))
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.prod(diag, axis=1) / np.prod(lengths, axis=1)
    bad = np.flatnonzero(~(scaled >= degeneracy_tol))
    if bad.size:
        raise DegenerateSimplex(f"scaled determinant {scaled[bad[0]]:.3e}", cell=int(bad[0]))
    rhs = 0.5 * np.sum(r * r, axis=1)
    y = np.linalg.solve(np.swapaxes(r, 1, 2), rhs[..., None])[..., 0]
    center = simplices[:, 0] + np.einsum("kdm,km->kd", q, y)
    rsq = np.mean(np.sum((simplices - center[:, None, :]) ** 2, axis=2), axis=1)
    return center, rsq


def batch_classify(centers, radius_sq, points, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Elementwise classification of ``points[k]`` against ball ``k``."""
    dist_sq = np.sum((points - centers) ** 2, axis=-1)
    band = tol * radius_sq
    out = np.full(dist_sq.shape, Location.ON_SPHERE, dtype=int)
    out[dist_sq < radius_sq - band] = Location.INSIDE
    out[dist_sq > radius_sq + band] = Location.OUTSIDE
    return out
