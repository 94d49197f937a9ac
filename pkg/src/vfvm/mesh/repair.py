"""Restore boundary conformity of 2D Delaunay meshes.

Each boundary or interface edge whose diametrical disk contains a vertex is
split at the orthogonal projection of that vertex onto the edge.  The two
new triangles on either side of the edge are right-angled at the inserted
vertex, so the encroaching vertex no longer encroaches the sub-edges.  The
Delaunay property is then restored locally by Lawson flips that never cross
a boundary or interface edge.
"""

from __future__ import annotations

import logging

import numpy as np

from .. import geometry
from ..errors import MeshError, RepairDiverged
from ..geometry import Location
from .core import Mesh
from .delaunay import non_gabriel

logger = logging.getLogger(__name__)


def _key(a, b):
    return (a, b) if a < b else (b, a)


class _Triangulation:
    """Mutable 2D triangulation used only during repair."""

    def __init__(self, mesh: Mesh, tol: float):
        self.x = [tuple(p) for p in mesh.vertices.tolist()]
        self.tris = [list(t) for t in mesh.cells.tolist()]
        self.regions = mesh.cell_regions.tolist()
        self.bnd = {_key(*f): int(t) for f, t in zip(mesh.facets.tolist(), mesh.facet_tags.tolist())}
        self.tol = tol
        self.edge_tris = {}
        for t in range(len(self.tris)):
            self._register(t)

    def _tri_edges(self, t):
        a, b, c = self.tris[t]
        return (_key(a, b), _key(b, c), _key(c, a))

    def _register(self, t):
        for e in self._tri_edges(t):
            self.edge_tris.setdefault(e, set()).add(t)

    def _unregister(self, t):
        for e in self._tri_edges(t):
            owners = self.edge_tris[e]
            owners.discard(t)
            if not owners:
                del self.edge_tris[e]

    def apexes(self, a, b):
        out = []
        for t in sorted(self.edge_tris.get(_key(a, b), ())):
            out.extend(v for v in self.tris[t] if v != a and v != b)
        return out

    def split_edge(self, a, b, point) -> int:
        n = len(self.x)
        self.x.append(tuple(point))
        owners = sorted(self.edge_tris[_key(a, b)])
        stack = []
        for t in owners:
            self._unregister(t)
            old = self.tris[t]
            first = [n if v == b else v for v in old]
            second = [n if v == a else v for v in old]
            self.tris[t] = first
            self.tris.append(second)
            self.regions.append(self.regions[t])
            self._register(t)
            self._register(len(self.tris) - 1)
            (c,) = [v for v in old if v != a and v != b]
            stack += [_key(a, c), _key(c, b)]
        tag = self.bnd.pop(_key(a, b))
        self.bnd[_key(a, n)] = tag
        self.bnd[_key(n, b)] = tag
        self._legalize(n, stack)
        return n

    def _legalize(self, n, stack):
        while stack:
            e = stack.pop()
            if e in self.bnd:
                continue
            owners = self.edge_tris.get(e)
            if owners is None or len(owners) != 2:
                continue
            t0, t1 = sorted(owners)
            if n not in self.tris[t0]:
                t0, t1 = t1, t0
            if n not in self.tris[t0] or self.regions[t0] != self.regions[t1]:
                continue
            tri = self.tris[t0]
            i = tri.index(n)
            _, u, v = tri[i:] + tri[:i]
            (q,) = [w for w in self.tris[t1] if w != u and w != v]
            # ties keep the existing diagonal
            if not _strictly_in_circle(self.x[n], self.x[u], self.x[v], self.x[q], self.tol):
                continue
            self._unregister(t0)
            self._unregister(t1)
            self.tris[t0] = [n, u, q]
            self.tris[t1] = [n, q, v]
            self._register(t0)
            self._register(t1)
            stack += [_key(u, q), _key(q, v)]

    def to_mesh(self) -> Mesh:
        facets = sorted(self.bnd)
        return Mesh(
            np.array(self.x),
            np.array(self.tris),
            np.array(self.regions),
            np.array(facets, dtype=np.int64).reshape(-1, 2),
            np.array([self.bnd[f] for f in facets], dtype=np.int64),
        )


def _strictly_in_circle(a, b, c, p, tol) -> bool:
    """Closed-form 2D circumcircle test with the relative band of :func:`geometry.classify`."""
    bx, by = b[0] - a[0], b[1] - a[1]
    cx, cy = c[0] - a[0], c[1] - a[1]
    det = 2.0 * (bx * cy - by * cx)
    b2, c2 = bx * bx + by * by, cx * cx + cy * cy
    ox = (cy * b2 - by * c2) / det
    oy = (bx * c2 - cx * b2) / det
    r2 = (ox * ox + oy * oy + (ox - bx) ** 2 + (oy - by) ** 2 + (ox - cx) ** 2 + (oy - cy) ** 2) / 3.0
    d2 = (p[0] - a[0] - ox) ** 2 + (p[1] - a[1] - oy) ** 2
    return d2 < r2 - tol * r2


def _pick_encroacher(tri: _Triangulation, a, b, candidates):
    apexes = [v for v in tri.apexes(a, b) if v in candidates]
    if apexes:
        pool = apexes
    else:
        pool = sorted(candidates)
    pa, pb = np.array(tri.x[a]), np.array(tri.x[b])
    d = pb - pa

    def dist_to_line(v):
        w = np.array(tri.x[v]) - pa
        return abs(d[0] * w[1] - d[1] * w[0])

    return min(pool, key=lambda v: (dist_to_line(v), v))


def repair_boundary_conformity_2d(
    mesh: Mesh,
    max_insertions: int | None = None,
    tol: float = geometry.DEFAULT_TOL,
) -> Mesh:
    """Split encroached boundary/interface edges until every one is Gabriel.

    Returns ``mesh`` itself when nothing needs repair.  Raises
    :class:`RepairDiverged` when more than ``max_insertions`` vertices
    (default ``10 * n_vertices``) would be inserted.
    """
    if mesh.dim != 2:
        raise MeshError("boundary repair is implemented for 2D meshes only")
    if max_insertions is None:
        max_insertions = 10 * mesh.n_vertices
    hits = non_gabriel(mesh, tol)
    if not hits:
        return mesh

    tri = _Triangulation(mesh, tol)
    inserted = 0
    while hits:
        by_edge = {}
        for sub, v in hits:
            by_edge.setdefault(sub, set()).add(v)
        for (a, b), cands in sorted(by_edge.items()):
            if _key(a, b) not in tri.bnd:
                continue
            pa, pb = np.array(tri.x[a]), np.array(tri.x[b])
            ball = geometry.circumcenter(np.array([pa, pb]))
            cands = {v for v in cands if geometry.classify(ball, tri.x[v], tol) == Location.INSIDE}
            if not cands:
                continue
            v = _pick_encroacher(tri, a, b, cands)
            point, bary = geometry.project_onto(np.array([pa, pb]), tri.x[v])
            if bary.min() <= 0.0:
                raise RepairDiverged(f"projection of vertex {v} falls outside edge {a}-{b}")
            if inserted >= max_insertions:
                raise RepairDiverged(f"more than {max_insertions} insertions required")
            n = tri.split_edge(a, b, point)
            inserted += 1
            logger.debug("split edge %d-%d at projection of %d -> vertex %d", a, b, v, n)
        hits = non_gabriel(tri.to_mesh(), tol)
    logger.info("boundary repair inserted %d vertices", inserted)
    return tri.to_mesh()
