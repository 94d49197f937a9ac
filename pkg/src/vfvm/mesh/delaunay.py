"""Delaunay and Gabriel (boundary conformity) checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .. import geometry
from ..errors import DegenerateSimplex
from ..geometry import Location
from .core import Mesh


@dataclass
class DelaunayReport:
    violating_cells: list = field(default_factory=list)  # (cell, vertex)
    non_gabriel_facets: list = field(default_factory=list)  # (sub-simplex tuple, vertex)
    gabriel_checked: bool = False
    exterior_circumcenters: list = field(default_factory=list)  # diagnostic only

    @property
    def is_delaunay(self) -> bool:
        return not self.violating_cells

    @property
    def is_boundary_conforming(self) -> bool:
        return self.is_delaunay and self.gabriel_checked and not self.non_gabriel_facets

    def summary(self) -> str:
        lines = [
            f"delaunay: {'yes' if self.is_delaunay else 'no'} "
            f"({len(self.violating_cells)} violations)",
        ]
        for c, v in self.violating_cells[:20]:
            lines.append(f"  cell {c} circumball contains vertex {v}")
        if self.gabriel_checked:
            lines.append(
                f"boundary conforming: {'yes' if self.is_boundary_conforming else 'no'} "
                f"({len(self.non_gabriel_facets)} non-Gabriel boundary simplices)"
            )
            for sub, v in self.non_gabriel_facets[:20]:
                lines.append(f"  {'-'.join(map(str, sub))} encroached by vertex {v}")
        lines.append(f"cells with exterior circumcenter: {len(self.exterior_circumcenters)}")
        return "\n".join(lines)


def _ball_hits(mesh: Mesh, simplices: np.ndarray, centers, rsq, tol):
    """All (simplex index, vertex) pairs with the vertex strictly inside the ball."""
    if len(simplices) == 0:
        return []
    tree = cKDTree(mesh.vertices)
    radius = np.sqrt(rsq) * (1.0 + 1e-9) + 1e-300
    candidates = tree.query_ball_point(centers, radius)
    rows, verts = [], []
    for k, cand in enumerate(candidates):
        own = set(simplices[k].tolist())
        for v in cand:
            if v not in own:
                rows.append(k)
                verts.append(v)
    if not rows:
        return []
    rows = np.array(rows)
    verts = np.array(verts)
    where = geometry.batch_classify(centers[rows], rsq[rows], mesh.vertices[verts], tol)
    hit = where == Location.INSIDE
    pairs = sorted(zip(rows[hit].tolist(), verts[hit].tolist()))
    return pairs


def _cell_balls(mesh: Mesh):
    try:
        return geometry.batch_circumcenters(mesh.vertices[mesh.cells])
    except DegenerateSimplex as exc:
        raise DegenerateSimplex("degenerate cell", cell=exc.cell) from None


def exterior_circumcenters(mesh: Mesh, centers=None) -> list[int]:
    if centers is None:
        centers, _ = _cell_balls(mesh)
    x = mesh.vertices[mesh.cells]
    # barycentric coordinates of the circumcenter
    t = np.swapaxes(x[:, 1:] - x[:, :1], 1, 2)
    lam = np.linalg.solve(t, (centers - x[:, 0])[..., None])[..., 0]
    lam0 = 1.0 - lam.sum(axis=1)
    tol = 1e-12
    outside = (lam.min(axis=1) < -tol) | (lam0 < -tol)
    return np.flatnonzero(outside).tolist()


def check_delaunay(mesh: Mesh, tol: float = geometry.DEFAULT_TOL) -> DelaunayReport:
    """Report every (cell, vertex) pair with the vertex inside the open circumball.

    Vertices classified as on the sphere are not violations.
    """
    centers, rsq = _cell_balls(mesh)
    report = DelaunayReport()
    report.violating_cells = _ball_hits(mesh, mesh.cells, centers, rsq, tol)
    report.exterior_circumcenters = exterior_circumcenters(mesh, centers)
    return report


def boundary_subsimplices(mesh: Mesh) -> np.ndarray | list:
    """All boundary/interface sub-simplices of dimension 1 <= m < d."""
    d = mesh.dim
    out = set()
    for f in mesh.facets:
        f = tuple(sorted(f.tolist()))
        for m in range(1, d):
            out.update(itertools.combinations(f, m + 1))
    return sorted(out, key=lambda s: (len(s), s))


def non_gabriel(mesh: Mesh, tol: float = geometry.DEFAULT_TOL) -> list:
    subs = boundary_subsimplices(mesh)
    hits = []
    for size in sorted({len(s) for s in subs}):
        group = np.array([s for s in subs if len(s) == size], dtype=np.int64)
        centers, rsq = geometry.batch_circumcenters(mesh.vertices[group])
        for k, v in _ball_hits(mesh, group, centers, rsq, tol):
            hits.append((tuple(group[k].tolist()), v))
    return hits


def check_boundary_conforming(mesh: Mesh, tol: float = geometry.DEFAULT_TOL) -> DelaunayReport:
    report = check_delaunay(mesh, tol)
    report.non_gabriel_facets = non_gabriel(mesh, tol)
    report.gabriel_checked = True
    return report


def locally_non_delaunay_facets(mesh: Mesh, tol: float = geometry.DEFAULT_TOL) -> list:
    """Interior facets whose opposite vertex lies inside the neighbor's circumball.

    In 2D these are the locally non-Delaunay edges; both cells adjacent to a
    flagged facet are non-Delaunay.
    """
    centers, rsq = _cell_balls(mesh)
    out = []
    for key, (c0, k0), (c1, k1) in mesh.interior_facets():
        p = mesh.vertices[mesh.cells[c1, k1]]
        loc = geometry.classify(geometry.Ball(centers[c0], rsq[c0]), p, tol)
        if loc == Location.INSIDE:
            out.append(key)
    return sorted(out)
