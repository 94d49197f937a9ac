"""Per-edge Voronoi facet measures and Voronoi volumes.

Every cell contributes a signed piece of the Voronoi facet dual to each of
its edges.  In 2D the piece is the signed distance from the edge midpoint to
the cell circumcenter (``l * cot(theta) / 2`` with ``theta`` the opposite
angle).  In 3D it is the signed area of the two right triangles
``(C_edge, C_face, C_cell)`` spanned in the plane orthogonal to the edge.
Pieces are negative when the relevant circumcenter lies on the far side;
on a Delaunay mesh the sum over all cells sharing an interior edge is
nonnegative.

The Voronoi volume of vertex ``i`` inside a cell is the union of the
pyramids over the facet pieces of its edges, each with height ``l / 2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import geometry
from ..errors import NegativeContribution
from ..topology import local_edges
from .core import Mesh


@dataclass(frozen=True)
class EdgeGeometry:
    """Per-edge lengths and accumulated signed Voronoi facet measures."""

    edges: np.ndarray  # (ne, 2), i < j
    length: np.ndarray  # (ne,)
    sigma: np.ndarray  # (ne,)
    cell_edges: np.ndarray  # (nc, nle) global edge of each local edge
    cell_sigma: np.ndarray  # (nc, nle) signed per-cell pieces
    cell_regions: np.ndarray

    @property
    def weight(self) -> np.ndarray:
        """Transmissibility ``sigma / length`` per edge."""
        return self.sigma / self.length

    def contributions(self, e: int) -> list[tuple[int, float]]:
        cells, loc = np.nonzero(self.cell_edges == e)
        return [(int(c), float(self.cell_sigma[c, k])) for c, k in zip(cells, loc)]

    def sigma_by_region(self) -> dict[int, np.ndarray]:
        out = {}
        ne = len(self.edges)
        for r in np.unique(self.cell_regions):
            mask = self.cell_regions == r
            out[int(r)] = np.bincount(
                self.cell_edges[mask].ravel(), self.cell_sigma[mask].ravel(), minlength=ne
            )
        return out

    def weighted_sigma(self, coefficient) -> np.ndarray:
        """``sum_cells coef(region) * sigma_cell`` per edge."""
        coef = region_values(coefficient, self.cell_regions)
        return np.bincount(
            self.cell_edges.ravel(),
            (self.cell_sigma * coef[:, None]).ravel(),
            minlength=len(self.edges),
        )


def region_values(coefficient, regions: np.ndarray) -> np.ndarray:
    """Expand a scalar or ``{region: value}`` mapping to one value per cell."""
    if isinstance(coefficient, dict):
        try:
            return np.array([coefficient[int(r)] for r in regions], dtype=float)
        except KeyError as exc:
            raise ValueError(f"no coefficient given for region {exc.args[0]}") from None
    return np.full(len(regions), float(coefficient))


def _cot_opposite(a, b, c):
    """Cotangent of the angle at ``c`` in triangles ``(a, b, c)`` (stacked)."""
    u = a - c
    v = b - c
    dot = np.sum(u * v, axis=-1)
    if u.shape[-1] == 2:
        cross = np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
    else:
        cross = np.linalg.norm(np.cross(u, v), axis=-1)
    return dot / cross


def cell_sigma(mesh: Mesh) -> np.ndarray:
    """Signed Voronoi facet piece of every local edge of every cell."""
    d = mesh.dim
    le = local_edges(d)
    x = mesh.vertices[mesh.cells]  # (nc, d+1, d)
    nc = mesh.n_cells
    if d == 1:
        return np.ones((nc, 1))
    a = x[:, le[:, 0]]
    b = x[:, le[:, 1]]
    length = np.linalg.norm(b - a, axis=-1)
    if d == 2:
        opp = 3 - le[:, 0] - le[:, 1]
        return 0.5 * length * _cot_opposite(a, b, x[:, opp])
    # d == 3: the two vertices not on the edge
    center, _ = geometry.batch_circumcenters(x)
    others = np.array([[k for k in range(4) if k not in pair] for pair in le])
    out = np.zeros((nc, len(le)))
    for face_vertex, far_vertex in ((others[:, 0], others[:, 1]), (others[:, 1], others[:, 0])):
        c = x[:, face_vertex]
        far = x[:, far_vertex]
        h_face = 0.5 * length * _cot_opposite(a, b, c)
        normal = np.cross(b - a, c - a)
        normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
        side = np.sign(np.sum((far - a) * normal, axis=-1))
        h_cell = side * np.sum((center[:, None, :] - a) * normal, axis=-1)
        out += 0.5 * h_face * h_cell
    return out


def edge_geometry(mesh: Mesh) -> EdgeGeometry:
    cs = cell_sigma(mesh)
    edges = mesh.edges
    ne = len(edges)
    length = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    # bincount accumulates in cell order, which keeps sums reproducible
    sigma = np.bincount(mesh.cell_edges.ravel(), cs.ravel(), minlength=ne)
    return EdgeGeometry(
        edges=edges,
        length=length,
        sigma=sigma,
        cell_edges=mesh.cell_edges,
        cell_sigma=cs,
        cell_regions=mesh.cell_regions,
    )


@dataclass(frozen=True)
class VoronoiVolumes:
    volumes: np.ndarray  # (n,)
    cell_contrib: np.ndarray  # (nc, d+1), column k belongs to cells[:, k]
    min_contribution: float

    @property
    def has_negative(self) -> bool:
        return self.min_contribution < 0.0


def voronoi_volumes(mesh: Mesh, geom: EdgeGeometry | None = None, tol: float = 1e-12) -> VoronoiVolumes:
    if geom is None:
        geom = edge_geometry(mesh)
    d = mesh.dim
    le = local_edges(d)
    lengths = geom.length[mesh.cell_edges]
    pyramid = geom.cell_sigma * lengths / (2.0 * d)  # split equally between endpoints
    contrib = np.zeros((mesh.n_cells, d + 1))
    for k, (i, j) in enumerate(le):
        contrib[:, i] += pyramid[:, k]
        contrib[:, j] += pyramid[:, k]
    volumes = np.bincount(mesh.cells.ravel(), contrib.ravel(), minlength=mesh.n_vertices)
    vmin = float(contrib.min()) if contrib.size else 0.0
    # obtuse interior cells give negative corner pieces even on good meshes;
    # only a negative accumulated facet or volume signals a broken dual
    sigma_min = float((geom.sigma / geom.length).min()) if len(geom.sigma) else 0.0
    if sigma_min < -tol or volumes.min() < -tol * abs(mesh.total_measure):
        warnings.warn(
            f"negative accumulated Voronoi measure (min sigma/l {sigma_min:.3e}); "
            "mesh is not boundary conforming Delaunay",
            NegativeContribution,
            stacklevel=2,
        )
    return VoronoiVolumes(volumes=volumes, cell_contrib=contrib, min_contribution=vmin)


def facet_vertex_measures(mesh: Mesh, facets: np.ndarray | None = None) -> np.ndarray:
    """Measure of the (d-1)-dimensional Voronoi piece of each facet vertex.

    Returns an array of shape ``(nf, d)`` aligned with ``facets``.
    """
    if facets is None:
        facets = mesh.facets
    d = mesh.dim
    nf = len(facets)
    if d == 1:
        return np.ones((nf, 1))
    x = mesh.vertices[facets]
    if d == 2:
        half = 0.5 * np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return np.stack([half, half], axis=1)
    out = np.zeros((nf, 3))
    for i, j in ((0, 1), (0, 2), (1, 2)):
        k = 3 - i - j
        a, b = x[:, i], x[:, j]
        lsq = np.sum((b - a) ** 2, axis=1)
        piece = lsq * _cot_opposite(a, b, x[:, k]) / 8.0
        out[:, i] += piece
        out[:, j] += piece
    return out


def boundary_measures(mesh: Mesh, tags=None) -> np.ndarray:
    """Per-vertex Voronoi surface measure over facets with the given tags."""
    facets = mesh.facets
    if tags is not None:
        facets = facets[np.isin(mesh.facet_tags, list(tags))]
    pieces = facet_vertex_measures(mesh, facets)
    return np.bincount(facets.ravel(), pieces.ravel(), minlength=mesh.n_vertices)


@dataclass(frozen=True)
class InterfaceAngles:
    """Angles opposite each interior edge whose two triangles lie in different regions.

    Reported only; no bound is enforced anywhere in the package.
    """

    edges: np.ndarray  # (k, 2) sorted vertex pairs
    regions: np.ndarray  # (k, 2)
    angles: np.ndarray  # (k, 2) radians, same order as regions

    @property
    def count(self) -> int:
        return len(self.edges)

    @property
    def max_angle(self) -> float:
        return float(self.angles.max()) if self.count else 0.0

    @property
    def max_sum(self) -> float:
        return float(self.angles.sum(axis=1).max()) if self.count else 0.0


def interface_angle_stats(mesh: Mesh) -> InterfaceAngles:
    if mesh.dim != 2:
        raise ValueError("interface angle statistics are defined for 2D meshes")
    edges, regions, angles = [], [], []
    for key, (c0, k0), (c1, k1) in mesh.interior_facets():
        r = mesh.cell_regions[[c0, c1]]
        if r[0] == r[1]:
            continue
        pair = []
        for c, k in ((c0, k0), (c1, k1)):
            x = mesh.vertices[mesh.cells[c]]
            u = x[k - 2] - x[k]
            v = x[k - 1] - x[k]
            pair.append(np.arctan2(abs(u[0] * v[1] - u[1] * v[0]), u @ v))
        edges.append(key)
        regions.append(r)
        angles.append(pair)
    return InterfaceAngles(
        edges=np.array(edges, dtype=int).reshape(-1, 2),
        regions=np.array(regions, dtype=int).reshape(-1, 2),
        angles=np.array(angles, dtype=float).reshape(-1, 2),
    )
