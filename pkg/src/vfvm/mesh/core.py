"""Simplicial mesh container."""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .. import geometry
from ..errors import DegenerateSimplex, MeshError
from ..topology import local_edges

SNAP_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class Mesh:
    """Vertices, cells with region tags, and tagged boundary/interface facets.

    Cells are reoriented on construction so that every signed volume is
    positive.  A facet listed in ``facets`` that is shared by two cells is an
    interface facet; both cells must then carry different region tags.

    Instances are treated as immutable: arrays are read-only and derived
    topology is cached.
    """

    def __init__(
        self,
        vertices,
        cells,
        cell_regions=None,
        facets=None,
        facet_tags=None,
        *,
        snap_tol: float = SNAP_TOL,
        validate: bool = True,
    ):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        cells = np.array(cells, dtype=np.int64).reshape(-1, vertices.shape[1] + 1)
        d = vertices.shape[1]
        if d not in (1, 2, 3):
            raise MeshError(f"unsupported dimension {d}")
        if cell_regions is None:
            cell_regions = np.ones(len(cells), dtype=np.int64)
        cell_regions = np.array(cell_regions, dtype=np.int64).reshape(len(cells))
        if facets is None:
            facets = np.zeros((0, d), dtype=np.int64)
        facets = np.array(facets, dtype=np.int64).reshape(-1, d)
        if facet_tags is None:
            facet_tags = np.ones(len(facets), dtype=np.int64)
        facet_tags = np.array(facet_tags, dtype=np.int64).reshape(len(facets))

        if validate:
            self._validate_indices(vertices, cells, facets)
            cells = self._orient(vertices, cells)
        self.vertices = _readonly(vertices)
        self.cells = _readonly(cells)
        self.cell_regions = _readonly(cell_regions)
        self.facets = _readonly(facets)
        self.facet_tags = _readonly(facet_tags)
        if validate:
            self._validate_facets()
            self._validate_duplicates(snap_tol)

    # ------------------------------------------------------------------
    # validation

    @staticmethod
    def _validate_indices(vertices, cells, facets):
        n = len(vertices)
        if not np.all(np.isfinite(vertices)):
            raise MeshError("non-finite vertex coordinates")
        for name, arr in (("cell", cells), ("facet", facets)):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                bad = int(np.flatnonzero((arr < 0).any(1) | (arr >= n).any(1))[0])
                raise MeshError(f"{name} {bad} references a vertex out of range")
            for row in np.flatnonzero(np.any(np.diff(np.sort(arr, axis=1), axis=1) == 0, axis=1)):
                raise MeshError(f"{name} {int(row)} repeats a vertex")

    @staticmethod
    def _orient(vertices, cells):
        if len(cells) == 0:
            return cells
        vol = geometry.batch_signed_volumes(vertices[cells])
        lengths = np.linalg.norm(vertices[cells][:, 1:] - vertices[cells][:, :1], axis=2)
        scale = np.prod(lengths, axis=1)
        scaled = np.abs(vol) / scale
        bad = np.flatnonzero(~(scaled > geometry.DEGENERACY_TOL))
        if bad.size:
            raise DegenerateSimplex("zero signed volume", cell=int(bad[0]))
        cells = cells.copy()
        neg = vol < 0
        cells[neg, 0], cells[neg, 1] = cells[neg, 1].copy(), cells[neg, 0].copy()
        return cells

    def _validate_facets(self):
        if len(self.facets) == 0:
            return
        owners = self.facet_cells
        for k, cs in enumerate(owners):
            if len(cs) == 0:
                raise MeshError(f"boundary facet {k} is not a facet of any cell")
            if len(cs) == 2 and self.cell_regions[cs[0]] == self.cell_regions[cs[1]]:
                raise MeshError(f"interface facet {k} separates cells of the same region")

    def _validate_duplicates(self, snap_tol):
        if len(self.vertices) < 2:
            return
        extent = float(np.ptp(self.vertices, axis=0).max()) or 1.0
        pairs = cKDTree(self.vertices).query_pairs(snap_tol * extent)
        if pairs:
            i, j = sorted(min(pairs))
            raise MeshError(f"vertices {i} and {j} coincide within snap tolerance")

    # ------------------------------------------------------------------
    # basic properties

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def __repr__(self):
        return (
            f"Mesh(dim={self.dim}, vertices={self.n_vertices}, cells={self.n_cells}, "
            f"facets={len(self.facets)})"
        )

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        return _readonly(geometry.batch_signed_volumes(self.vertices[self.cells]))

    @cached_property
    def total_measure(self) -> float:
        return float(np.sum(self.cell_volumes))

    # ------------------------------------------------------------------
    # topology

    @cached_property
    def _edge_data(self):
        le = local_edges(self.dim)
        pairs = self.cells[:, le]  # (nc, nle, 2)
        pairs = np.sort(pairs, axis=2).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return _readonly(edges), _readonly(inverse.reshape(self.n_cells, len(le)))

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, lexicographically ordered."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """Global edge index of every local edge, in ``adjacency(d)`` row order."""
        return self._edge_data[1]

    @cached_property
    def _facet_map(self):
        d = self.dim
        faces = [np.sort(np.delete(self.cells, k, axis=1), axis=1).tolist() for k in range(d + 1)]
        table = {}
        for c in range(self.n_cells):
            for k in range(d + 1):
                table.setdefault(tuple(faces[k][c]), []).append((c, k))
        return table

    @cached_property
    def facet_cells(self) -> list:
        """Cells owning each listed boundary/interface facet."""
        table = self._facet_map
        return [[c for c, _ in table.get(tuple(sorted(f.tolist())), [])] for f in self.facets]

    def interior_facets(self):
        """Yield ``(facet, (c0, k0), (c1, k1))`` for facets shared by two cells.

        ``k`` is the local index of the vertex opposite the facet.
        """
        for key, owners in self._facet_map.items():
            if len(owners) == 2:
                yield key, owners[0], owners[1]

    @cached_property
    def hull_facets(self) -> np.ndarray:
        """Facets owned by exactly one cell (the topological boundary)."""
        out = [key for key, owners in self._facet_map.items() if len(owners) == 1]
        return np.array(sorted(out), dtype=np.int64).reshape(-1, self.dim)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return _readonly(np.unique(self.facets))

    def with_facets(self, facets, facet_tags) -> "Mesh":
        return Mesh(self.vertices, self.cells, self.cell_regions, facets, facet_tags)

    def copy_arrays(self):
        return (
            self.vertices.copy(),
            self.cells.copy(),
            self.cell_regions.copy(),
            self.facets.copy(),
            self.facet_tags.copy(),
        )
