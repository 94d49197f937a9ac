"""Discrete operators of the Voronoi finite volume method.

The Laplace operator is assembled edge by edge from the accumulated facet
weights ``sum_cells eps_cell * sigma_cell / l``.  Summing per edge before
inserting into the matrix is what lets the positive pieces of neighbouring
cells compensate negative ones, so every final off-diagonal entry is
nonpositive on a Delaunay mesh.

Boundary conditions of the third kind ``alpha(u) u + beta(u) du/dn + gamma(u) = 0``
only modify the diagonal and the right-hand side; Dirichlet data use the
penalty ``beta = eps_machine**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import MissingBoundaryMeasure
from .mesh.core import Mesh
from .mesh.voronoi import (
    EdgeGeometry,
    edge_geometry,
    facet_vertex_measures,
    region_values,
    voronoi_volumes,
)
from .topology import adjacency

__all__ = [
    "adjacency",
    "assemble_laplace",
    "assemble_mass",
    "assemble_fem_p1",
    "incidence_matrix",
    "BoundaryCondition",
    "apply_boundary_conditions",
    "apply_dirichlet_vertices",
    "boundary_flux",
    "classify_matrix",
    "MatrixClassReport",
    "export_matrix",
]

EPS_MACHINE = float(np.finfo(float).eps)

Coefficient = Union[float, np.ndarray, Callable]


def _finalize(a: sp.spmatrix) -> sp.csr_matrix:
    a = sp.csr_matrix(a)
    a.sum_duplicates()
    a.eliminate_zeros()
    a.sort_indices()
    return a


def edge_weights(mesh: Mesh, eps=1.0, geom: EdgeGeometry | None = None) -> np.ndarray:
    if geom is None:
        geom = edge_geometry(mesh)
    return geom.weighted_sigma(eps) / geom.length


def laplace_from_weights(edges: np.ndarray, w: np.ndarray, n: int) -> sp.csr_matrix:
    """``sum_e w_e (e_i - e_j)(e_i - e_j)^T`` as a CSR matrix."""
    i, j = edges[:, 0], edges[:, 1]
    diag = np.bincount(i, w, minlength=n) + np.bincount(j, w, minlength=n)
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    vals = np.concatenate([-w, -w, diag])
    return _finalize(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def assemble_laplace(
    mesh: Mesh,
    eps=1.0,
    geom: EdgeGeometry | None = None,
    *,
    drop_positive: bool = False,
) -> sp.csr_matrix:
    """Volume integrated Laplace operator ``A = G^T [eps] G``.

    ``eps`` is a scalar or a ``{region: value}`` mapping.  ``drop_positive``
    zeroes positive off-diagonal entries together with their diagonal share;
    this is an inconsistent discretization kept only for experiments.
    """
    w = edge_weights(mesh, eps, geom)
    if drop_positive:
        w = np.maximum(w, 0.0)
    return laplace_from_weights(mesh.edges, w, mesh.n_vertices)


def incidence_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Global signed edge-vertex incidence (one row per edge, ``-1`` tail, ``+1`` head)."""
    e = mesh.edges
    ne = len(e)
    rows = np.repeat(np.arange(ne), 2)
    cols = e.ravel()
    vals = np.tile([-1.0, 1.0], ne)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, mesh.n_vertices))


def assemble_mass(mesh: Mesh, geom: EdgeGeometry | None = None) -> sp.csr_matrix:
    vols = voronoi_volumes(mesh, geom).volumes
    return _finalize(sp.diags(vols))


# ----------------------------------------------------------------------
# boundary conditions


def _evaluate(coef: Coefficient, u: np.ndarray, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    if callable(coef):
        return np.broadcast_to(np.asarray(coef(u, x), dtype=float), u.shape)
    coef = np.asarray(coef, dtype=float)
    if coef.ndim == 0:
        return np.full(u.shape, float(coef))
    return coef[idx]


@dataclass
class BoundaryCondition:
    """Coefficients of ``alpha(u) u + beta(u) du/dn + gamma(u) = 0``.

    Each coefficient is a constant, an array indexed by global vertex, or a
    callable ``f(u, x)`` evaluated on boundary vertex values and coordinates.
    The optional derivative callables are used by :func:`boundary_flux`.
    """

    alpha: Coefficient = 0.0
    beta: Coefficient = 1.0
    gamma: Coefficient = 0.0
    dalpha: Coefficient = 0.0
    dbeta: Coefficient = 0.0
    dgamma: Coefficient = 0.0

    @classmethod
    def dirichlet(cls, value: Coefficient) -> "BoundaryCondition":
        if callable(value):
            g = value
            gamma = lambda u, x: -np.asarray(g(u, x), dtype=float)  # noqa: E731
        else:
            gamma = -np.asarray(value, dtype=float)
        return cls(alpha=1.0, beta=EPS_MACHINE**2, gamma=gamma)

    @classmethod
    def neumann(cls, flux: float = 0.0) -> "BoundaryCondition":
        """Prescribed outward flux ``du/dn = flux``."""
        return cls(alpha=0.0, beta=1.0, gamma=-flux)

    @classmethod
    def robin(cls, alpha, beta, gamma) -> "BoundaryCondition":
        return cls(alpha=alpha, beta=beta, gamma=gamma)


def _scaled_boundary_measure(mesh: Mesh, tag: int, eps) -> np.ndarray:
    mask = mesh.facet_tags == tag
    if not np.any(mask):
        raise MissingBoundaryMeasure(f"no boundary facets carry tag {tag}")
    facets = mesh.facets[mask]
    pieces = facet_vertex_measures(mesh, facets)
    owners = [cs[0] for cs, m in zip(mesh.facet_cells, mask) if m]
    coef = region_values(eps, mesh.cell_regions[owners])
    return np.bincount(facets.ravel(), (pieces * coef[:, None]).ravel(), minlength=mesh.n_vertices)


def apply_boundary_conditions(
    a: sp.spmatrix,
    rhs: np.ndarray,
    mesh: Mesh,
    bcs: dict[int, BoundaryCondition],
    eps=1.0,
    u_lin: np.ndarray | None = None,
):
    """Return ``(A', rhs')`` with the boundary terms added.

    Adds ``ds * eps * alpha / beta`` to the diagonal and subtracts
    ``ds * eps * gamma / beta`` from the right-hand side, where ``ds`` is the
    Voronoi surface measure of the boundary vertex.  Nonlinear coefficients
    are frozen at ``u_lin``.
    """
    n = mesh.n_vertices
    if u_lin is None:
        u_lin = np.zeros(n)
    diag = np.zeros(n)
    rhs = np.array(rhs, dtype=float, copy=True)
    for tag, bc in sorted(bcs.items()):
        ds = _scaled_boundary_measure(mesh, tag, eps)
        idx = np.flatnonzero(ds)
        u, x = u_lin[idx], mesh.vertices[idx]
        beta = _evaluate(bc.beta, u, x, idx)
        if np.any(beta == 0.0):
            raise ValueError(f"beta vanishes on boundary tag {tag}; use BoundaryCondition.dirichlet")
        diag[idx] += ds[idx] * _evaluate(bc.alpha, u, x, idx) / beta
        rhs[idx] -= ds[idx] * _evaluate(bc.gamma, u, x, idx) / beta
    return _finalize(sp.csr_matrix(a) + sp.diags(diag)), rhs


def apply_dirichlet_vertices(a, rhs, mesh: Mesh, vertices, values, eps=1.0):
    """Penalty Dirichlet data on selected boundary vertices.

    Uses the same ``ds * eps / beta`` scaling as :func:`apply_boundary_conditions`
    with ``ds`` the vertex's surface measure over all boundary facets.
    """
    vertices = np.asarray(vertices, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), vertices.shape)
    facets = mesh.facets
    pieces = facet_vertex_measures(mesh, facets)
    owners = [cs[0] for cs in mesh.facet_cells]
    coef = region_values(eps, mesh.cell_regions[owners]) if len(owners) else np.zeros(0)
    ds = np.bincount(facets.ravel(), (pieces * coef[:, None]).ravel(), minlength=mesh.n_vertices)
    if np.any(ds[vertices] <= 0.0):
        bad = vertices[ds[vertices] <= 0.0][0]
        raise MissingBoundaryMeasure(f"vertex {bad} has no boundary surface measure")
    penalty = ds[vertices] / EPS_MACHINE**2
    diag = np.zeros(mesh.n_vertices)
    np.add.at(diag, vertices, penalty)
    rhs = np.array(rhs, dtype=float, copy=True)
    np.add.at(rhs, vertices, penalty * values)
    return _finalize(sp.csr_matrix(a) + sp.diags(diag)), rhs


def boundary_flux(mesh: Mesh, bcs: dict[int, BoundaryCondition], eps, u: np.ndarray):
    """Outflow ``ds eps (u alpha + gamma) / beta`` per vertex and its derivative."""
    n = mesh.n_vertices
    flux = np.zeros(n)
    dflux = np.zeros(n)
    for tag, bc in sorted(bcs.items()):
        ds = _scaled_boundary_measure(mesh, tag, eps)
        idx = np.flatnonzero(ds)
        ui, x = u[idx], mesh.vertices[idx]
        al, be, ga = (_evaluate(c, ui, x, idx) for c in (bc.alpha, bc.beta, bc.gamma))
        dal, dbe, dga = (_evaluate(c, ui, x, idx) for c in (bc.dalpha, bc.dbeta, bc.dgamma))
        num = ui * al + ga
        flux[idx] += ds[idx] * num / be
        dflux[idx] += ds[idx] * ((al + ui * dal + dga) * be - num * dbe) / be**2
    return flux, dflux


# ----------------------------------------------------------------------
# matrix classification


@dataclass
class MatrixClassReport:
    symmetric: bool
    is_z_matrix: bool
    positive_diagonal: bool
    column_sums_nonneg: bool
    irreducible: bool
    has_positive_column_sum: bool
    offending_entries: list = field(default_factory=list)

    @property
    def is_m_matrix(self) -> bool:
        return self.is_z_matrix and self.positive_diagonal and self.column_sums_nonneg

    @property
    def is_s_matrix(self) -> bool:
        return self.symmetric and self.is_m_matrix

    @property
    def inverse_positive(self) -> bool:
        """Sufficient condition: irreducible M-matrix with a positive column sum."""
        return self.is_m_matrix and self.irreducible and self.has_positive_column_sum


def classify_matrix(a: sp.spmatrix, rel_tol: float = 1e-13) -> MatrixClassReport:
    """Sign-pattern classification of a square sparse matrix.

    Off-diagonal entries count as zero below ``rel_tol`` times the largest
    off-diagonal magnitude; column sums are compared against ``rel_tol``
    times the column's absolute sum.  Scaling by the off-diagonal part keeps
    the test meaningful when Dirichlet penalties put huge values on the
    diagonal.
    """
    a = sp.coo_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("classify_matrix needs a square matrix")
    off = a.row != a.col
    off_vals = a.data[off]
    scale = float(np.abs(off_vals).max()) if off_vals.size else 1.0
    zero_tol = rel_tol * scale

    csr = a.tocsr()
    diff = abs(csr - csr.T)
    symmetric = diff.nnz == 0 or float(diff.max()) <= zero_tol

    positive = off_vals > zero_tol
    offending = sorted(
        zip(a.row[off][positive].tolist(), a.col[off][positive].tolist(), off_vals[positive].tolist())
    )
    diag = csr.diagonal()
    col_sum = np.asarray(csr.sum(axis=0)).ravel()
    col_abs = np.asarray(abs(csr).sum(axis=0)).ravel()
    pattern = sp.coo_matrix(
        (np.ones(int(np.count_nonzero(off_vals))), (a.row[off][off_vals != 0], a.col[off][off_vals != 0])),
        shape=(n, n),
    )
    ncomp, _ = connected_components(pattern, directed=True, connection="strong")
    return MatrixClassReport(
        symmetric=symmetric,
        is_z_matrix=not offending,
        positive_diagonal=bool(np.all(diag > 0.0)),
        column_sums_nonneg=bool(np.all(col_sum >= -rel_tol * col_abs)),
        irreducible=ncomp == 1,
        has_positive_column_sum=bool(np.any(col_sum > rel_tol * col_abs)),
        offending_entries=offending,
    )


# ----------------------------------------------------------------------
# P1 finite elements


def assemble_fem_p1(mesh: Mesh):
    """P1 stiffness, consistent mass, and the mass diagonal ``2|omega_i|/((d+1)(d+2))``."""
    d = mesh.dim
    n = mesh.n_vertices
    x = mesh.vertices[mesh.cells]
    p = x[:, 1:] - x[:, :1]  # rows v_j - v_0
    vol = mesh.cell_volumes
    grads = np.swapaxes(np.linalg.inv(p), 1, 2)  # row j: gradient of barycentric j+1
    grads = np.concatenate([-grads.sum(axis=1, keepdims=True), grads], axis=1)
    k_loc = vol[:, None, None] * np.einsum("kid,kjd->kij", grads, grads)
    m_loc = vol[:, None, None] / ((d + 1) * (d + 2)) * (np.ones((d + 1, d + 1)) + np.eye(d + 1))
    rows = np.repeat(mesh.cells, d + 1, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, d + 1)).ravel()
    stiff = _finalize(sp.coo_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n)))
    mass = _finalize(sp.coo_matrix((m_loc.ravel(), (rows, cols)), shape=(n, n)))
    return stiff, mass, mass.diagonal()


def export_matrix(a: sp.spmatrix, path) -> None:
    """Coordinate text: ``row col value`` per line, 1-based, 17 significant digits."""
    a = sp.coo_matrix(a)
    order = np.lexsort((a.col, a.row))
    lines = [f"{r + 1} {c + 1} {v:.17g}" for r, c, v in zip(a.row[order], a.col[order], a.data[order])]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
