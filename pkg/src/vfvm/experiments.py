"""Diagnostic experiments on the discrete operators.

Each ``run_*`` function returns an :class:`ExperimentReport` whose
``quantities`` use stable keys (documented per function) so scripts and
tests can read them back from the key=value output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import geometry
from .assembly import (
    BoundaryCondition,
    apply_boundary_conditions,
    apply_dirichlet_vertices,
    assemble_fem_p1,
    assemble_laplace,
    assemble_mass,
    classify_matrix,
    laplace_from_weights,
)
from .errors import NegativeContribution
from .mesh.core import Mesh
from .mesh.delaunay import check_delaunay
from .mesh.generate import BOTTOM, LEFT, RIGHT, TOP, interval, load_fixture, random_bcd_mesh, random_delaunay, structured_grid
from .mesh.repair import repair_boundary_conformity_2d
from .mesh.voronoi import edge_geometry
from .solver import solve_linear


@dataclass
class ExperimentReport:
    name: str
    passed: bool
    quantities: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"experiment {self.name}: {'PASS' if self.passed else 'FAIL'}"]
        width = max((len(k) for k in self.quantities), default=0)
        for k, v in self.quantities.items():
            lines.append(f"  {k:<{width}}  {_fmt(v)}")
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)

    def to_keyvalue(self) -> str:
        lines = [f"name={self.name}", f"passed={str(self.passed).lower()}"]
        lines += [f"{k}={_fmt(v)}" for k, v in self.quantities.items()]
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


# ----------------------------------------------------------------------
# weak discrete maximum principle


def _boundary_vertices(mesh: Mesh) -> np.ndarray:
    return np.unique(mesh.facets)


def run_max_principle(
    meshes=None,
    trials: int = 5,
    seed=42,
    n_meshes: int = 50,
    n_points: int = 40,
    rel_tol: float = 1e-10,
) -> ExperimentReport:
    """Harmonic solutions with random Dirichlet data stay within the data range.

    Keys: ``meshes``, ``solves``, ``violations``, ``max_excess`` (largest
    overshoot relative to the data range), ``nondelaunay_positive_offdiag``
    (positive off-diagonal entries of the Laplace matrix on the
    non-Delaunay fixture).
    """
    rng = np.random.default_rng(seed)
    if meshes is None:
        meshes = [random_bcd_mesh(n_points, seed=int(s)) for s in rng.integers(0, 2**31, n_meshes)]
    violations = 0
    max_excess = 0.0
    solves = 0
    for mesh in meshes:
        a = assemble_laplace(mesh)
        bnd = _boundary_vertices(mesh)
        for _ in range(trials):
            data = rng.random(len(bnd))
            mat, rhs = apply_dirichlet_vertices(a, np.zeros(mesh.n_vertices), mesh, bnd, data)
            u = solve_linear(mat, rhs)
            lo, hi = data.min(), data.max()
            span = max(hi - lo, np.finfo(float).tiny)
            excess = max(lo - u.min(), u.max() - hi, 0.0) / span
            max_excess = max(max_excess, excess)
            violations += int(excess > rel_tol)
            solves += 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeContribution)
        bad = classify_matrix(assemble_laplace(load_fixture("nondelaunay_pair")))
    positive = len(bad.offending_entries)
    report = ExperimentReport(
        "max-principle",
        violations == 0 and positive > 0,
        {
            "meshes": len(meshes),
            "solves": solves,
            "violations": violations,
            "max_excess": max_excess,
            "nondelaunay_positive_offdiag": positive,
        },
    )
    for i, j, v in bad.offending_entries:
        report.notes.append(f"non-Delaunay fixture: A[{i},{j}] = {v:.6g} > 0")
    return report


# ----------------------------------------------------------------------
# residual sign at a jump across a non-Delaunay edge


def star_laplace(weights) -> sp.csr_matrix:
    """Laplace matrix of a star: centre vertex 0, leaves ``1..k`` with given edge weights."""
    w = np.asarray(weights, dtype=float)
    k = len(w)
    edges = np.column_stack([np.zeros(k, dtype=np.int64), np.arange(1, k + 1)])
    return laplace_from_weights(edges, w, k + 1)


def run_non_delaunay_jump(k: int = 5, eps: float = 1e-7, seed=42) -> ExperimentReport:
    """Residual at a vertex next to a jump, with and without a negative edge weight.

    Vertex ``i`` (index 0) has neighbours ``1..k``; ``u_1 = 1 - eps`` and all
    other values lie in ``(0, eps]``.  The non-Delaunay stencil has weight
    ``-1`` on edge ``i-1`` and ``+1`` elsewhere.

    Keys: ``r_nondel``, ``r_del``, ``delta_u_del`` (Newton correction at ``i``
    with the Delaunay Jacobian), ``delta_u_nondel`` and ``band`` (the
    tolerance ``10 eps k``).
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    rng = np.random.default_rng(seed)
    u = np.empty(k + 1)
    if eps > 0:
        u[0] = eps * (1.0 - rng.random())
        u[2:] = eps * (1.0 - rng.random(k - 1))
    else:
        u[0] = 0.0
        u[2:] = 0.0
    u[1] = 1.0 - eps
    w_del = np.ones(k)
    w_non = w_del.copy()
    w_non[0] = -1.0
    a_del = star_laplace(w_del)
    a_non = star_laplace(w_non)
    r_del = float((a_del @ u)[0])
    r_non = float((a_non @ u)[0])

    def correction(jac, f):
        # neighbours carry Dirichlet data: their rows become identity, rhs 0
        jac = sp.lil_matrix(jac)
        rhs = -f.copy()
        for j in range(1, k + 1):
            jac.rows[j] = [j]
            jac.data[j] = [1.0]
            rhs[j] = 0.0
        return float(solve_linear(sp.csr_matrix(jac), rhs)[0])

    du_del = correction(a_del, a_del @ u)
    du_non = correction(a_non, a_non @ u)
    band = 10.0 * eps * k
    passed = abs(r_non - 1.0) <= band and abs(r_del + 1.0) <= band and du_del > 0.0
    rep = ExperimentReport(
        "non-delaunay-jump",
        passed,
        {"k": k, "eps": eps, "r_nondel": r_non, "r_del": r_del, "delta_u_del": du_del,
         "delta_u_nondel": du_non, "band": band},
    )
    if du_non < 0:
        rep.notes.append("the non-Delaunay Jacobian pushes u_i away from its neighbours")
    return rep


# ----------------------------------------------------------------------
# criss-cross grids


def _x_variation(u: np.ndarray, nx: int, ny: int) -> float:
    grid = u.reshape(ny, nx)
    return float(np.max(grid.max(axis=1) - grid.min(axis=1)))


def _solve_helmholtz(stiff, mass, mesh, c):
    """``(A - c M) u = 0`` with ``u = 1`` at the bottom and ``u = 0`` at the top."""
    bcs = {BOTTOM: BoundaryCondition.dirichlet(1.0), TOP: BoundaryCondition.dirichlet(0.0)}
    mat, rhs = apply_boundary_conditions(stiff - c * mass, np.zeros(mesh.n_vertices), mesh, bcs)
    return solve_linear(mat, rhs)


def mixed_grid_mass(rule: str, h: float = 0.125, nx: int = 5, ny: int = 3):
    """FEM lumped mass entries at index vertices (1, 1) and (3, 1) of an ``h`` grid."""
    mesh = structured_grid(np.arange(nx) * h, np.arange(ny) * h, rule)
    _, _, lumped = assemble_fem_p1(mesh)
    return float(lumped[nx + 1]), float(lumped[nx + 3])


def run_crisscross(
    nx: int = 17,
    ny: int = 9,
    c: float = 0.0,
    rule: str = "mixed",
    xs=None,
    seed=42,
    tol: float = 1e-10,
) -> ExperimentReport:
    """x-invariance of the FVM solution of ``u'' + c u = 0`` extended to 2D.

    The grid has non-uniform random x-steps on ``(0, 2)`` unless ``xs`` is
    given, and uniform steps in y.

    Keys: ``x_variation_fvm``, ``x_variation_fem`` (FEM with consistent mass,
    reported only), ``max_diff_1d`` (FVM against the 1D discrete solution),
    ``max_diff_exact`` (c = 0 only, against ``1 - y``), ``M11_over_h2`` and
    ``M22_over_h2``.
    """
    rng = np.random.default_rng(seed)
    if xs is None:
        steps = rng.uniform(0.5, 1.5, nx - 1)
        xs = np.concatenate([[0.0], np.cumsum(steps)]) * (2.0 / steps.sum())
    xs = np.asarray(xs, dtype=float)
    nx = len(xs)
    ys = np.linspace(0.0, 1.0, ny)
    mesh = structured_grid(xs, ys, rule)

    geom = edge_geometry(mesh)
    u = _solve_helmholtz(assemble_laplace(mesh, 1.0, geom), assemble_mass(mesh, geom), mesh, c)
    var_fvm = _x_variation(u, nx, ny)

    line = interval(ys)
    a1 = assemble_laplace(line) - c * assemble_mass(line)
    line_bcs = {LEFT: BoundaryCondition.dirichlet(1.0), RIGHT: BoundaryCondition.dirichlet(0.0)}
    m1, r1 = apply_boundary_conditions(a1, np.zeros(ny), line, line_bcs)
    u1 = solve_linear(m1, r1)
    diff_1d = float(np.max(np.abs(u.reshape(ny, nx) - u1[:, None])))

    stiff, mass, _ = assemble_fem_p1(mesh)
    var_fem = _x_variation(_solve_helmholtz(stiff, mass, mesh, c), nx, ny)

    h = 0.125
    m11, m22 = mixed_grid_mass(rule, h)
    q = {
        "nx": nx,
        "ny": ny,
        "c": c,
        "rule": rule,
        "x_variation_fvm": var_fvm,
        "x_variation_fem": var_fem,
        "max_diff_1d": diff_1d,
    }
    passed = var_fvm <= tol
    if c == 0.0:
        exact = float(np.max(np.abs(u.reshape(ny, nx) - (1.0 - ys)[:, None])))
        q["max_diff_exact"] = exact
        passed = passed and exact <= 1e-10
    q["M11_over_h2"] = m11 / h**2
    q["M22_over_h2"] = m22 / h**2
    return ExperimentReport("crisscross", passed, q)


# ----------------------------------------------------------------------
# compensation on tetrahedron pairs

ACUTE_PAIR = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.85, 0.0], [0.5, 0.3, 0.8], [0.5, 0.3, -0.8]]
)
ADVERSARIAL_PAIR = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.9, 0.0], [0.2, 1.1, 0.2], [0.4, -0.2, -0.9]]
)
_S3 = np.sqrt(3.0) / 2.0
COSPHERICAL_PAIR = np.array(
    [[1.0, 0.0, 0.0], [-0.5, _S3, 0.0], [-0.5, -_S3, 0.0], [0.6, 0.0, 0.8], [0.0, 0.6, -0.8]]
)
PAIR_CELLS = [[0, 1, 2, 3], [0, 1, 2, 4]]


def pair_contributions(points, edge=(0, 1)):
    """Per-tetrahedron signed facet pieces of ``edge`` in a two-tet mesh."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeContribution)
        mesh = Mesh(points, PAIR_CELLS)
        geom = edge_geometry(mesh)
    e = int(np.flatnonzero((geom.edges[:, 0] == edge[0]) & (geom.edges[:, 1] == edge[1]))[0])
    contrib = [v for _, v in sorted(geom.contributions(e))]
    return mesh, contrib


def facet_polygon_area(points, edge, faces, center) -> float:
    """Area of the polygon (edge midpoint, face circumcenter, centre, other face circumcenter).

    The polygon lies in the plane orthogonal to the edge; it is projected to
    2D and measured by the shoelace formula.
    """
    p = np.asarray(points, dtype=float)
    a, b = p[edge[0]], p[edge[1]]
    t = (b - a) / np.linalg.norm(b - a)
    e1 = np.cross(t, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 0.5:
        e1 = np.cross(t, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(t, e1)
    f1 = geometry.circumcenter(p[list(faces[0])]).center
    f2 = geometry.circumcenter(p[list(faces[1])]).center
    poly = np.array([0.5 * (a + b), f1, center, f2])
    xy = np.column_stack([poly @ e1, poly @ e2])
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def run_compensation_3d() -> ExperimentReport:
    """Per-tetrahedron contributions to a shared edge for three fixed pairs.

    Keys: ``acute_contrib_0/1``, ``adversarial_contrib_0/1``,
    ``adversarial_sum``, ``cospherical_sum`` and ``cospherical_oracle``.
    """
    q = {}
    _, acute = pair_contributions(ACUTE_PAIR)
    mesh_adv, adv = pair_contributions(ADVERSARIAL_PAIR)
    _, cos = pair_contributions(COSPHERICAL_PAIR)
    oracle = facet_polygon_area(COSPHERICAL_PAIR, (0, 1), [(0, 1, 3), (0, 1, 4)], np.zeros(3))
    q["acute_contrib_0"], q["acute_contrib_1"] = acute
    q["adversarial_contrib_0"], q["adversarial_contrib_1"] = adv
    q["adversarial_sum"] = sum(adv)
    q["adversarial_is_delaunay"] = check_delaunay(mesh_adv).is_delaunay
    q["cospherical_sum"] = sum(cos)
    q["cospherical_oracle"] = oracle
    passed = (
        min(acute) > 0.0
        and min(adv) < 0.0
        and sum(adv) >= 0.0
        and q["adversarial_is_delaunay"]
        and abs(sum(cos) - oracle) <= 1e-12 * max(1.0, oracle)
    )
    return ExperimentReport("compensation-3d", passed, q)


def run_compensation_2d(n_meshes: int = 200, n_points: int = 40, seed: int = 42, tol: float = 1e-10) -> ExperimentReport:
    """Accumulated facet measures on random 2D Delaunay meshes.

    Boundary conforming meshes are checked on every edge.  The raw
    triangulations they come from are checked on interior edges only, since
    a hull edge has a single triangle and nothing to compensate with.

    Keys: ``meshes``, ``min_sigma_bcd``, ``min_sigma_interior``,
    ``negative_cell_pieces`` (count of negative per-cell pieces seen).
    """
    rng = np.random.default_rng(seed)
    min_bcd = np.inf
    min_interior = np.inf
    negative = 0
    for _ in range(n_meshes):
        s = int(rng.integers(2**31))
        raw = random_delaunay(n_points, seed=s)
        g = edge_geometry(raw)
        negative += int(np.count_nonzero(g.cell_sigma < 0))
        inner = np.bincount(g.cell_edges.ravel(), minlength=len(g.edges)) == 2
        if inner.any():
            min_interior = min(min_interior, float(g.sigma[inner].min()))
        bcd = repair_boundary_conformity_2d(raw)
        min_bcd = min(min_bcd, float(edge_geometry(bcd).sigma.min()))
    q = {
        "meshes": n_meshes,
        "min_sigma_bcd": min_bcd,
        "min_sigma_interior": min_interior,
        "negative_cell_pieces": negative,
    }
    return ExperimentReport("compensation-2d", min_bcd >= -tol and min_interior >= -tol, q)


EXPERIMENTS = {
    "max-principle": run_max_principle,
    "non-delaunay-jump": run_non_delaunay_jump,
    "crisscross": run_crisscross,
    "compensation-3d": run_compensation_3d,
    "compensation-2d": run_compensation_2d,
}
