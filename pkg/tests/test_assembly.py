import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from vfvm.assembly import (
    EPS_MACHINE,
    BoundaryCondition,
    apply_boundary_conditions,
    apply_dirichlet_vertices,
    assemble_fem_p1,
    assemble_laplace,
    assemble_mass,
    boundary_flux,
    classify_matrix,
    export_matrix,
    incidence_matrix,
)
from vfvm.errors import MissingBoundaryMeasure
from vfvm.mesh import Mesh, edge_geometry, load_fixture, random_bcd_mesh, random_delaunay, rectangle
from vfvm.mesh.generate import BOTTOM, LEFT, RIGHT, TOP, interval, random_two_region_mesh
from vfvm.solver import solve_linear
from vfvm.topology import adjacency

from conftest import equilateral

seeds = st.integers(0, 10_000)

G2 = [[-1, 1, 0], [-1, 0, 1], [0, -1, 1]]
G3 = [
    [-1, 1, 0, 0],
    [-1, 0, 1, 0],
    [0, -1, 1, 0],
    [-1, 0, 0, 1],
    [0, -1, 0, 1],
    [0, 0, -1, 1],
]


class TestAdjacency:
    def test_displayed(self):
        np.testing.assert_array_equal(adjacency(1), [[-1, 1]])
        np.testing.assert_array_equal(adjacency(2), G2)
        np.testing.assert_array_equal(adjacency(3), G3)

    @pytest.mark.parametrize("i", range(1, 7))
    def test_shape_and_row_sums(self, i):
        g = adjacency(i)
        assert g.shape == (i * (i + 1) // 2, i + 1)
        assert not g.sum(axis=1).any()

    def test_graph_laplacian_of_simplex(self):
        g = adjacency(3).astype(int)
        np.testing.assert_array_equal(g.T @ g, 4 * np.eye(4, dtype=int) - np.ones((4, 4), dtype=int))


def dense(a):
    return np.asarray(a.todense())


class TestLaplace:
    def test_unit_square(self):
        m = load_fixture("unit_square")
        a = dense(assemble_laplace(m))
        g = edge_geometry(m)
        for (i, j), s, l in zip(g.edges, g.sigma, g.length):
            assert a[i, j] == pytest.approx(-s / l, abs=1e-15)
        # the diagonal of the square carries no flux; sides have weight 1/2
        diag_edge = [(i, j) for i, j in g.edges if abs(np.linalg.norm(m.vertices[i] - m.vertices[j]) - np.sqrt(2)) < 1e-12]
        assert len(diag_edge) == 1
        assert a[diag_edge[0]] == pytest.approx(0.0, abs=1e-15)
        side = [a[i, j] for i, j in g.edges if (i, j) != diag_edge[0]]
        np.testing.assert_allclose(side, -0.5, atol=1e-15)

    def test_1d_tridiagonal(self):
        h = 0.25
        a = dense(assemble_laplace(interval([0.0, h, 2 * h])))
        np.testing.assert_allclose(a, np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]) / h, rtol=1e-15)

    def test_pair_delaunay_diagonal_z_pattern(self):
        m = load_fixture("delaunay_pair")
        a = dense(assemble_laplace(m))
        off = a[~np.eye(4, dtype=bool)]
        assert off.max() <= 0.0
        # oracle: weight on edge (i, j) is sum over triangles of cot(opposite)/2
        x = m.vertices
        for i, j in m.edges:
            w = 0.0
            for cell in m.cells:
                if i in cell and j in cell:
                    k = [v for v in cell if v not in (i, j)][0]
                    u, v = x[i] - x[k], x[j] - x[k]
                    w += 0.5 * np.dot(u, v) / abs(u[0] * v[1] - u[1] * v[0])
            assert a[i, j] == pytest.approx(-w, rel=1e-13)

    def test_region_coefficients(self):
        m = random_two_region_mesh(20, seed=3)
        a1 = assemble_laplace(m, {1: 1.0, 2: 1.0})
        np.testing.assert_allclose(dense(a1), dense(assemble_laplace(m)), atol=1e-14)
        a2 = dense(assemble_laplace(m, {1: 2.0, 2: 2.0}))
        np.testing.assert_allclose(a2, 2 * dense(a1), atol=1e-14)

    @given(seeds)
    def test_zero_sums_and_symmetry(self, seed):
        a = assemble_laplace(random_delaunay(30, seed=seed))
        scale = abs(a).max()
        assert np.max(np.abs(np.asarray(a.sum(axis=1)))) <= 1e-12 * scale
        assert (a - a.T).nnz == 0

    def test_factored_form(self):
        m = random_bcd_mesh(20, seed=1)
        g = edge_geometry(m)
        G = incidence_matrix(m)
        root = sp.diags(np.sqrt(g.sigma / g.length))
        b = root @ G
        np.testing.assert_allclose(dense(b.T @ b), dense(assemble_laplace(m)), atol=1e-13)

    def test_drop_positive(self):
        m = load_fixture("nondelaunay_pair")
        assert classify_matrix(assemble_laplace(m)).offending_entries
        assert classify_matrix(assemble_laplace(m, drop_positive=True)).is_z_matrix

    def test_no_explicit_zeros(self):
        a = assemble_laplace(rectangle(4, 4))
        assert np.all(a.data != 0.0)
        assert a.has_sorted_indices


class TestMass:
    def test_unit_square(self):
        np.testing.assert_allclose(assemble_mass(load_fixture("unit_square")).diagonal(), 0.25)

    def test_equilateral(self):
        m = Mesh(equilateral(), [[0, 1, 2]])
        np.testing.assert_allclose(assemble_mass(m).diagonal(), m.total_measure / 3)

    def test_grid_center(self):
        assert assemble_mass(rectangle(3, 3, 2.0, 2.0)).diagonal()[4] == pytest.approx(1.0)

    @given(seeds)
    def test_trace(self, seed):
        m = random_bcd_mesh(20, seed=seed)
        assert assemble_mass(m).diagonal().sum() == pytest.approx(m.total_measure, rel=1e-10)


class TestBoundaryConditions:
    def test_neumann_unchanged(self):
        m = rectangle(4, 4)
        a = assemble_laplace(m)
        rhs = np.arange(16.0)
        a2, rhs2 = apply_boundary_conditions(a, rhs, m, {t: BoundaryCondition.neumann() for t in (1, 2, 3, 4)})
        assert abs(a2 - a).max() == 0.0
        np.testing.assert_array_equal(rhs2, rhs)

    def test_dirichlet_linear_profile(self):
        m = rectangle(9, 9)
        a = assemble_laplace(m)
        bcs = {LEFT: BoundaryCondition.dirichlet(1.0), RIGHT: BoundaryCondition.dirichlet(0.0)}
        a2, rhs = apply_boundary_conditions(a, np.zeros(m.n_vertices), m, bcs)
        u = solve_linear(a2, rhs)
        np.testing.assert_allclose(u, 1.0 - m.vertices[:, 0], atol=1e-6)

    def test_dirichlet_callable(self):
        m = rectangle(6, 6)
        bcs = {t: BoundaryCondition.dirichlet(lambda u, x: x[:, 0] + 2 * x[:, 1]) for t in (1, 2, 3, 4)}
        a, rhs = apply_boundary_conditions(assemble_laplace(m), np.zeros(m.n_vertices), m, bcs)
        u = solve_linear(a, rhs)
        np.testing.assert_allclose(u, m.vertices[:, 0] + 2 * m.vertices[:, 1], atol=1e-9)

    def test_dirichlet_penalty_value(self):
        bc = BoundaryCondition.dirichlet(3.0)
        assert bc.beta == EPS_MACHINE**2
        assert bc.alpha == 1.0 and float(bc.gamma) == -3.0

    def test_robin_constant(self):
        m = random_bcd_mesh(25, seed=2)
        bc = BoundaryCondition.robin(1.0, 1.0, -1.0)
        a, rhs = apply_boundary_conditions(assemble_laplace(m), np.zeros(m.n_vertices), m, {1: bc})
        np.testing.assert_allclose(solve_linear(a, rhs), 1.0, atol=1e-12)

    def test_only_diagonal_changes(self):
        m = rectangle(5, 5)
        a = assemble_laplace(m)
        a2, _ = apply_boundary_conditions(a, np.zeros(25), m, {BOTTOM: BoundaryCondition.robin(2.0, 1.0, 0.0)})
        diff = (a2 - a).tocoo()
        assert np.all(diff.row == diff.col)
        # bottom edge of length 1 gets alpha/beta * ds = 2 * 1 in total
        assert diff.sum() == pytest.approx(2.0)

    def test_eps_scales_boundary_term(self):
        m = rectangle(3, 3)
        bc = {TOP: BoundaryCondition.robin(1.0, 1.0, 0.0)}
        a1, _ = apply_boundary_conditions(sp.csr_matrix((9, 9)), np.zeros(9), m, bc, eps=1.0)
        a3, _ = apply_boundary_conditions(sp.csr_matrix((9, 9)), np.zeros(9), m, bc, eps=3.0)
        np.testing.assert_allclose(a3.diagonal(), 3 * a1.diagonal())

    def test_missing_tag(self):
        m = rectangle(3, 3)
        with pytest.raises(MissingBoundaryMeasure):
            apply_boundary_conditions(assemble_laplace(m), np.zeros(9), m, {42: BoundaryCondition.neumann()})

    def test_zero_beta_rejected(self):
        m = rectangle(3, 3)
        with pytest.raises(ValueError):
            apply_boundary_conditions(assemble_laplace(m), np.zeros(9), m, {1: BoundaryCondition(1.0, 0.0, 0.0)})

    def test_nonlinear_linearization_and_flux_derivative(self):
        m = rectangle(4, 4)
        bc = BoundaryCondition(alpha=lambda u, x: u**2, beta=1.0, gamma=0.5, dalpha=lambda u, x: 2 * u)
        u = np.linspace(0.1, 1.0, 16)
        flux, dflux = boundary_flux(m, {1: bc}, 1.0, u)
        h = 1e-6
        fp, _ = boundary_flux(m, {1: bc}, 1.0, u + h)
        fm, _ = boundary_flux(m, {1: bc}, 1.0, u - h)
        np.testing.assert_allclose(dflux, (fp - fm) / (2 * h), atol=1e-8)
        a, rhs = apply_boundary_conditions(sp.csr_matrix((16, 16)), np.zeros(16), m, {1: bc}, u_lin=u)
        np.testing.assert_allclose(a @ u - rhs, flux, atol=1e-14)

    def test_dirichlet_vertices(self):
        m = rectangle(5, 5)
        a, rhs = apply_dirichlet_vertices(assemble_laplace(m), np.zeros(25), m, [0], [2.0])
        np.testing.assert_allclose(solve_linear(a, rhs), 2.0, rtol=1e-12)
        with pytest.raises(MissingBoundaryMeasure):
            apply_dirichlet_vertices(assemble_laplace(m), np.zeros(25), m, [12], [1.0])


class TestClassify:
    def test_identity(self):
        r = classify_matrix(sp.identity(5, format="csr"))
        assert r.is_s_matrix

    def test_bcd_with_dirichlet_vertex(self):
        m = random_bcd_mesh(30, seed=9)
        a, _ = apply_dirichlet_vertices(assemble_laplace(m), np.zeros(m.n_vertices), m, [0], [0.0])
        r = classify_matrix(a)
        assert r.is_s_matrix and r.irreducible and r.inverse_positive

    def test_pure_neumann_not_inverse_positive(self):
        r = classify_matrix(assemble_laplace(rectangle(3, 3)))
        assert r.is_s_matrix and not r.has_positive_column_sum and not r.inverse_positive

    def test_nondelaunay_pair_offending(self):
        r = classify_matrix(assemble_laplace(load_fixture("nondelaunay_pair")))
        assert not r.is_z_matrix
        (i, j, v), *_ = r.offending_entries
        assert v > 0 and {i, j} == {1, 3}

    def test_reducible(self):
        a = sp.block_diag([assemble_laplace(rectangle(2, 2))] * 2) + sp.identity(8)
        assert not classify_matrix(a).irreducible

    def test_nonsymmetric(self):
        a = sp.csr_matrix(np.array([[2.0, -1.0], [-0.5, 2.0]]))
        r = classify_matrix(a)
        assert r.is_m_matrix and not r.is_s_matrix


class TestFem:
    @given(seeds)
    def test_stiffness_equals_fvm_2d(self, seed):
        m = random_delaunay(40, seed=seed)
        fem, _, _ = assemble_fem_p1(m)
        fvm = assemble_laplace(m)
        scale = abs(fvm).max()
        assert abs(fem - fvm).max() <= 1e-12 * scale

    def test_fem_equals_fvm_on_non_delaunay(self):
        m = load_fixture("nondelaunay_pair")
        fem, _, _ = assemble_fem_p1(m)
        assert abs(fem - assemble_laplace(m)).max() <= 1e-12 * abs(fem).max()

    def test_mass(self):
        m = Mesh([[0, 0], [2, 0], [0, 2]], [[0, 1, 2]])
        _, mass, lumped = assemble_fem_p1(m)
        np.testing.assert_allclose(dense(mass), 2.0 / 12 * (np.ones((3, 3)) + np.eye(3)))
        np.testing.assert_allclose(lumped, 2 * 2.0 / 12)
        assert mass.sum() == pytest.approx(2.0)

    def test_3d_stiffness_row_sums(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
        stiff, mass, _ = assemble_fem_p1(Mesh(pts, [[0, 1, 2, 3]]))
        assert np.max(np.abs(np.asarray(stiff.sum(axis=1)))) < 1e-14
        assert mass.sum() == pytest.approx(1 / 6)


def test_export(tmp_path):
    a = sp.csr_matrix(np.array([[1.0, 0.0], [1 / 3, 2.0]]))
    path = tmp_path / "a.txt"
    export_matrix(a, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "1 1 1"
    r, c, v = lines[1].split()
    assert (r, c) == ("2", "1") and float(v) == 1 / 3
    assert len(lines) == 3
