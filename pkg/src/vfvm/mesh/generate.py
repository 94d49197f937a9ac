"""Structured grids, random test meshes and shipped fixture meshes."""

from __future__ import annotations

from importlib import resources

import numpy as np
from scipy.spatial import Delaunay

from .core import Mesh
from .io import parse_mesh

BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4
INTERFACE = 5

FIXTURES = ("delaunay_pair", "nondelaunay_pair", "encroached_triangle", "unit_square")


def load_fixture(name: str) -> Mesh:
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    text = resources.files("vfvm.data").joinpath(f"{name}.mesh").read_text()
    return parse_mesh(text)


def fixture_path(name: str):
    return resources.files("vfvm.data").joinpath(f"{name}.mesh")


def _diagonal_through_lower_left(i: int, j: int, rule: str) -> bool:
    if rule == "uniform":
        return True
    if rule != "mixed":
        raise ValueError(f"unknown diagonal rule {rule!r}")
    # the corner of square (i, j) with both index coordinates odd
    cx = i if i % 2 == 1 else i + 1
    cy = j if j % 2 == 1 else j + 1
    through = cx % 4 == 1
    corner_is_ll_or_ur = (cx == i) == (cy == j)
    return through == corner_is_ll_or_ur


def structured_grid(xs, ys, rule: str = "uniform") -> Mesh:
    """Tensor grid triangulated by a diagonal rule.

    ``uniform`` puts every diagonal from lower left to upper right.
    ``mixed`` reproduces the criss-cross pattern with period four in x: every
    fourth interior vertex on odd rows sits at the center of eight triangles
    while its odd neighbours two steps away only touch four.

    Boundary edges are tagged bottom=1, right=2, top=3, left=4.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * nx + i

    cells = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            ll, lr, ul, ur = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if _diagonal_through_lower_left(i, j, rule):
                cells += [(ll, lr, ur), (ll, ur, ul)]
            else:
                cells += [(ll, lr, ul), (lr, ur, ul)]
    facets, tags = [], []
    for i in range(nx - 1):
        facets.append((vid(i, 0), vid(i + 1, 0)))
        tags.append(BOTTOM)
        facets.append((vid(i, ny - 1), vid(i + 1, ny - 1)))
        tags.append(TOP)
    for j in range(ny - 1):
        facets.append((vid(nx - 1, j), vid(nx - 1, j + 1)))
        tags.append(RIGHT)
        facets.append((vid(0, j), vid(0, j + 1)))
        tags.append(LEFT)
    return Mesh(vertices, cells, None, facets, tags)


def rectangle(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0, rule: str = "uniform") -> Mesh:
    return structured_grid(np.linspace(0.0, lx, nx), np.linspace(0.0, ly, ny), rule)


def interval(xs) -> Mesh:
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    cells = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return Mesh(xs[:, None], cells, None, [[0], [n - 1]], [LEFT, RIGHT])


def _hull_facets(cells: np.ndarray) -> np.ndarray:
    edges = np.sort(cells[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq[counts == 1]


def random_delaunay(n_interior: int, seed=None, width: float = 1.0, height: float = 1.0) -> Mesh:
    """Delaunay triangulation of random points in a rectangle (corners included).

    Hull edges are tagged 1.  The result is Delaunay but usually not
    boundary conforming.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((n_interior, 2)) * [width, height]
    corners = np.array([[0, 0], [width, 0], [width, height], [0, height]], dtype=float)
    pts = np.vstack([corners, pts])
    cells = Delaunay(pts).simplices
    facets = _hull_facets(cells)
    return Mesh(pts, cells, None, facets, np.ones(len(facets), dtype=np.int64))


def random_two_region_mesh(n_interior: int, seed=None, n_interface: int = 4) -> Mesh:
    """Unit square split at ``x = 1/2`` into two regions with a straight interface.

    Each half is Delaunay-triangulated separately, so the interface is made
    of mesh edges; the union is a constrained Delaunay triangulation.
    """
    rng = np.random.default_rng(seed)
    ys = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, n_interface)), [1.0]])
    line = np.column_stack([np.full(len(ys), 0.5), ys])
    verts = [line]
    cells, regions = [], []
    offset = len(line)
    line_idx = np.arange(len(line))
    for region, (x0, x1) in ((1, (0.0, 0.5)), (2, (0.5, 1.0))):
        k = n_interior // 2
        pts = np.column_stack([rng.uniform(x0, x1, k), rng.uniform(0.0, 1.0, k)])
        pts = pts[(pts[:, 0] > x0 + 1e-3) & (pts[:, 0] < x1 - 1e-3)]
        outer = np.array([[x0 if x0 != 0.5 else x1, 0.0], [x0 if x0 != 0.5 else x1, 1.0]])
        local = np.vstack([line, outer, pts])
        idx = np.concatenate([line_idx, offset + np.arange(len(outer) + len(pts))])
        tri = Delaunay(local).simplices
        cells.append(idx[tri])
        regions.append(np.full(len(tri), region))
        verts.append(np.vstack([outer, pts]))
        offset += len(outer) + len(pts)
    vertices = np.vstack(verts)
    cells = np.vstack(cells)
    regions = np.concatenate(regions)
    hull = _hull_facets(cells)
    inner = np.column_stack([line_idx[:-1], line_idx[1:]])
    facets = np.vstack([hull, inner])
    tags = np.concatenate([np.ones(len(hull), dtype=np.int64), np.full(len(inner), INTERFACE)])
    return Mesh(vertices, cells, regions, facets, tags)


def random_bcd_mesh(n_interior: int, seed=None, two_regions: bool = False) -> Mesh:
    """Random boundary conforming Delaunay mesh (random points, then repair)."""
    from .repair import repair_boundary_conformity_2d

    if two_regions:
        mesh = random_two_region_mesh(n_interior, seed)
    else:
        mesh = random_delaunay(n_interior, seed)
    return repair_boundary_conformity_2d(mesh)
