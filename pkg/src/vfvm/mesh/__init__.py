"""Mesh representation, Delaunay/Gabriel checks, repair and Voronoi geometry."""

from .core import Mesh
from .delaunay import (
    DelaunayReport,
    check_boundary_conforming,
    check_delaunay,
    locally_non_delaunay_facets,
)
from .generate import (
    load_fixture,
    random_bcd_mesh,
    random_delaunay,
    rectangle,
    structured_grid,
)
from .io import format_mesh, parse_mesh, read_mesh, write_mesh
from .repair import repair_boundary_conformity_2d
from .voronoi import (
    EdgeGeometry,
    InterfaceAngles,
    VoronoiVolumes,
    boundary_measures,
    edge_geometry,
    interface_angle_stats,
    voronoi_volumes,
)

__all__ = [
    "Mesh",
    "DelaunayReport",
    "check_delaunay",
    "check_boundary_conforming",
    "locally_non_delaunay_facets",
    "repair_boundary_conformity_2d",
    "EdgeGeometry",
    "VoronoiVolumes",
    "edge_geometry",
    "voronoi_volumes",
    "InterfaceAngles",
    "interface_angle_stats",
    "boundary_measures",
    "load_fixture",
    "random_bcd_mesh",
    "random_delaunay",
    "rectangle",
    "structured_grid",
    "read_mesh",
    "write_mesh",
    "parse_mesh",
    "format_mesh",
]
