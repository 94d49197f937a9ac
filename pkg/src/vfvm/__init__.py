"""Voronoi finite volumes on boundary conforming Delaunay meshes."""

__version__ = "0.1.0"
