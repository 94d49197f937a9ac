"""Plain-text mesh format.

Three whitespace separated sections, ``#`` starts a comment::

    <n_vertices> <dim>
    <index> <x_1> ... <x_dim>              (n_vertices lines)
    <n_cells>
    <index> <v_0> ... <v_dim> <region>      (n_cells lines)
    <n_facets>
    <index> <v_0> ... <v_dim-1> <tag>       (n_facets lines)

Indices are 0-based and must appear in order.  Coordinates are written with
``repr`` so a read/write round trip is bit exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import MeshError
from .core import Mesh


def _records(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


class _Reader:
    def __init__(self, text):
        self._it = _records(text)
        self.lineno = 0

    def next(self, what):
        try:
            self.lineno, tokens = next(self._it)
        except StopIteration:
            raise MeshError(f"unexpected end of file while reading {what}", line=self.lineno + 1) from None
        return tokens

    def header(self, what, count):
        tokens = self.next(what)
        if len(tokens) != count:
            raise MeshError(f"{what} header needs {count} field(s), got {len(tokens)}", line=self.lineno)
        try:
            values = [int(t) for t in tokens]
        except ValueError:
            raise MeshError(f"malformed {what} header", line=self.lineno) from None
        if any(v < 0 for v in values):
            raise MeshError(f"negative count in {what} header", line=self.lineno)
        return values

    def row(self, what, index, width, conv):
        tokens = self.next(what)
        if len(tokens) != width + 1:
            raise MeshError(f"{what} {index}: expected {width + 1} fields, got {len(tokens)}", line=self.lineno)
        try:
            if int(tokens[0]) != index:
                raise MeshError(f"{what} index {tokens[0]} out of sequence (expected {index})", line=self.lineno)
            return [conv(t) for t in tokens[1:]]
        except ValueError:
            raise MeshError(f"malformed {what} record", line=self.lineno) from None


def parse_mesh(text: str) -> Mesh:
    r = _Reader(text)
    nv, d = r.header("vertex", 2)
    if d not in (1, 2, 3):
        raise MeshError(f"unsupported dimension {d}", line=r.lineno)
    verts = [r.row("vertex", i, d, float) for i in range(nv)]
    (nc,) = r.header("cell", 1)
    cells = [r.row("cell", i, d + 2, int) for i in range(nc)]
    (nf,) = r.header("facet", 1)
    facets = [r.row("facet", i, d + 1, int) for i in range(nf)]
    trailing = next(r._it, None)
    if trailing is not None:
        raise MeshError("unexpected data after facet section", line=trailing[0])
    cells = np.array(cells, dtype=np.int64).reshape(nc, d + 2)
    facets = np.array(facets, dtype=np.int64).reshape(nf, d + 1)
    return Mesh(
        np.array(verts, dtype=float).reshape(nv, d),
        cells[:, :-1],
        cells[:, -1],
        facets[:, :-1],
        facets[:, -1],
    )


def read_mesh(path) -> Mesh:
    return parse_mesh(Path(path).read_text())


def format_mesh(mesh: Mesh) -> str:
    out = ["# vfvm mesh", f"{mesh.n_vertices} {mesh.dim}"]
    for i, p in enumerate(mesh.vertices.tolist()):
        out.append(" ".join([str(i)] + [repr(float(c)) for c in p]))
    out.append(f"{mesh.n_cells}")
    for i, (c, r) in enumerate(zip(mesh.cells.tolist(), mesh.cell_regions.tolist())):
        out.append(" ".join(map(str, [i, *c, r])))
    out.append(f"{len(mesh.facets)}")
    for i, (f, t) in enumerate(zip(mesh.facets.tolist(), mesh.facet_tags.tolist())):
        out.append(" ".join(map(str, [i, *f, t])))
    return "\n".join(out) + "\n"


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))
