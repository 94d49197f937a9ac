"""Vertex-to-edge adjacency matrices of a single simplex."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _adjacency(i: int) -> np.ndarray:
    if i == 1:
        return np.array([[-1, 1]], dtype=np.int8)
    prev = _adjacency(i - 1)
    top = np.hstack([prev, np.zeros((prev.shape[0], 1), dtype=np.int8)])
    bottom = np.hstack([-np.eye(i, dtype=np.int8), np.ones((i, 1), dtype=np.int8)])
    return np.vstack([top, bottom])


def adjacency(i: int) -> np.ndarray:
    """Signed edge-vertex incidence of an ``i``-simplex, built recursively.

    The result has ``i (i + 1) / 2`` rows (edges) and ``i + 1`` columns
    (vertices).  Row ``k`` holds ``-1`` at the tail and ``+1`` at the head of
    local edge ``k`` so that ``adjacency(i) @ u`` gives edge differences.
    """
    if i < 1:
        raise ValueError("adjacency is defined for dimension >= 1")
    out = _adjacency(i).copy()
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def local_edges(d: int) -> np.ndarray:
    """``(tail, head)`` local vertex pairs in the row order of ``adjacency(d)``."""
    g = _adjacency(d)
    tails = np.argmax(g == -1, axis=1)
    heads = np.argmax(g == 1, axis=1)
    out = np.stack([tails, heads], axis=1)
    out.flags.writeable = False
    return out
