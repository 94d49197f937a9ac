"""Sparse linear solves and an undamped Newton iteration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NotConverged, SingularJacobian, SingularMatrix

DIRECT_LIMIT = 5000
PENALTY_RATIO = 1e12


@dataclass(frozen=True)
class LinearSolveConfig:
    """``method`` is ``auto``, ``direct`` or ``cg``; ``max_iter`` defaults to ``10 n``."""

    method: str = "auto"
    rel_tol: float = 1e-12
    max_iter: int | None = None

    def __post_init__(self):
        if self.method not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown linear solve method {self.method!r}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


def factorize(a: sp.spmatrix, error=SingularMatrix):
    """Sparse LU factorization; raises ``error`` when a pivot vanishes.

    Minimum degree ordering on ``A^T + A`` suits the structurally symmetric
    operators assembled here.
    """
    try:
        return splu(sp.csc_matrix(a), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise error(f"sparse LU failed: {exc}") from None


def conjugate_gradient(a, b, rel_tol=1e-12, max_iter=None, x0=None):
    """Jacobi-preconditioned CG.  Returns ``(x, iterations)``."""
    a = sp.csr_matrix(a)
    n = len(b)
    if max_iter is None:
        max_iter = 10 * n
    d = a.diagonal()
    if np.any(d <= 0.0):
        raise SingularMatrix("CG needs a positive diagonal")
    m_inv = 1.0 / d
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    z = m_inv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        if np.linalg.norm(r) <= rel_tol * bnorm:
            return x, it - 1
        ap = a @ p
        pap = p @ ap
        if pap <= 0.0:
            raise NotConverged("CG breakdown: matrix is not positive definite")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = m_inv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= rel_tol * bnorm:
        return x, max_iter
    raise NotConverged(f"CG did not reach rel_tol {rel_tol:g} in {max_iter} iterations")


def solve_linear(a: sp.spmatrix, b: np.ndarray, cfg: LinearSolveConfig | None = None) -> np.ndarray:
    cfg = cfg or LinearSolveConfig()
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or len(b) != n:
        raise ValueError(f"shape mismatch: matrix {a.shape}, rhs {b.shape}")
    method = cfg.method
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "cg"
    if method == "direct":
        x = factorize(a).solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("direct solve produced non-finite values")
        return x
    return _cg_condensed(sp.csr_matrix(a), b, cfg)


def _cg_condensed(a: sp.csr_matrix, b: np.ndarray, cfg: LinearSolveConfig) -> np.ndarray:
    """CG with penalty-dominated rows eliminated first.

    A row whose diagonal exceeds ``PENALTY_RATIO`` times its off-diagonal
    sum fixes its unknown to ``b_i / a_ii`` up to that ratio.  Left in the
    system such rows swamp the residual norm and CG stops before the other
    unknowns are resolved.
    """
    d = a.diagonal()
    off = np.asarray(abs(a).sum(axis=1)).ravel() - np.abs(d)
    fixed = d > PENALTY_RATIO * off
    if not fixed.any() or fixed.all():
        x, _ = conjugate_gradient(a, b, cfg.rel_tol, cfg.max_iter)
        return x
    free = ~fixed
    x = np.zeros(len(b))
    x[fixed] = b[fixed] / d[fixed]
    rhs = b[free] - a[free][:, fixed] @ x[fixed]
    x[free], _ = conjugate_gradient(a[free][:, free], rhs, cfg.rel_tol, cfg.max_iter)
    x[fixed] += (b[fixed] - a[fixed] @ x) / d[fixed]
    return x


@dataclass(frozen=True)
class NewtonConfig:
    """Convergence when the residual norm drops below ``abs_tol`` or the
    max-norm of the update drops below ``step_tol`` (if set)."""

    abs_tol: float = 1e-10
    max_iter: int = 25
    step_tol: float | None = None

    def __post_init__(self):
        if not self.abs_tol > 0 or (self.step_tol is not None and not self.step_tol > 0):
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    history: list = field(default_factory=list)


def newton_solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], sp.spmatrix],
    x0,
    cfg: NewtonConfig | None = None,
    norm: Callable[[np.ndarray], float] | None = None,
) -> NewtonResult:
    """Plain Newton iteration, no damping or line search.

    ``norm`` measures the residual (default: max norm).  Raises
    :class:`NotConverged` after ``max_iter`` iterations or on a non-finite
    residual, and :class:`SingularJacobian` when the linear solve fails.
    """
    cfg = cfg or NewtonConfig()
    norm = norm or (lambda r: float(np.max(np.abs(r))) if r.size else 0.0)
    x = np.array(x0, dtype=float, copy=True)
    r = np.asarray(residual_fn(x), dtype=float)
    history = [norm(r)]
    for it in range(1, cfg.max_iter + 1):
        if not np.isfinite(history[-1]):
            raise NotConverged("non-finite residual in Newton iteration")
        if history[-1] <= cfg.abs_tol:
            return NewtonResult(x, it - 1, history)
        jac = jacobian_fn(x)
        if sp.issparse(jac):
            dx = factorize(jac, SingularJacobian).solve(-r)
            if not np.all(np.isfinite(dx)):
                raise SingularJacobian("Newton update is not finite")
        else:
            try:
                dx = np.linalg.solve(np.atleast_2d(jac), -np.atleast_1d(r)).reshape(x.shape)
            except np.linalg.LinAlgError:
                raise SingularJacobian("Jacobian is singular") from None
        x = x + dx
        r = np.asarray(residual_fn(x), dtype=float)
        history.append(norm(r))
        if cfg.step_tol is not None and np.max(np.abs(dx)) <= cfg.step_tol and np.isfinite(history[-1]):
            return NewtonResult(x, it, history)
    if np.isfinite(history[-1]) and history[-1] <= cfg.abs_tol:
        return NewtonResult(x, cfg.max_iter, history)
    raise NotConverged(f"Newton did not converge in {cfg.max_iter} iterations (residual {history[-1]:.3e})")
