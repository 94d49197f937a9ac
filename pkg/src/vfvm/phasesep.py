"""Nonlocal phase separation with a dissipative implicit Euler scheme.

Model on a domain with homogeneous Neumann boundary::

    u_t = div( f (grad u + u (1 - u) grad w) )
    -sigma^2 lap w + w = m (1 - 2u)

with ``phi(u) = u ln u + (1 - u) ln(1 - u)`` and free energy
``F(u) = sum_i V_i phi(u_i) + sum_i V_i u_i wt_i`` where ``wt`` solves the
potential problem with right-hand side ``m (1 - u)``.

Every step solves the coupled system for ``(u+, w+)`` with Newton's method::

    V (u+ - u) / tau + G^T f ( G u+ + [a] G (w+ + w) / 2 ) = 0
    (sigma^2 G^T G + V) w+ = V m (1 - 2 u+)

The edge mobility ``a`` defaults to the logarithmic mean
``(u_i - u_j) / (phi'(u_i) - phi'(u_j))``.  With it ``G u = [a] G phi'(u)``
holds edgewise, the flux is a multiple of the jump of ``phi'(u+) + (w+ + w)/2``,
and convexity of ``phi`` gives ``F(u+) <= F(u)`` for every step size.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_laplace, incidence_matrix
from .errors import NewtonFailure, NotConverged, OutOfBounds, SingularMatrix, StepFloorReached, LinearSolveFailure
from .mesh.core import Mesh
from .mesh.voronoi import edge_geometry, voronoi_volumes
from .solver import NewtonConfig, factorize, newton_solve

logger = logging.getLogger(__name__)

MOBILITIES = ("logmean", "arithmetic")


@dataclass(frozen=True)
class PhaseModel:
    sigma: float = 2.0
    m_coef: float = 8.0
    f_coef: float = 4.0
    eps0: float = 1e-7
    mobility: str = "logmean"

    def __post_init__(self):
        for name in ("sigma", "m_coef", "f_coef"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.eps0 < 0.5:
            raise ValueError("eps0 must lie in (0, 0.5)")
        if self.mobility not in MOBILITIES:
            raise ValueError(f"mobility must be one of {MOBILITIES}")


def _check_bounds(u: np.ndarray) -> None:
    if not np.all((u > 0.0) & (u < 1.0)):
        bad = np.flatnonzero(~((u > 0.0) & (u < 1.0)))
        raise OutOfBounds(f"{len(bad)} value(s) outside (0, 1), first at index {bad[0]}")


def phi_derivatives(u):
    """``(phi, phi', phi'')`` of the logarithmic entropy."""
    u = np.asarray(u, dtype=float)
    _check_bounds(np.atleast_1d(u))
    v = 1.0 - u
    phi = u * np.log(u) + v * np.log(v)
    return phi, np.log(u) - np.log(v), 1.0 / (u * v)


# ----------------------------------------------------------------------
# edge mobility


def _q(r):
    """``atanh(r) / r`` and its derivative, accurate near ``r = 0``."""
    r = np.asarray(r, dtype=float)
    q = np.empty_like(r)
    dq = np.empty_like(r)
    small = np.abs(r) < 0.1
    rs = r[small]
    r2 = rs * rs
    acc = np.zeros_like(rs)
    dacc = np.zeros_like(rs)
    for k in range(12, 0, -1):
        acc = acc * r2 + 1.0 / (2 * k + 1)
        dacc = dacc * r2 + 2.0 * k / (2 * k + 1)
    q[small] = 1.0 + r2 * acc
    dq[small] = rs * dacc
    rl = r[~small]
    at = np.arctanh(rl)
    q[~small] = at / rl
    dq[~small] = (rl / (1.0 - rl * rl) - at) / (rl * rl)
    return q, dq


def edge_mobility(x, y, kind: str = "logmean"):
    """Edge value of ``1/phi''`` and its partial derivatives in ``x`` and ``y``.

    ``logmean`` is ``(x - y) / (logit x - logit y)``, evaluated as
    ``1 / (2 q(r1) / s1 + 2 q(r2) / s2)`` with ``s1 = x + y``, ``s2 = 2 - x - y``,
    ``r = (x - y) / s`` and ``q(r) = atanh(r) / r`` so there is no
    cancellation for close arguments.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind == "arithmetic":
        a = 0.5 * (x * (1.0 - x) + y * (1.0 - y))
        return a, 0.5 * (1.0 - 2.0 * x), 0.5 * (1.0 - 2.0 * y)
    if kind != "logmean":
        raise ValueError(f"unknown mobility {kind!r}")
    cx, cy = 1.0 - x, 1.0 - y
    s1 = x + y
    s2 = cx + cy
    d = x - y
    r1, r2 = d / s1, d / s2
    q1, dq1 = _q(r1)
    q2, dq2 = _q(r2)
    s = 2.0 * q1 / s1 + 2.0 * q2 / s2
    a = 1.0 / s
    ds_dx = 4.0 * dq1 * y / s1**3 - 2.0 * q1 / s1**2 + 4.0 * dq2 * cy / s2**3 + 2.0 * q2 / s2**2
    ds_dy = -4.0 * dq1 * x / s1**3 - 2.0 * q1 / s1**2 - 4.0 * dq2 * cx / s2**3 + 2.0 * q2 / s2**2
    return a, -a * a * ds_dx, -a * a * ds_dy


# ----------------------------------------------------------------------
# discrete problem


class PhaseProblem:
    """Mesh dependent operators shared by all steps of a run."""

    def __init__(self, mesh: Mesh, model: PhaseModel):
        self.mesh = mesh
        self.model = model
        geom = edge_geometry(mesh)
        self.volumes = voronoi_volumes(mesh, geom).volumes
        self.edges = geom.edges
        self.weights = geom.sigma / geom.length
        self.n = mesh.n_vertices
        self.laplace = assemble_laplace(mesh, 1.0, geom)
        self.incidence = incidence_matrix(mesh)
        self.mass = sp.diags(self.volumes)
        self.potential_matrix = sp.csc_matrix(model.sigma**2 * self.laplace + self.mass)
        try:
            self._potential_lu = factorize(self.potential_matrix)
        except SingularMatrix as exc:
            raise LinearSolveFailure(str(exc)) from None

    @property
    def total_measure(self) -> float:
        return float(self.volumes.sum())

    def potential(self, rhs_density: np.ndarray) -> np.ndarray:
        """Solve ``(sigma^2 A + V) w = V rhs_density``."""
        w = self._potential_lu.solve(self.volumes * rhs_density)
        if not np.all(np.isfinite(w)):
            raise LinearSolveFailure("potential solve produced non-finite values")
        return w

    def mass_total(self, u) -> float:
        return float(self.volumes @ u)

    # residual and Jacobian of the coupled step system, unknowns [u+, w+]

    def _edge_terms(self, u_plus, w_bar):
        i, j = self.edges[:, 0], self.edges[:, 1]
        a, da_i, da_j = edge_mobility(u_plus[i], u_plus[j], self.model.mobility)
        du = u_plus[j] - u_plus[i]
        dw = w_bar[j] - w_bar[i]
        kappa = self.model.f_coef * self.weights
        return i, j, a, da_i, da_j, du, dw, kappa

    def flux_divergence(self, u_plus, w_bar) -> np.ndarray:
        """``G^T f (G u+ + [a] G w_bar / 2)``."""
        i, j, a, _, _, du, dw, kappa = self._edge_terms(u_plus, w_bar)
        g = kappa * (du + 0.5 * a * dw)
        return np.bincount(j, g, minlength=self.n) - np.bincount(i, g, minlength=self.n)

    def coupled_residual(self, x, u_old, w_old, tau) -> np.ndarray:
        n = self.n
        u_plus, w_plus = x[:n], x[n:]
        _check_bounds(u_plus)
        m = self.model.m_coef
        r_u = self.volumes * (u_plus - u_old) / tau + self.flux_divergence(u_plus, w_plus + w_old)
        r_w = self.potential_matrix @ w_plus - self.volumes * m * (1.0 - 2.0 * u_plus)
        return np.concatenate([r_u, r_w])

    def coupled_jacobian(self, x, u_old, w_old, tau) -> sp.csr_matrix:
        n = self.n
        u_plus, w_plus = x[:n], x[n:]
        _check_bounds(u_plus)
        i, j, a, da_i, da_j, du, dw, kappa = self._edge_terms(u_plus, w_plus + w_old)
        ne = len(i)
        rows = np.concatenate([np.arange(ne), np.arange(ne)])
        cols = np.concatenate([i, j])
        dg_du = sp.csr_matrix(
            (np.concatenate([kappa * (-1.0 + 0.5 * dw * da_i), kappa * (1.0 + 0.5 * dw * da_j)]), (rows, cols)),
            shape=(ne, n),
        )
        half = 0.5 * kappa * a
        dg_dw = sp.csr_matrix((np.concatenate([-half, half]), (rows, cols)), shape=(ne, n))
        gt = self.incidence.T
        j_uu = sp.diags(self.volumes / tau) + gt @ dg_du
        j_uw = gt @ dg_dw
        j_wu = sp.diags(2.0 * self.model.m_coef * self.volumes)
        return sp.bmat([[j_uu, j_uw], [j_wu, self.potential_matrix]], format="csc")


def _problem(mesh_or_problem, model: PhaseModel | None) -> PhaseProblem:
    if isinstance(mesh_or_problem, PhaseProblem):
        return mesh_or_problem
    if model is None:
        raise ValueError("a PhaseModel is required together with a Mesh")
    return PhaseProblem(mesh_or_problem, model)


def solve_potential(mesh_or_problem, model: PhaseModel | None, u) -> np.ndarray:
    """Interaction potential ``w`` for concentration ``u``."""
    p = _problem(mesh_or_problem, model)
    return p.potential(p.model.m_coef * (1.0 - 2.0 * np.asarray(u, dtype=float)))


def free_energy(mesh_or_problem, model: PhaseModel | None, u) -> float:
    """``sum V phi(u) + sum V u wt`` with ``wt`` from the kernel applied to ``1 - u``."""
    p = _problem(mesh_or_problem, model)
    u = np.asarray(u, dtype=float)
    phi, _, _ = phi_derivatives(u)
    wt = p.potential(p.model.m_coef * (1.0 - u))
    return float(p.volumes @ phi + (p.volumes * u) @ wt)


def step_residual(mesh_or_problem, model, state: "PhaseState", u_plus, w_plus, tau) -> np.ndarray:
    """``V (u - u+) / tau - G^T f (G u+ + [a] G (w+ + w) / 2)``."""
    p = _problem(mesh_or_problem, model)
    u_plus = np.asarray(u_plus, dtype=float)
    _check_bounds(u_plus)
    return p.volumes * (state.u - u_plus) / tau - p.flux_divergence(u_plus, np.asarray(w_plus) + state.w)


def initial_profile(mesh: Mesh, eps0: float) -> np.ndarray:
    """Linear ramp ``eps + (x_1 - x_min) / (L (1 + 2 eps))`` across the domain."""
    x = mesh.vertices[:, 0]
    lx = float(x.max() - x.min())
    return eps0 + (x - x.min()) / (lx * (1.0 + 2.0 * eps0))


# ----------------------------------------------------------------------
# time stepping


@dataclass
class StepRecord:
    t: float
    tau: float
    F: float
    dF_dt: float
    newton_iters: int
    accepted: bool


@dataclass
class PhaseState:
    u: np.ndarray
    w: np.ndarray
    t: float = 0.0
    tau: float = 0.0
    F: float = float("nan")
    history: list = field(default_factory=list)


def initial_state(problem: PhaseProblem, u0, tau0: float = 0.0) -> PhaseState:
    u0 = np.array(u0, dtype=float)
    _check_bounds(u0)
    w0 = solve_potential(problem, None, u0)
    return PhaseState(u=u0, w=w0, t=0.0, tau=tau0, F=free_energy(problem, None, u0))


def _residual_norm(problem: PhaseProblem, tau):
    scale = np.concatenate([tau / problem.volumes, 1.0 / problem.volumes])

    def norm(r):
        return float(np.max(np.abs(r * scale)))

    return norm


def implicit_euler_step(
    mesh_or_problem,
    model: PhaseModel | None,
    state: PhaseState,
    tau: float,
    newton_cfg: NewtonConfig | None = None,
):
    """One coupled implicit Euler step.  Returns ``(new_state, newton_iterations)``.

    The residual norm is measured in concentration units (``u`` block scaled
    by ``tau / V``, ``w`` block by ``1 / V``).  Raises :class:`NewtonFailure`
    when Newton fails and :class:`OutOfBounds` when the converged ``u+`` leaves
    ``(0, 1)``.
    """
    p = _problem(mesh_or_problem, model)
    cfg = newton_cfg or NewtonConfig(abs_tol=1e-10, max_iter=25, step_tol=1e-11)
    n = p.n
    x0 = np.concatenate([state.u, state.w])
    try:
        res = newton_solve(
            lambda x: p.coupled_residual(x, state.u, state.w, tau),
            lambda x: p.coupled_jacobian(x, state.u, state.w, tau),
            x0,
            cfg,
            norm=_residual_norm(p, tau),
        )
    except OutOfBounds as exc:
        raise NewtonFailure(f"Newton iterate left (0, 1): {exc}") from None
    except (NotConverged, SingularMatrix) as exc:
        raise NewtonFailure(str(exc)) from None
    u_plus, w_plus = res.x[:n], res.x[n:]
    _check_bounds(u_plus)
    new = PhaseState(
        u=u_plus,
        w=w_plus,
        t=state.t + tau,
        tau=tau,
        F=free_energy(p, None, u_plus),
        history=state.history,
    )
    return new, res.iterations


@dataclass(frozen=True)
class StepControl:
    """Predictor-corrector control on the free energy.

    A step is accepted when the linear-in-time extrapolation of ``F`` agrees
    with the computed value to ``target * max(|F+ - F|, floor * |F+|)``.
    The relative ``floor`` keeps near-stationary phases from forcing tiny
    steps when ``F`` barely changes.
    """

    target: float = 1e-3
    grow: float = 1.5
    shrink: float = 0.5
    tau0: float = 1e-4
    tau_min: float = 1e-12
    tau_max: float = math.inf
    floor: float = 1e-2

    def __post_init__(self):
        if not (0.0 < self.shrink < 1.0 < self.grow):
            raise ValueError("need 0 < shrink < 1 < grow")
        if not (0.0 < self.tau_min <= self.tau_max):
            raise ValueError("need 0 < tau_min <= tau_max")
        if not (self.tau_min <= self.tau0 <= self.tau_max):
            raise ValueError("tau0 must lie in [tau_min, tau_max]")
        if not self.target > 0 or self.floor < 0:
            raise ValueError("target must be positive and floor nonnegative")


def run_simulation(
    mesh_or_problem,
    model: PhaseModel | None,
    ctrl: StepControl,
    t_end: float,
    output_sink=None,
    u0=None,
    newton_cfg: NewtonConfig | None = None,
    max_steps: int | None = None,
) -> PhaseState:
    """Adaptive implicit Euler from ``t = 0`` to ``t_end``.

    ``history`` of the returned state holds one :class:`StepRecord` per
    attempted step (accepted or not).  Raises :class:`StepFloorReached` when
    two consecutive steps at ``tau_min`` are rejected.
    """
    p = _problem(mesh_or_problem, model)
    if u0 is None:
        u0 = initial_profile(p.mesh, p.model.eps0)
    state = initial_state(p, u0, ctrl.tau0)
    state.history.append(StepRecord(0.0, 0.0, state.F, 0.0, 0, True))
    if output_sink is not None:
        output_sink.record(state.history[-1])
        output_sink.snapshot(p.mesh, state)
    prev = None  # (t, F) of the accepted point before the current one
    tau = ctrl.tau0
    floor_rejects = 0
    steps = 0
    while state.t < t_end:
        if max_steps is not None and steps >= max_steps:
            break
        steps += 1
        tau_try = min(tau, t_end - state.t)
        last_step = tau_try < tau
        accepted = False
        iters = 0
        try:
            new, iters = implicit_euler_step(p, None, state, tau_try, newton_cfg)
        except (NewtonFailure, OutOfBounds, LinearSolveFailure) as exc:
            logger.debug("t=%g tau=%g rejected: %s", state.t, tau_try, exc)
            new = None
        if new is not None:
            dF = new.F - state.F
            increase = dF > 1e-10 * abs(state.F)
            if prev is None:
                accepted = not increase
            else:
                slope = (state.F - prev[1]) / (state.t - prev[0])
                predicted = state.F + slope * tau_try
                accepted = not increase and abs(predicted - new.F) <= ctrl.target * max(abs(dF), ctrl.floor * abs(new.F))
        rate = (new.F - state.F) / tau_try if new is not None else float("nan")
        rec = StepRecord(
            state.t + tau_try, tau_try, new.F if new is not None else float("nan"), rate, iters, accepted
        )
        state.history.append(rec)
        if output_sink is not None:
            output_sink.record(rec)
        if accepted:
            prev = (state.t, state.F)
            new.history = state.history
            state = new
            floor_rejects = 0
            if output_sink is not None:
                output_sink.snapshot(p.mesh, state)
            if not last_step:
                tau = min(tau_try * ctrl.grow, ctrl.tau_max)
        else:
            if tau_try <= ctrl.tau_min:
                floor_rejects += 1
                if floor_rejects >= 2:
                    raise StepFloorReached(f"step rejected twice at tau_min = {ctrl.tau_min:g} (t = {state.t:g})")
            tau = max(tau_try * ctrl.shrink, ctrl.tau_min)
    state.tau = tau
    if output_sink is not None:
        output_sink.close(p.mesh, state)
    return state


def accepted_records(state: PhaseState) -> list[StepRecord]:
    return [r for r in state.history if r.accepted]


def count_plateaus(times, energies, per_decade: int = 10, rel_drop: float = 1e-3) -> int:
    """Number of flat stretches of ``F`` over log time separated by drops.

    ``F`` is sampled on a logarithmic time grid; an interval counts as a drop
    when ``F`` falls by more than ``rel_drop`` of the total decrease.
    Maximal runs of at least two non-drop intervals are plateaus.
    """
    t = np.asarray(times, dtype=float)
    f = np.asarray(energies, dtype=float)
    keep = t > 0
    t, f = t[keep], f[keep]
    if len(t) < 3:
        return 0
    total = f[0] - f[-1]
    if total <= 0:
        return 1
    n = max(int(per_decade * np.log10(t[-1] / t[0])), 2)
    grid = np.geomspace(t[0], t[-1], n + 1)
    fs = np.interp(np.log(grid), np.log(t), f)
    drops = (fs[:-1] - fs[1:]) > rel_drop * total
    count, run = 0, 0
    for d in drops:
        if d:
            count += run >= 2
            run = 0
        else:
            run += 1
    return count + (run >= 2)


# ----------------------------------------------------------------------
# output


def format_vtk(mesh: Mesh, fields: dict[str, np.ndarray], title: str = "vfvm") -> str:
    """Legacy VTK unstructured grid (ASCII) with point scalars."""
    cell_type = {1: 3, 2: 5, 3: 10}[mesh.dim]
    pts = np.zeros((mesh.n_vertices, 3))
    pts[:, : mesh.dim] = mesh.vertices
    k = mesh.dim + 1
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {mesh.n_vertices} double")
    out += [" ".join(repr(float(c)) for c in p) for p in pts]
    out.append(f"CELLS {mesh.n_cells} {mesh.n_cells * (k + 1)}")
    out += [" ".join(map(str, [k, *c])) for c in mesh.cells.tolist()]
    out.append(f"CELL_TYPES {mesh.n_cells}")
    out += [str(cell_type)] * mesh.n_cells
    out.append(f"POINT_DATA {mesh.n_vertices}")
    for name, values in fields.items():
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(float(v)) for v in values]
    return "\n".join(out) + "\n"


class OutputSink:
    """Writes ``timeseries.csv`` and field snapshots at log-spaced times."""

    COLUMNS = ("t", "tau", "F", "dF_dt", "newton_iters", "accepted")

    def __init__(self, directory, t_end: float, n_snapshots: int = 10, t_first: float = 1e-2):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.directory / "timeseries.csv", "w", newline="")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(self.COLUMNS)
        if n_snapshots > 0 and t_end > t_first:
            self.times = list(np.geomspace(t_first, t_end, n_snapshots))
        else:
            self.times = []
        self._next = 0
        self.written: list[Path] = []

    def record(self, rec: StepRecord) -> None:
        self._csv.writerow(
            [repr(rec.t), repr(rec.tau), repr(rec.F), repr(rec.dF_dt), rec.newton_iters, int(rec.accepted)]
        )

    def _write(self, mesh: Mesh, state: PhaseState, index: int) -> None:
        stem = self.directory / f"snapshot_{index:04d}"
        fields = {"u": state.u, "w": state.w}
        Path(f"{stem}.vtk").write_text(format_vtk(mesh, fields, f"t = {state.t!r}"))
        rows = ["vertex," + ",".join("xyz"[: mesh.dim]) + ",u,w"]
        for k, (x, u, w) in enumerate(zip(mesh.vertices.tolist(), state.u.tolist(), state.w.tolist())):
            rows.append(",".join([str(k), *map(repr, x), repr(u), repr(w)]))
        Path(f"{stem}.csv").write_text("\n".join(rows) + "\n")
        self.written.append(Path(f"{stem}.vtk"))

    def snapshot(self, mesh: Mesh, state: PhaseState) -> None:
        if state.t == 0.0 and not self.written:
            self._write(mesh, state, 0)
            return
        crossed = False
        while self._next < len(self.times) and state.t >= self.times[self._next]:
            self._next += 1
            crossed = True
        if crossed:
            self._write(mesh, state, len(self.written))

    def abort(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def close(self, mesh: Mesh, state: PhaseState) -> None:
        if self._next < len(self.times):
            self._write(mesh, state, len(self.written))
            self._next = len(self.times)
        self._fh.close()
