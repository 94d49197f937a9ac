"""Command-line interface: ``vfvm <command> ...``.

Global flags may also be set through environment variables with the
``VFVM_`` prefix (``VFVM_TOL``, ``VFVM_SEED``, ``VFVM_OUT``, ``VFVM_RULE``,
``VFVM_QUIET``); explicit flags win.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import assemble_fem_p1, assemble_laplace, assemble_mass, classify_matrix, export_matrix
from .errors import MeshError, NegativeContribution, RepairDiverged, StepFloorReached, VfvmError
from .experiments import EXPERIMENTS
from .geometry import DEFAULT_TOL
from .mesh.delaunay import check_boundary_conforming
from .mesh.generate import rectangle
from .mesh.io import read_mesh, write_mesh
from .mesh.repair import repair_boundary_conformity_2d

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DELAUNAY_ONLY = 2
EXIT_NON_DELAUNAY = 3
EXIT_REPAIR_DIVERGED = 4
EXIT_STEP_FLOOR = 5

ENV_PREFIX = "VFVM_"


def _env(name, default, conv=str):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return default
    try:
        return conv(raw)
    except ValueError:
        raise SystemExit(f"error: invalid value {raw!r} for {ENV_PREFIX}{name}") from None


def _env_bool(raw: str) -> bool:
    return raw.strip().lower() in ("1", "true", "yes", "on")


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="relative geometric tolerance")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 42)")
    g.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--rule", choices=("uniform", "mixed"), default=argparse.SUPPRESS, help="grid diagonal rule")
    g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only print errors")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="vfvm",
        description="Voronoi finite volumes on boundary conforming Delaunay meshes.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"vfvm {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("check", parents=[common], help="check Delaunay and boundary conformity",
                       description="Exit 0 if boundary conforming Delaunay, 2 if only Delaunay, 3 if not Delaunay.")
    p.add_argument("mesh", type=Path)

    p = sub.add_parser("repair", parents=[common], help="restore boundary conformity of a 2D mesh",
                       description="Insert projection vertices until every boundary edge is Gabriel.")
    p.add_argument("mesh", type=Path)
    p.add_argument("output", type=Path, nargs="?", help="default: <out>/<name>_repaired.mesh")
    p.add_argument("--max-insertions", type=int, default=None)

    p = sub.add_parser("assemble", parents=[common], help="assemble an operator and export it",
                       description="Write a matrix in 1-based coordinate format and print its sign classification.")
    p.add_argument("mesh", type=Path)
    p.add_argument("output", type=Path, nargs="?", help="default: <out>/<name>_<operator>.mtx")
    p.add_argument("--operator", choices=("laplace", "mass", "fem-stiffness", "fem-mass"), default="laplace")
    p.add_argument("--eps", type=float, default=1.0, help="diffusion coefficient")

    p = sub.add_parser("experiment", parents=[common], help="run a diagnostic experiment",
                       description="Experiments: " + ", ".join(EXPERIMENTS) + ". Exit 0 iff all checks pass.")
    p.add_argument("name")
    p.add_argument("--k", type=int, default=5, help="neighbour count (non-delaunay-jump)")
    p.add_argument("--eps", type=float, default=1e-7, help="layer width (non-delaunay-jump)")
    p.add_argument("--c", type=float, default=0.0, help="zero-order coefficient (crisscross)")
    p.add_argument("--nx", type=int, default=17)
    p.add_argument("--ny", type=int, default=9)
    p.add_argument("--meshes", type=int, default=50, help="random meshes (max-principle)")
    p.add_argument("--trials", type=int, default=5, help="Dirichlet data sets per mesh (max-principle)")

    p = sub.add_parser("phasesep", parents=[common], help="run the phase separation model",
                       description="Run a simulation from a key = value config file. Exit 5 if the step size floor is hit.")
    p.add_argument("config", type=Path)

    p = sub.add_parser("grid", parents=[common], help="write a structured triangular grid",
                       description="Tensor grid on (0, lx) x (0, ly) with boundary tags bottom=1 right=2 top=3 left=4.")
    p.add_argument("nx", type=int)
    p.add_argument("ny", type=int)
    p.add_argument("output", type=Path)
    p.add_argument("--lx", type=float, default=1.0)
    p.add_argument("--ly", type=float, default=1.0)
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    args.tol = getattr(args, "tol", _env("TOL", DEFAULT_TOL, float))
    args.seed = getattr(args, "seed", _env("SEED", 42, int))
    args.out = getattr(args, "out", _env("OUT", None, Path))
    args.rule = getattr(args, "rule", _env("RULE", "uniform"))
    args.quiet = getattr(args, "quiet", _env("QUIET", False, _env_bool))
    if args.rule not in ("uniform", "mixed"):
        raise SystemExit(f"error: unknown rule {args.rule!r}")
    return args


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _outdir(args) -> Path:
    d = args.out if args.out is not None else Path(".")
    d.mkdir(parents=True, exist_ok=True)
    return d


# ----------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    mesh = read_mesh(args.mesh)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeContribution)
        report = check_boundary_conforming(mesh, args.tol)
    _say(args, report.summary())
    if report.is_boundary_conforming:
        return EXIT_OK
    return EXIT_DELAUNAY_ONLY if report.is_delaunay else EXIT_NON_DELAUNAY


def cmd_repair(args) -> int:
    mesh = read_mesh(args.mesh)
    if mesh.dim != 2:
        print(f"error: repair supports 2D only (mesh has dimension {mesh.dim})", file=sys.stderr)
        return EXIT_ERROR
    try:
        fixed = repair_boundary_conformity_2d(mesh, args.max_insertions, args.tol)
    except RepairDiverged as exc:
        print(f"error: repair diverged: {exc}", file=sys.stderr)
        return EXIT_REPAIR_DIVERGED
    out = args.output or _outdir(args) / f"{args.mesh.stem}_repaired.mesh"
    write_mesh(fixed, out)
    _say(args, f"inserted {fixed.n_vertices - mesh.n_vertices} vertices")
    _say(args, f"wrote {out}")
    return EXIT_OK


def cmd_assemble(args) -> int:
    mesh = read_mesh(args.mesh)
    if args.operator == "laplace":
        mat = assemble_laplace(mesh, args.eps)
    elif args.operator == "mass":
        mat = assemble_mass(mesh)
    else:
        stiff, mass, _ = assemble_fem_p1(mesh)
        mat = args.eps * stiff if args.operator == "fem-stiffness" else mass
    out = args.output or _outdir(args) / f"{args.mesh.stem}_{args.operator}.mtx"
    export_matrix(mat, out)
    rep = classify_matrix(mat)
    _say(args, f"{args.operator}: {mat.shape[0]}x{mat.shape[1]}, {mat.nnz} nonzeros")
    _say(args, f"symmetric={rep.symmetric} z_matrix={rep.is_z_matrix} "
               f"positive_offdiag={len(rep.offending_entries)} irreducible={rep.irreducible}")
    _say(args, f"wrote {out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        print(f"error: unknown experiment {args.name!r}; choose from {', '.join(EXPERIMENTS)}", file=sys.stderr)
        return EXIT_ERROR
    if args.name == "max-principle":
        rep = EXPERIMENTS[args.name](trials=args.trials, seed=args.seed, n_meshes=args.meshes)
    elif args.name == "non-delaunay-jump":
        rep = EXPERIMENTS[args.name](k=args.k, eps=args.eps, seed=args.seed)
    elif args.name == "crisscross":
        rep = EXPERIMENTS[args.name](nx=args.nx, ny=args.ny, c=args.c, rule=args.rule, seed=args.seed)
    elif args.name == "compensation-2d":
        rep = EXPERIMENTS[args.name](seed=args.seed)
    else:
        rep = EXPERIMENTS[args.name]()
    _say(args, rep.to_text())
    if args.out is not None:
        path = _outdir(args) / f"{args.name}.txt"
        path.write_text(rep.to_keyvalue() + "\n")
        _say(args, f"wrote {path}")
    return EXIT_OK if rep.passed else EXIT_ERROR


# phasesep config

_FLOAT_KEYS = {
    "lx": 32.0, "ly": 32.0, "sigma": 2.0, "m": 8.0, "f": 4.0, "eps0": 1e-7, "t_end": 1e6,
    "target": 1e-3, "grow": 1.5, "shrink": 0.5, "tau0": 1e-4, "tau_min": 1e-12, "tau_max": math.inf,
    "floor": None, "snapshot_first": 1e-2, "u0": None,
}
_INT_KEYS = {"nx": 33, "ny": 33, "snapshots": 10, "max_steps": None}
_STR_KEYS = {"mesh": None, "rule": "uniform", "output": "phasesep_out", "mobility": "logmean"}


class ConfigError(VfvmError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


def read_phasesep_config(path: Path) -> dict:
    """Parse ``key = value`` lines (``#`` comments) into a typed dict."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + Path(path).read_text())
    except configparser.Error as exc:
        raise ConfigError("?", f"malformed config: {exc}") from None
    raw = dict(parser["run"])
    cfg = {**_FLOAT_KEYS, **_INT_KEYS, **_STR_KEYS}
    for key, value in raw.items():
        if key in _FLOAT_KEYS:
            conv = float
        elif key in _INT_KEYS:
            conv = int
        elif key in _STR_KEYS:
            conv = str
        else:
            raise ConfigError(key, "unknown key")
        try:
            cfg[key] = conv(value)
        except ValueError:
            raise ConfigError(key, f"cannot parse {value!r}") from None
    for key in ("sigma", "m", "f", "t_end", "lx", "ly", "tau0", "target"):
        if not cfg[key] > 0:
            raise ConfigError(key, "must be positive")
    if not 0.0 < cfg["eps0"] < 0.5:
        raise ConfigError("eps0", "must lie in (0, 0.5)")
    if cfg["u0"] is not None and not 0.0 < cfg["u0"] < 1.0:
        raise ConfigError("u0", "must lie in (0, 1)")
    for key in ("nx", "ny"):
        if cfg[key] < 2:
            raise ConfigError(key, "needs at least 2 grid points")
    if cfg["rule"] not in ("uniform", "mixed"):
        raise ConfigError("rule", "must be uniform or mixed")
    if cfg["mobility"] not in ("logmean", "arithmetic"):
        raise ConfigError("mobility", "must be logmean or arithmetic")
    return cfg


def cmd_phasesep(args) -> int:
    from .phasesep import OutputSink, PhaseModel, PhaseProblem, StepControl, accepted_records, run_simulation

    try:
        cfg = read_phasesep_config(args.config)
        model = PhaseModel(sigma=cfg["sigma"], m_coef=cfg["m"], f_coef=cfg["f"], eps0=cfg["eps0"],
                           mobility=cfg["mobility"])
        ctrl_kw = {k: cfg[k] for k in ("target", "grow", "shrink", "tau0", "tau_min", "tau_max")}
        if cfg["floor"] is not None:
            ctrl_kw["floor"] = cfg["floor"]
        try:
            ctrl = StepControl(**ctrl_kw)
        except ValueError as exc:
            raise ConfigError("step control", str(exc)) from None
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if cfg["mesh"] is not None:
        mesh_path = Path(cfg["mesh"])
        if not mesh_path.is_absolute():
            mesh_path = args.config.parent / mesh_path
        mesh = read_mesh(mesh_path)
    else:
        mesh = rectangle(cfg["nx"], cfg["ny"], cfg["lx"], cfg["ly"], cfg["rule"])
    out = Path(cfg["output"])
    if args.out is not None:
        out = args.out / out
    elif not out.is_absolute():
        out = args.config.parent / out
    problem = PhaseProblem(mesh, model)
    u0 = None if cfg["u0"] is None else np.full(mesh.n_vertices, cfg["u0"])
    sink = OutputSink(out, cfg["t_end"], cfg["snapshots"], cfg["snapshot_first"])
    try:
        state = run_simulation(problem, None, ctrl, cfg["t_end"], sink, u0=u0, max_steps=cfg["max_steps"])
    except StepFloorReached as exc:
        sink.abort()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP_FLOOR
    acc = accepted_records(state)
    _say(args, f"t = {state.t:.6g}, accepted steps {len(acc) - 1}, attempts {len(state.history) - 1}")
    _say(args, f"F: {acc[0].F:.10g} -> {acc[-1].F:.10g}")
    _say(args, f"wrote {out}")
    return EXIT_OK


def cmd_grid(args) -> int:
    mesh = rectangle(args.nx, args.ny, args.lx, args.ly, args.rule)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, args.output)
    _say(args, f"wrote {args.output} ({mesh.n_vertices} vertices, {mesh.n_cells} cells)")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "repair": cmd_repair,
    "assemble": cmd_assemble,
    "experiment": cmd_experiment,
    "phasesep": cmd_phasesep,
    "grid": cmd_grid,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = _resolve(parser.parse_args(argv))
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, VfvmError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
