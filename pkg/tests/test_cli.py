import csv

import numpy as np
import pytest

from vfvm import cli
from vfvm.mesh import read_mesh
from vfvm.mesh.generate import fixture_path

TET = """4 3
0 0 0 0
1 1 0 0
2 0 1 0
3 0 0 1
1
0 0 1 2 3 1
4
0 0 1 2 1
1 0 1 3 1
2 0 2 3 1
3 1 2 3 1
"""

SMALL_RUN = """# tiny run
nx = 5
ny = 5
lx = 4
ly = 4
t_end = 1.0
snapshots = 2
snapshot_first = 0.1
"""


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for name in ("TOL", "SEED", "OUT", "RULE", "QUIET"):
        monkeypatch.delenv(cli.ENV_PREFIX + name, raising=False)


# check


@pytest.mark.parametrize(
    "name, code",
    [("unit_square", cli.EXIT_OK), ("delaunay_pair", cli.EXIT_OK), ("encroached_triangle", cli.EXIT_DELAUNAY_ONLY),
     ("nondelaunay_pair", cli.EXIT_NON_DELAUNAY)],
)
def test_check_exit_codes(capsys, name, code):
    got, out, _ = run(capsys, "check", fixture_path(name))
    assert got == code
    assert "delaunay:" in out


def test_check_truncated_file(capsys, tmp_path):
    text = fixture_path("encroached_triangle").read_text().splitlines()
    bad = tmp_path / "bad.mesh"
    bad.write_text("\n".join(text[:6]) + "\n")
    code, _, err = run(capsys, "check", bad)
    assert code == cli.EXIT_ERROR
    assert err.startswith("error:")


def test_check_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "check", tmp_path / "nope.mesh")
    assert code == cli.EXIT_ERROR
    assert "error" in err


# repair


def test_repair_encroached_triangle_inserts_one(capsys, tmp_path):
    out_path = tmp_path / "fixed.mesh"
    code, out, _ = run(capsys, "repair", fixture_path("encroached_triangle"), out_path)
    assert code == cli.EXIT_OK
    assert "inserted 1 vertices" in out
    assert read_mesh(out_path).n_vertices == 4
    code, _, _ = run(capsys, "check", out_path)
    assert code == cli.EXIT_OK


def test_repair_conforming_is_noop(capsys, tmp_path):
    code, out, _ = run(capsys, "--out", tmp_path, "repair", fixture_path("unit_square"))
    assert code == cli.EXIT_OK
    assert "inserted 0 vertices" in out
    assert (tmp_path / "unit_square_repaired.mesh").exists()


def test_repair_rejects_3d(capsys, tmp_path):
    p = tmp_path / "tet.mesh"
    p.write_text(TET)
    code, _, err = run(capsys, "repair", p, tmp_path / "o.mesh")
    assert code == cli.EXIT_ERROR
    assert "2D only" in err


# assemble


@pytest.mark.parametrize("op", ["laplace", "mass", "fem-stiffness", "fem-mass"])
def test_assemble_writes_coordinate_file(capsys, tmp_path, op):
    out_path = tmp_path / f"{op}.mtx"
    code, out, _ = run(capsys, "assemble", fixture_path("unit_square"), out_path, "--operator", op)
    assert code == cli.EXIT_OK
    assert "symmetric=True" in out
    n = read_mesh(fixture_path("unit_square")).n_vertices
    lines = out_path.read_text().splitlines()
    assert f"{n}x{n}, {len(lines)} nonzeros" in out
    idx = np.array([ln.split()[:2] for ln in lines], dtype=int)
    assert idx.min() == 1 and idx.max() == n


def test_assemble_laplace_is_z_matrix(capsys, tmp_path):
    _, out, _ = run(capsys, "assemble", fixture_path("unit_square"), tmp_path / "a.mtx")
    assert "z_matrix=True" in out


# experiment


def test_experiment_non_delaunay_jump(capsys):
    code, out, _ = run(capsys, "experiment", "non-delaunay-jump")
    assert code == cli.EXIT_OK
    assert "PASS" in out


def test_experiment_crisscross_mixed(capsys):
    code, out, _ = run(capsys, "--rule", "mixed", "experiment", "crisscross")
    assert code == cli.EXIT_OK
    assert "M11_over_h2      0.6666666667" in out


def test_experiment_unknown(capsys):
    code, _, err = run(capsys, "experiment", "nonsense")
    assert code == cli.EXIT_ERROR
    assert "unknown experiment" in err


def test_experiment_writes_keyvalue(capsys, tmp_path):
    code, _, _ = run(capsys, "--out", tmp_path, "experiment", "compensation-3d")
    assert code == cli.EXIT_OK
    text = (tmp_path / "compensation-3d.txt").read_text()
    assert all("=" in ln for ln in text.strip().splitlines())


def test_experiment_deterministic(capsys):
    a = run(capsys, "--seed", 7, "experiment", "max-principle", "--meshes", 3, "--trials", 2)
    b = run(capsys, "--seed", 7, "experiment", "max-principle", "--meshes", 3, "--trials", 2)
    assert a == b
    assert a[0] == cli.EXIT_OK


# phasesep


def test_phasesep_constant_state(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL_RUN + "u0 = 0.5\noutput = res\n")
    code, out, _ = run(capsys, "phasesep", cfg)
    assert code == cli.EXIT_OK
    assert (tmp_path / "res" / "timeseries.csv").exists()
    assert "F:" in out


def test_phasesep_energy_nonincreasing(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL_RUN)
    code, _, _ = run(capsys, "--out", tmp_path / "o", "phasesep", cfg)
    assert code == cli.EXIT_OK
    with open(tmp_path / "o" / "phasesep_out" / "timeseries.csv") as fh:
        rows = list(csv.DictReader(fh))
    energies = [float(r["F"]) for r in rows if r["accepted"] == "1"]
    assert len(energies) > 2
    for a, b in zip(energies, energies[1:]):
        assert b <= a + 1e-10 * abs(a)
    assert list((tmp_path / "o" / "phasesep_out").glob("snapshot_*.vtk"))


@pytest.mark.parametrize(
    "line, key",
    [("sigma = -1", "sigma"), ("eps0 = 0.7", "eps0"), ("nx = 1", "nx"), ("bogus = 3", "bogus"),
     ("m = abc", "m"), ("mobility = harmonic", "mobility")],
)
def test_phasesep_bad_config(capsys, tmp_path, line, key):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(SMALL_RUN + line + "\n")
    code, _, err = run(capsys, "phasesep", cfg)
    assert code == cli.EXIT_ERROR
    assert repr(key) in err


def test_read_config_defaults(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("sigma = 3  # inline comment\n")
    parsed = cli.read_phasesep_config(cfg)
    assert parsed["sigma"] == 3.0
    assert parsed["m"] == 8.0 and parsed["nx"] == 33 and parsed["mobility"] == "logmean"


# grid, global options


def test_grid_roundtrip(capsys, tmp_path):
    p = tmp_path / "sub" / "g.mesh"
    code, _, _ = run(capsys, "grid", 4, 3, p, "--lx", 2.0)
    assert code == cli.EXIT_OK
    mesh = read_mesh(p)
    assert mesh.n_vertices == 12 and mesh.n_cells == 12
    assert np.isclose(mesh.vertices[:, 0].max(), 2.0)
    assert run(capsys, "check", p)[0] == cli.EXIT_OK


def test_quiet_flag(capsys):
    code, out, _ = run(capsys, "--quiet", "check", fixture_path("unit_square"))
    assert code == cli.EXIT_OK and out == ""


def test_env_overrides(capsys, monkeypatch):
    monkeypatch.setenv("VFVM_QUIET", "yes")
    assert run(capsys, "check", fixture_path("encroached_triangle"))[1] == ""
    monkeypatch.setenv("VFVM_RULE", "mixed")
    _, out, _ = run(capsys, "--quiet", "experiment", "crisscross")
    assert out == ""
    monkeypatch.delenv("VFVM_QUIET")
    _, out, _ = run(capsys, "experiment", "crisscross")
    assert "rule             mixed" in out


def test_flag_beats_env(capsys, monkeypatch):
    monkeypatch.setenv("VFVM_RULE", "mixed")
    _, out, _ = run(capsys, "--rule", "uniform", "experiment", "crisscross")
    assert "rule             uniform" in out


def test_bad_env_value(monkeypatch):
    monkeypatch.setenv("VFVM_SEED", "x")
    with pytest.raises(SystemExit, match="VFVM_SEED"):
        cli.main(["check", str(fixture_path("unit_square"))])


@pytest.mark.parametrize("cmd", [[], ["check"], ["repair"], ["assemble"], ["experiment"], ["phasesep"], ["grid"]])
def test_help(capsys, cmd):
    with pytest.raises(SystemExit) as exc:
        cli.main([*cmd, "--help"])
    assert exc.value.code == 0
    assert "usage: vfvm" in capsys.readouterr().out
