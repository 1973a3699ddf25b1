import json
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

from alexsurf import __version__
from alexsurf.cli import parse_ladder, parse_number, run

DATA = Path(__file__).resolve().parent.parent / "data"


def call(capsys, *argv) -> tuple[int, str, str]:
    rc = run([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


def value(text: str, key: str) -> str:
    for line in text.splitlines():
        if line.startswith(key + " "):
            return line.split(" ", 1)[1]
    raise KeyError(key)


def manifest(path: Path) -> dict:
    return json.loads(Path(str(path) + ".manifest.json").read_text())


# ---------------------------------------------------------------- parsing helpers

@pytest.mark.parametrize("text, expected", [("2", 2.0), ("1/4", 0.25), ("pi/2", math.pi / 2), ("3*pi/2", 1.5 * math.pi), ("-0.5", -0.5)])
def test_parse_number(text, expected):
    assert abs(parse_number(text) - expected) < 1e-15


def test_parse_ladder():
    assert parse_ladder("n=8..64", "n") == [8, 16, 32, 64]
    assert parse_ladder("eps=1/4..1/16", "eps") == [0.25, 0.125, 0.0625]
    assert parse_ladder("n=3,5,9", "n") == [3, 5, 9]


# ---------------------------------------------------------------- surface

def test_surface_build_preset(capsys, tmp_path):
    out = tmp_path / "cube.json"
    rc, text, _ = call(capsys, "surface", "build", "--preset", "cube", "--out", out)
    assert rc == 0
    assert value(text, "euler_characteristic") == "2"
    assert json.loads(out.read_text())
    m = manifest(out)
    assert m["verb"] == "surface build" or "build" in m["verb"]
    assert m["version"] == __version__
    assert m["options"]["preset"] == "cube"


def test_surface_build_round_trips(capsys, tmp_path):
    out = tmp_path / "again.json"
    rc, text, _ = call(capsys, "surface", "build", "--in", DATA / "cube.json", "--out", out)
    assert rc == 0 and value(text, "faces") == "12"


def test_gauss_bonnet_on_the_cube(capsys, tmp_path):
    out = tmp_path / "gb.csv"
    rc, text, _ = call(capsys, "surface", "gauss-bonnet", "--in", DATA / "cube.json", "--out", out)
    assert rc == 0
    assert abs(float(value(text, "total")) - 12.566371) < 1e-6
    assert abs(float(value(text, "residual"))) < 1e-12
    assert out.read_text().splitlines()[0].startswith("name") or "," in out.read_text()


def test_surface_curvature(capsys, tmp_path):
    rc, text, _ = call(capsys, "surface", "curvature", "--in", DATA / "cube.json", "--out", tmp_path / "mu.json")
    assert rc == 0 and value(text, "atoms") == "8"


def test_surface_distance_between_corners(capsys, tmp_path):
    out = tmp_path / "d.csv"
    rc, text, _ = call(capsys, "surface", "distance", "--in", DATA / "cube.json", "--from", "0:1,0,0", "--to", "0:0,1,0", "--out", out)
    assert rc == 0
    d = float(value(text, "distance"))
    assert 0 < d < 2
    header = out.read_text().splitlines()[0]
    assert header == "x_face,x_bary,y_face,y_bary,level,distance"


def test_surface_distance_pairs_are_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert call(capsys, "surface", "distance", "--in", DATA / "cube.json", "--pairs", "3", "--seed", "5", "--out", out)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 4


def test_surface_export_obj(capsys, tmp_path):
    out = tmp_path / "cube.obj"
    rc, text, _ = call(capsys, "surface", "export-obj", "--in", DATA / "cube.json", "--from", "0:1,0,0", "--to", "5:0,0,1", "--out", out)
    assert rc == 0
    lines = out.read_text().splitlines()
    assert sum(l.startswith("f ") for l in lines) == 12
    assert any(l.startswith("l ") for l in lines)


def test_no_out_writes_nothing(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert call(capsys, "surface", "build", "--preset", "torus")[0] == 0
    assert list(tmp_path.iterdir()) == []


# ---------------------------------------------------------------- gallery

def test_gallery_show(capsys, tmp_path):
    rc, text, _ = call(capsys, "gallery", "show", "--kind", "glued_disks", "--out", tmp_path / "g.json")
    assert rc == 0
    assert abs(float(value(text, "total_curvature")) - 4 * math.pi) < 1e-6


def test_gallery_distance_to_infinity(capsys, tmp_path):
    rc, text, _ = call(capsys, "gallery", "distance", "--kind", "glued_disks", "--from", "0", "--to", "inf", "--out", tmp_path / "d.csv")
    assert rc == 0
    assert abs(float(value(text, "distance")) - 2.0) < 0.02


def test_gallery_cone_distance(capsys):
    rc, text, _ = call(capsys, "gallery", "distance", "--kind", "cone", "--theta", "pi", "--from", "0", "--to", "0.64", "--grid", "32")
    assert rc == 0
    assert abs(float(value(text, "distance")) - 2 * 0.8) < 0.016


def test_gallery_curvature_grid(capsys, tmp_path):
    out = tmp_path / "k.csv"
    rc, text, _ = call(capsys, "gallery", "curvature-grid", "--kind", "hemisphere_cylinder", "--grid", "16", "--out", out)
    assert rc == 0
    assert out.read_text().splitlines()[0] == "x,y,rho,log_factor,curvature"
    assert int(value(text, "nodes")) == len(out.read_text().splitlines()) - 1


# ---------------------------------------------------------------- prescribe

def test_prescribe_build(capsys, tmp_path):
    out = tmp_path / "torus.json"
    rc, text, _ = call(capsys, "prescribe", "build", "--in", DATA / "one_cone_torus.json", "--factor-grid", "8", "--out", out)
    assert rc == 0
    assert value(text, "background") == "torus"
    doc = json.loads(out.read_text())
    assert (tmp_path / doc["charts"]["square"]).exists()
    assert sorted(manifest(out)["outputs"]) == sorted([out.name, doc["charts"]["square"]])


def test_prescribe_distance(capsys):
    rc, text, _ = call(capsys, "prescribe", "distance", "--in", DATA / "football_theta_pi.json", "--from", "N", "--to", "S", "--level", "3")
    assert rc == 0
    assert abs(float(value(text, "distance")) - 4.4982) < 0.1


def test_prescribe_verify(capsys, tmp_path):
    out = tmp_path / "rep.json"
    rc, text, _ = call(capsys, "prescribe", "verify", "--in", DATA / "one_cone_torus.json", "--rays", "16", "--grid", "32", "--out", out)
    assert rc == 0
    rep = json.loads(out.read_text())
    assert abs(rep["gauss_bonnet_residual"]) < 1e-9
    (cone,) = rep["cones"]
    assert abs(cone["measured_angle"] / cone["expected_angle"] - 1) < 0.02


def test_cusp_is_a_domain_error(capsys):
    rc, _, err = call(capsys, "prescribe", "build", "--in", DATA / "football_cusp.json")
    assert rc == 1
    assert "CuspAtom" in err


# ---------------------------------------------------------------- lab

def test_lab_lantern(capsys, tmp_path):
    out = tmp_path / "l.csv"
    rc, text, _ = call(capsys, "lab", "lantern", "--ladder", "n=8..64", "--out", out)
    assert rc == 0
    areas = [float(l.split()[3]) for l in text.splitlines() if l.startswith("n ")]
    assert areas == sorted(areas, reverse=True)
    assert abs(areas[-1] / (2 * math.pi) - 1) < 5e-3
    assert manifest(out)["table"]["experiment"] == "lantern"


def test_lab_reshetnyak(capsys, tmp_path):
    out = tmp_path / "r.csv"
    rc, text, _ = call(capsys, "lab", "reshetnyak", "--in", DATA / "one_cone_torus.json", "--ladder", "eps=1/4,1/8", "--pairs", "4", "--grid", "16", "--out", out)
    assert rc == 0
    assert out.read_text().splitlines()[0] == "epsilon,uniform_distance,weak_distance,target"
    assert value(text, "weak_distance_strictly_decreasing") == "true"


def test_lab_weak_distance(capsys, tmp_path):
    rc, text, _ = call(capsys, "lab", "weak-distance", "--in", DATA / "one_cone_torus.json", "--other", DATA / "one_cone_torus.json")
    assert rc == 0 and float(value(text, "weak_distance")) == 0.0
    rc, text, _ = call(capsys, "lab", "weak-distance", "--in", DATA / "one_cone_torus.json", "--out", tmp_path / "w.csv")
    assert rc == 0 and value(text, "weak_distance_strictly_decreasing") == "true"


# ---------------------------------------------------------------- errors and process

@pytest.mark.parametrize("argv", [
    ["nonsense"],
    ["surface", "build"],
    ["surface", "distance", "--in", "missing.json", "--from", "v0", "--to", "v1"],
    ["lab", "lantern", "--ladder", "n=2,4"],
    ["gallery", "distance", "--kind", "cone", "--from", "0"],
])
def test_usage_errors(capsys, argv):
    assert call(capsys, *argv)[0] == 2


def test_bad_thread_count(capsys, monkeypatch):
    monkeypatch.setenv("ALEXSURF_THREADS", "zero")
    assert call(capsys, "surface", "distance", "--in", DATA / "cube.json", "--pairs", "2")[0] == 2


def test_threads_do_not_change_results(capsys, tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    call(capsys, "surface", "distance", "--in", DATA / "cube.json", "--pairs", "4", "--out", a)
    monkeypatch.setenv("ALEXSURF_THREADS", "3")
    call(capsys, "surface", "distance", "--in", DATA / "cube.json", "--pairs", "4", "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    r = subprocess.run([sys.executable, "-m", "alexsurf", "surface", "gauss-bonnet", "--in", str(DATA / "cube.json")],
                       capture_output=True, text=True, env=env, cwd=tmp_path)
    assert r.returncode == 0
    assert "residual 0" in r.stdout
    r = subprocess.run([sys.executable, "-m", "alexsurf", "bogus"], capture_output=True, text=True, env=env, cwd=tmp_path)
    assert r.returncode == 2
