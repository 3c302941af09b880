from __future__ import annotations

import json
import subprocess
import sys

import pytest

from convexgeo.cli import main


def run(tmp_path, *argv):
    code = main([*argv, "--out", str(tmp_path)])
    return code


def load(tmp_path, name):
    return json.loads((tmp_path / name).read_text(encoding="utf-8"))


def test_beta(tmp_path):
    assert run(tmp_path, "beta") == 0
    d = load(tmp_path, "beta.json")
    assert d["residual"] < 1e-10
    assert d["config"]["seed"] == 0 and d["seed"] == 0
    assert d["beta"] == pytest.approx(2.5735623843086619, abs=1e-14)


def test_geodesic_plane_line(tmp_path):
    assert run(tmp_path, "geodesic", "--manifold", "plane", "--point", "0", "0", "--vector", "1", "0") == 0
    d = load(tmp_path, "geodesic.json")
    assert d["speed_drift"] == 0.0
    assert "clairaut_drift" not in d
    assert d["endpoint"]["point"] == pytest.approx([10.0, 0.0])


def test_geodesic_paraboloid_clairaut(tmp_path):
    assert run(tmp_path, "geodesic", "--point", "0.5", "0.2", "--vector", "-0.3", "1", "--T", "10") == 0
    d = load(tmp_path, "geodesic.json")
    assert d["clairaut_drift"] <= 1e-6
    assert d["speed_drift"] <= 1e-8


def test_geodesic_torus_wraps(tmp_path):
    assert run(tmp_path, "geodesic", "--manifold", "torus", "--point", "0.5", "0.5", "--vector", "1", "0.37") == 0
    rows = (tmp_path / "geodesic.csv").read_text().splitlines()[1:]
    xs = [tuple(float(c) for c in row.split(",")[1:3]) for row in rows]
    assert all(0 <= x < 1 and 0 <= y < 1 for x, y in xs)


def test_geodesic_chart_exit_is_numeric_failure(tmp_path):
    code = run(tmp_path, "geodesic", "--manifold", "paraboloid_polar", "--point", "0.5", "0", "--vector", "-1", "0")
    assert code == 3
    d = load(tmp_path, "geodesic.json")
    assert d["chart_exit_time"] > 0


def test_geodesic_wrong_length_is_usage(tmp_path):
    assert run(tmp_path, "geodesic", "--point", "1", "2", "3") == 2


def test_curvature_m3(tmp_path):
    assert run(tmp_path, "curvature", "--manifold", "m3") == 0
    d = load(tmp_path, "curvature.json")
    assert d["max_abs_err"] <= 1e-4
    lines = (tmp_path / "curvature.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,K_analytic,K_fd,abs_err"
    origin = [line for line in lines[1:] if line.startswith("0.0,0.0,0.0,")]
    assert float(origin[0].split(",")[3]) == 3.0


def test_curvature_plane_zero(tmp_path):
    assert run(tmp_path, "curvature", "--manifold", "plane") == 0
    for line in (tmp_path / "curvature.csv").read_text().splitlines()[1:]:
        assert [float(c) for c in line.split(",")[2:]] == [0.0, 0.0, 0.0]


def test_certify_m3_energy(tmp_path):
    assert run(tmp_path, "certify", "--manifold", "m3", "--function", "energy") == 0
    assert load(tmp_path, "certify.json")["report"]["verdict"] == "strictly-convex"


def test_certify_params_and_bad_params(tmp_path):
    assert run(tmp_path, "certify", "--function", "hinge", "--param", "level=0.5") == 0
    assert load(tmp_path, "certify.json")["report"]["function"] == "hinge0.5"
    assert run(tmp_path, "certify", "--function", "hinge", "--param", "bogus=1") == 2
    assert run(tmp_path, "certify", "--function", "hinge", "--param", "level") == 2


def test_certify_inconclusive_exit(tmp_path):
    code = run(tmp_path, "certify", "--manifold", "paraboloid_polar", "--function", "zero",
               "--param", "manifold=\"paraboloid_polar\"", "--box", "0.05", "0.1", "--span", "2")
    assert code == 4
    assert load(tmp_path, "certify.json")["report"]["verdict"] == "inconclusive"


def test_recur_plane(tmp_path):
    assert run(tmp_path, "recur", "--manifold", "plane", "--samples", "20", "--T", "50") == 0
    assert load(tmp_path, "recur.json")["result"]["fraction"] == 0.0
    raw = (tmp_path / "recur.csv").read_bytes()
    assert b"\r" not in raw


def _descriptor(tmp_path, **run_keys):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(run_keys))
    return str(path)


def test_minimize_hinge(tmp_path):
    cfg = _descriptor(tmp_path, u="hinge", g="height", x0=[1.0, 1.0])
    assert run(tmp_path, "minimize", "--config", cfg) == 0
    d = load(tmp_path, "minimize.json")
    assert d["trace"]["status"] == "converged"
    assert d["trace"]["inequalities_hold"]
    assert d["soul_region"]["holds"]
    assert d["run"]["schedule"] == [1, 2, 4, 8, 16, 32, 64]
    assert (tmp_path / "trace.csv").read_text().startswith("k,x_1,x_2,u,g,h_k,iterations\n")


def test_minimize_rejects_unknown_keys(tmp_path, capsys):
    cfg = _descriptor(tmp_path, u="hinge", g="height", step_size=3)
    assert run(tmp_path, "minimize", "--config", cfg) == 2
    assert "step_size" in capsys.readouterr().err
    cfg = _descriptor(tmp_path, u="hinge", g="height", certify={"spann": 1})
    assert run(tmp_path, "minimize", "--config", cfg) == 2
    cfg = _descriptor(tmp_path, u="nope", g="height")
    assert run(tmp_path, "minimize", "--config", cfg) == 2


def test_minimize_certification_failure(tmp_path):
    cfg = _descriptor(tmp_path, manifold="torus", u="constant", g="sin2pix", p0=[0.1, 0.1])
    assert run(tmp_path, "minimize", "--config", cfg) == 3
    d = load(tmp_path, "minimize.json")
    assert d["status"] == "certification-failed"
    assert d["report"]["witness"] is not None


def test_loops_vertex_quick(tmp_path):
    assert run(tmp_path, "loops", "--height", "0", "--directions", "36", "--max-length", "20") == 0
    assert load(tmp_path, "loops.json")["result"]["verdict"] == "simple"


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["nonsense"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["geodesic", "--manifold", "sphere"])
    assert info.value.code == 2
    assert run(tmp_path, "loops", "--manifold", "m3") == 2


@pytest.mark.parametrize("argv", [
    ["certify", "--manifold", "m3", "--function", "energy", "--threads", "2"],
    ["recur", "--manifold", "torus", "--samples", "20", "--T", "20", "--seed", "5"],
    ["geodesic", "--point", "0.4", "0.1", "--vector", "0", "1"],
])
def test_reruns_byte_identical(tmp_path, argv):
    main(argv + ["--out", str(tmp_path)])
    name = argv[0] + ".json"
    first = (tmp_path / name).read_bytes()
    main(argv + ["--out", str(tmp_path)])
    assert (tmp_path / name).read_bytes() == first
    d = json.loads(first)
    assert d["config"]["command"] == argv[0]
    assert "seed" in d["config"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "convexgeo", "beta", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["residual"] < 1e-10
