import json
from pathlib import Path

import pytest
import yaml

from hypfio.cli import EXIT_CONTRACTION, EXIT_HYPOTHESIS, EXIT_OK, EXIT_SCHEMA, run, write_atomic

SCEN = Path(__file__).resolve().parents[1] / "scenarios"
GRID = {"n_x": 64, "x_min": -6.283185307179586, "x_max": 6.283185307179586, "n_t": 8, "t_final": 0.25}


def scenario(tmp_path, body, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(body))
    return str(p)


def small_system(**extra):
    body = {"system": {"A": [["xi", "0.5*jb(xi)"], ["0", "2*xi"]], "B": [["0", "0"], ["0.3/jb(xi)", "0"]]},
            "data": {"u0": ["exp(-x**2)*exp(3*I*x)", "exp(-(x-1)**2)"]}, "grid": dict(GRID)}
    body.update(extra)
    return body


def test_check_crossing_scenario(tmp_path, capsys):
    code = run(["check", str(SCEN / "crossing_check.yaml"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "check.json").read_text())
    assert "pass(1)" in json.dumps(rep["h2"])
    assert "pass(1)" in capsys.readouterr().out


def test_strict_h1_violation(tmp_path):
    assert run(["solve", str(SCEN / "h1_violation.yaml"), "--strict", "--out", str(tmp_path)]) == EXIT_HYPOTHESIS
    assert run(["check", str(SCEN / "h1_violation.yaml"), "--strict", "--out", str(tmp_path)]) == EXIT_HYPOTHESIS


def test_solve_coupled_constant(tmp_path):
    assert run(["solve", str(SCEN / "coupled_constant.yaml"), "--out", str(tmp_path)]) == EXIT_OK
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["oracle"] == "constant_coeff"
    assert diag["oracle_relative_error"] <= 1e-3
    assert (tmp_path / "fields_u1.csv").exists() and (tmp_path / "fields_u2.csv").exists()


@pytest.mark.parametrize("mutate, field", [
    (lambda b: b["grid"].pop("n_x"), "n_x"),
    (lambda b: b["grid"].update(n_x="many"), "n_x"),
    (lambda b: b.update(equation={"order": 2, "roots": ["xi", "-xi"]}), "system"),
    (lambda b: b["system"].update(A=[["xi", "zeta"], ["0", "2*xi"]]), "zeta"),
    (lambda b: b.update(colour="red"), "colour"),
])
def test_schema_errors(tmp_path, capsys, mutate, field):
    body = small_system()
    mutate(body)
    code = run(["solve", scenario(tmp_path, body), "--out", str(tmp_path)])
    assert code == EXIT_SCHEMA
    assert field in capsys.readouterr().err


def test_bad_flags(tmp_path):
    path = scenario(tmp_path, small_system())
    assert run(["solve", path, "--neumann-m", "-1", "--out", str(tmp_path)]) == EXIT_SCHEMA
    assert run(["solve", path, "--threads", "0", "--out", str(tmp_path)]) == EXIT_SCHEMA
    assert run(["solve", path, "--xi-max", "1e6", "--out", str(tmp_path)]) == EXIT_SCHEMA


def test_determinism(tmp_path):
    path = scenario(tmp_path, small_system())
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["solve", path, "--out", str(a)]) == EXIT_OK
    assert run(["solve", path, "--out", str(b)]) == EXIT_OK
    for name in ("fields_u1.csv", "fields_u2.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_overrides(tmp_path):
    path = scenario(tmp_path, small_system())
    assert run(["solve", path, "--grid-n", "32", "--t-final", "0.125", "--neumann-m", "auto",
                "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "fields_u1.csv").read_text().splitlines()
    assert lines[0].startswith("t,x")
    assert len({ln.split(",")[1] for ln in lines[1:]}) == 32


def test_reduce_command(tmp_path):
    assert run(["reduce", str(SCEN / "wave.yaml"), "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "companion.json").read_text())
    assert rep["m"] == 2 and not rep["upper_triangular"]
    assert run(["reduce", str(SCEN / "coupled_constant.yaml"), "--out", str(tmp_path)]) == EXIT_SCHEMA


def test_equation_solve_and_reference(tmp_path):
    assert run(["solve", str(SCEN / "wave.yaml"), "--out", str(tmp_path)]) == EXIT_OK
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["oracle_relative_error"] <= 1e-2
    assert run(["reference", str(SCEN / "wave.yaml"), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "reference_u_final.csv").exists()


def test_reference_system(tmp_path):
    path = scenario(tmp_path, small_system())
    assert run(["reference", path, "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "reference.json").read_text())
    assert rep["oracle"] == "constant_coeff" and rep["cross_check_relative_error"] <= 1e-6


def test_trace_wf(tmp_path):
    assert run(["trace-wf", str(SCEN / "heaviside_wf.yaml"), "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "wavefront.csv").read_text().splitlines()
    assert rows[0] == "branch,t,x,xi_sign,strength_order,x_lo,x_hi"
    labels = {r.split(",")[0] for r in rows[1:]}
    assert labels == {"2", "2-1"}
    rep = json.loads((tmp_path / "wavefront_report.json").read_text())
    assert rep["verification"]["passed"]


def test_contraction_failure_exit(tmp_path):
    body = small_system(solver={"neumann_m": 4})
    body["system"]["A"][0][1] = "400*jb(xi)"
    body["system"]["B"][1][0] = "400/jb(xi)"
    assert run(["solve", scenario(tmp_path, body), "--out", str(tmp_path)]) == EXIT_CONTRACTION


def test_write_atomic(tmp_path):
    p = tmp_path / "x.txt"
    write_atomic(p, "one")
    write_atomic(p, "two")
    assert p.read_text() == "two" and list(tmp_path.iterdir()) == [p]
