import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from metricgraph.cli import main

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "docs" / "schemas"


def write_interval(tmp_path, length=math.pi, u=1.0, bc=("dirichlet", "dirichlet")):
    gpath = tmp_path / "g.json"
    bpath = tmp_path / "bc.json"
    gpath.write_text(
        json.dumps(
            {
                "u": u,
                "vertices": ["v", "w"],
                "edges": [{"id": "e", "length": length, "from": "v", "to": "w"}],
            }
        )
    )
    bpath.write_text(json.dumps({"v": bc[0], "w": bc[1]}))
    return str(gpath), str(bpath)


def load_schema(name):
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())


def run_and_parse(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def test_validate_ok(tmp_path, capsys):
    g, b = write_interval(tmp_path)
    code, report = run_and_parse(capsys, ["validate", "--graph", g, "--bc", b])
    assert code == 0 and report["valid"]
    jsonschema.validate(report, load_schema("validate"))


def test_validate_short_edge_fails(tmp_path, capsys):
    g, b = write_interval(tmp_path, length=0.5, u=1.0)
    code, report = run_and_parse(capsys, ["validate", "--graph", g, "--bc", b])
    assert code == 1
    assert any(v["code"] == "lb" and v["subject"] == "e" for v in report["graph"]["violations"])
    jsonschema.validate(report, load_schema("validate"))


def test_validate_non_hermitian_l(tmp_path, capsys):
    gpath = tmp_path / "g.json"
    bpath = tmp_path / "bc.json"
    gpath.write_text(
        json.dumps(
            {
                "u": 1.0,
                "vertices": [0, 1, 2],
                "edges": [
                    {"id": 0, "length": 1.0, "from": 0, "to": 1},
                    {"id": 1, "length": 1.0, "from": 1, "to": 2},
                ],
            }
        )
    )
    bpath.write_text(
        json.dumps(
            {
                "0": "dirichlet",
                "1": {"L": [[0.0, [0.0, 1.0]], [0.0, 0.0]], "P": [[0.0, 0.0], [0.0, 0.0]]},
                "2": "dirichlet",
            }
        )
    )
    code, report = run_and_parse(capsys, ["validate", "--graph", str(gpath), "--bc", str(bpath)])
    assert code == 1
    assert any(v["code"] == "L-selfadjoint" for v in report["boundary"]["violations"])


def test_validate_unreadable_file(tmp_path, capsys):
    g, b = write_interval(tmp_path)
    code = main(["validate", "--graph", str(tmp_path / "missing.json"), "--bc", b])
    assert code == 2


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


def test_spectrum_interval(tmp_path, capsys):
    g, b = write_interval(tmp_path)
    code, report = run_and_parse(
        capsys,
        ["spectrum", "--graph", g, "--bc", b, "--mesh", "0.0157", "--modes", "6",
         "--lambda-min", "0.5", "--lambda-max", "40", "--out", str(tmp_path / "out")],
    )
    assert code == 0 and report["within_budget"]
    jsonschema.validate(report, load_schema("spectrum"))
    secular = np.loadtxt(tmp_path / "out" / "secular_spectrum.csv", delimiter=",", skiprows=1)
    assert np.allclose(secular[:, 1], [1, 4, 9, 16, 25, 36], atol=1e-8)
    assert (tmp_path / "out" / "fem_spectrum.csv").exists()
    detail = np.loadtxt(tmp_path / "out" / "secular_report.csv", delimiter=",", skiprows=1)
    assert detail.shape[1] == 3  # lambda, multiplicity, sigma_min
    assert np.all(detail[:, 1] == 1) and np.all(detail[:, 2] < 1e-8)


def test_spectrum_neumann_zero_mode(tmp_path, capsys):
    g, b = write_interval(tmp_path, length=1.0, bc=("neumann", "neumann"))
    code, report = run_and_parse(
        capsys,
        ["spectrum", "--graph", g, "--bc", b, "--mesh", "0.01", "--modes", "3",
         "--lambda-min", "-0.5", "--lambda-max", "50"],
    )
    assert code == 0
    assert abs(report["eigenvalues"][0]["secular"]) < 1e-9
    assert abs(report["eigenvalues"][0]["fem"]) < 1e-8


def test_spectrum_rejects_infinite_edges(tmp_path, capsys):
    gpath = tmp_path / "g.json"
    bpath = tmp_path / "bc.json"
    gpath.write_text(
        json.dumps(
            {"u": 1.0, "vertices": ["v"], "edges": [{"id": "e", "length": "inf", "from": "v"}]}
        )
    )
    bpath.write_text(json.dumps({"v": "neumann"}))
    assert main(["spectrum", "--graph", str(gpath), "--bc", str(bpath)]) == 2


# ---------------------------------------------------------------------------
# expansion
# ---------------------------------------------------------------------------


def test_expansion_report_interval(tmp_path, capsys):
    g, b = write_interval(tmp_path)
    code, report = run_and_parse(
        capsys,
        ["expansion", "--graph", g, "--bc", b, "--mesh", "0.00785", "--modes", "8",
         "--lambda-min", "0.5", "--lambda-max", "75", "--hs-c", "1.0",
         "--weight-base", "v", "--seed", "3"],
    )
    assert code == 0
    jsonschema.validate(report, load_schema("expansion"))
    assert report["worst_genef_residual"] < 1e-6
    for block in report["parseval"].values():
        assert block["relative_gap"] < 1e-4 or block["gap"] < 1e-6


def test_expansion_check_file_flags_kink(tmp_path, capsys):
    from metricgraph import GridFunction, load_graph, save_function_csv

    g, b = write_interval(tmp_path)
    graph = load_graph(g)
    h = 0.02
    # cos(t) solves the equation at lambda=1 but breaks both Dirichlet ends
    phi = GridFunction.from_callable(graph, h, lambda eid, ts: np.cos(ts).astype(complex))
    check = tmp_path / "phi.csv"
    save_function_csv(phi, check)
    code, report = run_and_parse(
        capsys,
        ["expansion", "--graph", g, "--bc", b, "--mesh", "0.02", "--modes", "4",
         "--lambda-min", "0.5", "--lambda-max", "25",
         "--check-file", str(check), "--check-lambda", "1.0"],
    )
    assert code == 1
    assert report["check_file"]["residual"] > 1e-2


def test_expansion_disconnected_graph_is_input_error(tmp_path):
    gpath = tmp_path / "g.json"
    bpath = tmp_path / "bc.json"
    gpath.write_text(
        json.dumps(
            {
                "u": 1.0,
                "vertices": ["a", "b", "c", "d"],
                "edges": [
                    {"id": "e1", "length": 1.0, "from": "a", "to": "b"},
                    {"id": "e2", "length": 1.0, "from": "c", "to": "d"},
                ],
            }
        )
    )
    bpath.write_text(json.dumps({v: "neumann" for v in "abcd"}))
    assert main(
        ["expansion", "--graph", str(gpath), "--bc", str(bpath), "--lambda-min", "-0.5",
         "--lambda-max", "30", "--modes", "3"]
    ) == 2


# ---------------------------------------------------------------------------
# potential
# ---------------------------------------------------------------------------


def test_potential_constant_shift(tmp_path, capsys):
    g, b = write_interval(tmp_path)
    code, report = run_and_parse(
        capsys,
        ["potential", "--graph", g, "--bc", b, "--potential", "const:1.0",
         "--mesh", "0.0157", "--modes", "5", "--lambda-min", "0.5", "--lambda-max", "40",
         "--samples", "200"],
    )
    assert code == 0
    jsonschema.validate(report, load_schema("potential"))
    assert report["constant_shift_error"] < 1e-8
    assert report["m_v"]["value"] == pytest.approx(math.sqrt(2.0), rel=1e-9)
    for block in report["relative_bound"]:
        assert block["worst_margin"] >= -1e-8


def test_potential_zero_reduces_to_unperturbed(tmp_path, capsys):
    g, b = write_interval(tmp_path)
    code, report = run_and_parse(
        capsys,
        ["potential", "--graph", g, "--bc", b, "--potential", "const:0.0",
         "--mesh", "0.02", "--modes", "4", "--lambda-min", "0.5", "--lambda-max", "30",
         "--samples", "100"],
    )
    assert code == 0
    assert report["m_v"]["value"] == 0.0
    assert report["spectrum"]["perturbed"] == report["spectrum"]["unperturbed"]


def test_potential_well_report(tmp_path, capsys):
    g, b = write_interval(tmp_path)
    code, report = run_and_parse(
        capsys,
        ["potential", "--graph", g, "--bc", b, "--potential", "well:e,1.0,2.0,4.0",
         "--mesh", "0.02", "--modes", "4", "--lambda-min", "-10", "--lambda-max", "40",
         "--samples", "150"],
    )
    assert code == 0
    seg = report["m_v"]["segment"]
    assert seg["t0"] <= 1.0 and seg["t1"] >= 2.0  # the achieving window covers the well
    # an attractive well pulls eigenvalues down
    assert all(
        p <= u + 1e-9
        for p, u in zip(report["spectrum"]["perturbed"], report["spectrum"]["unperturbed"])
    )


def test_potential_csv_mesh_mismatch_is_input_error(tmp_path):
    from metricgraph import Potential, load_graph, save_potential_csv

    g, b = write_interval(tmp_path)
    graph = load_graph(g)
    V = Potential.constant(graph, 0.05, 1.0)
    vpath = tmp_path / "V.csv"
    save_potential_csv(V, vpath)
    assert main(
        ["potential", "--graph", g, "--bc", b, "--potential", str(vpath), "--mesh", "0.02"]
    ) == 2


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv_tail",
    [
        ["validate"],
        ["spectrum", "--mesh", "0.05", "--modes", "4", "--lambda-min", "0.5", "--lambda-max", "30"],
        ["expansion", "--mesh", "0.05", "--modes", "4", "--lambda-min", "0.5", "--lambda-max", "30",
         "--seed", "7", "--weight-base", "v"],
        ["potential", "--potential", "const:0.5", "--mesh", "0.05", "--modes", "4",
         "--lambda-min", "0.5", "--lambda-max", "30", "--samples", "100", "--seed", "7"],
    ],
)
def test_reports_are_byte_identical(tmp_path, capsys, argv_tail):
    g, b = write_interval(tmp_path)
    cmd = argv_tail[0]
    outputs = []
    for run in (1, 2):
        outdir = tmp_path / f"run{run}"
        argv = [cmd, "--graph", g, "--bc", b, *argv_tail[1:], "--out", str(outdir)]
        assert main(argv) == 0
        capsys.readouterr()
        outputs.append((outdir / f"{cmd}.json").read_bytes())
    assert outputs[0] == outputs[1]
