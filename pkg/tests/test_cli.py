"""Tests for the command-line interface and report files."""

import csv
import json

import numpy as np
import pytest

from nldiag.circuit import load_netlist, save_netlist
from nldiag.cli import main, parse_values
from nldiag.fixtures import build_diode_bridge, bridge_two_error_faults


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_parse_values():
    vals = parse_values("1:100:log:3", 5)
    np.testing.assert_allclose(vals, [1.0, 10.0, 100.0], rtol=1e-12)
    vals = parse_values("0:1:lin:5", 9)
    np.testing.assert_allclose(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert len(parse_values("1:2:lin", 7)) == 7


def test_parse_values_errors():
    from nldiag.cli import _ParseError
    for bad in ("1:2", "1:2:cubic", "a:2:log", "-1:2:log", "1:2:lin:0"):
        with pytest.raises(_ParseError):
            parse_values(bad, 5)


def test_simulate_reference_bridge(tmp_path):
    out = tmp_path / "ref"
    code = main(["simulate", "--netlist", "bridge_ref", "--dt", "1e-5",
                 "--t-end", "1e-3", "--out-dir", str(out), "--no-plot"])
    assert code == 0
    rows = read_csv(out / "steps.csv")
    assert rows[0] == ["step", "t", "1", "2", "3", "vsrc:current",
                       "iterations", "status"]
    assert len(rows) == 101
    assert rows[-1][-1] == "ok"
    eig_rows = read_csv(out / "eigs.csv")
    assert eig_rows[0] == ["step", "t", "method", "re", "im"]
    an_rows = read_csv(out / "anomalies.csv")
    # reference bridge: no flags anywhere
    assert all(r[3] == "" for r in an_rows[1:])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["input_digests"]["netlist"] == "fixture:bridge_ref"
    # 17-significant-digit serialization round-trips doubles exactly
    t_back = float(rows[1][1])
    assert t_back == 1e-5


def test_simulate_two_error_bridge_exit_code(tmp_path):
    out = tmp_path / "fail"
    code = main(["simulate", "--netlist", "bridge_two_errors", "--dt", "2e-5",
                 "--t-end", "20e-3", "--out-dir", str(out), "--no-plot"])
    assert code == 3
    rows = read_csv(out / "steps.csv")
    assert rows[-1][-1] == "solver_failed"
    cr = read_csv(out / "crossings.csv")
    last_step = int(rows[-1][0])
    pd_on = [int(r[0]) for r in cr[1:]
             if r[3] == "period_doubling_signature" and r[4] == "on"]
    assert pd_on and min(pd_on) < last_step


def test_exit_report_coherence(tmp_path):
    # exit 3 iff the final steps.csv status is solver_failed
    out_ok = tmp_path / "ok"
    code_ok = main(["simulate", "--netlist", "bridge_ref", "--dt", "1e-5",
                    "--t-end", "2e-4", "--out-dir", str(out_ok), "--no-plot"])
    assert code_ok == 0
    assert read_csv(out_ok / "steps.csv")[-1][-1] == "ok"


def test_simulate_file_netlist_roundtrip(tmp_path):
    path = tmp_path / "net.json"
    save_netlist(path, build_diode_bridge(), bridge_two_error_faults())
    net2, faults2 = load_netlist(path)
    assert net2 == build_diode_bridge()
    out = tmp_path / "filerun"
    code = main(["simulate", "--netlist", str(path), "--dt", "1e-5",
                 "--t-end", "1e-4", "--out-dir", str(out), "--no-plot"])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["input_digests"]["netlist"]) == 64  # sha256 hex


def test_parse_error_exit_codes(tmp_path):
    assert main(["simulate", "--netlist", "no_such_fixture", "--dt", "1e-5",
                 "--t-end", "1e-4", "--out-dir", str(tmp_path)]) == 1
    assert main(["simulate", "--netlist", "bridge_ref",
                 "--out-dir", str(tmp_path), "--bogus-flag"]) == 1
    # file netlists require explicit dt / t_end
    path = tmp_path / "n.json"
    save_netlist(path, build_diode_bridge())
    assert main(["simulate", "--netlist", str(path),
                 "--out-dir", str(tmp_path / "x"), "--no-plot"]) == 1


def test_validation_error_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    doc = {
        "nodes": ["a", "b"],
        "ground": "zz",
        "components": [{"id": "r", "type": "resistor", "nodes": ["a", "b"],
                        "params": {"ohms": 1.0}}],
    }
    path.write_text(json.dumps(doc))
    code = main(["simulate", "--netlist", str(path), "--dt", "1e-5",
                 "--t-end", "1e-4", "--out-dir", str(tmp_path / "v"),
                 "--no-plot"])
    assert code == 2


def test_malformed_json_is_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    code = main(["simulate", "--netlist", str(path), "--dt", "1e-5",
                 "--t-end", "1e-4", "--out-dir", str(tmp_path / "m"),
                 "--no-plot"])
    assert code == 1


def test_dmd_only_diag_leaves_gaps(tmp_path):
    # With --diag dmd, steps solved in fewer than three iterates have no
    # usable report, so eigs.csv skips them.
    out = tmp_path / "dmdonly"
    code = main(["simulate", "--netlist", "bridge_ref", "--dt", "2e-7",
                 "--t-end", "4e-5", "--diag", "dmd", "--out-dir", str(out),
                 "--no-plot"])
    assert code == 0
    steps = {int(r[0]) for r in read_csv(out / "steps.csv")[1:]}
    eig_steps = {int(r[0]) for r in read_csv(out / "eigs.csv")[1:]}
    assert eig_steps < steps  # strict subset: gaps exist


def test_gmin_sweep_cli(tmp_path):
    out = tmp_path / "gmin"
    code = main(["sweep", "--mode", "gmin", "--netlist", "bridge_ref",
                 "--dt", "2e-5", "--t-end", "2e-3",
                 "--values", "1e12:1e30:log:3", "--out-dir", str(out),
                 "--no-plot"])
    assert code == 0
    rows = read_csv(out / "grid.csv")
    assert rows[0] == ["t", "value", "order", "leading_abs_lambda"]
    assert len(rows) == 1 + 3 * 100
    assert (out / "eigvectors.csv").exists()


def test_dt_sweep_cli(tmp_path):
    out = tmp_path / "dt"
    code = main(["sweep", "--mode", "dt", "--netlist", "bridge_one_error",
                 "--dt", "2e-5", "--t-end", "1e-3",
                 "--values", "1e-6:2e-5:log:3", "--stride", "10",
                 "--out-dir", str(out), "--no-plot"])
    assert code == 0
    rows = read_csv(out / "grid.csv")
    assert rows[0] == ["t", "value", "order", "leading_abs_lambda"]
    orders = {r[2] for r in rows[1:]}
    assert orders == {"1", "2"}


def test_rosenbrock_cli_analytic(tmp_path):
    out = tmp_path / "rb"
    code = main(["rosenbrock", "--jacobian", "analytic", "--out-dir", str(out),
                 "--no-plot"])
    assert code == 0
    rows = read_csv(out / "spectrum.csv")
    mags = [abs(complex(float(r[0]), float(r[1]))) for r in rows[1:]]
    assert max(mags) < 1e-5
    hess = read_csv(out / "hessian_spectrum.csv")
    assert len(hess) == 101


def test_plots_rendered_by_default(tmp_path):
    out = tmp_path / "plots"
    code = main(["simulate", "--netlist", "bridge_ref", "--dt", "2e-5",
                 "--t-end", "2e-4", "--out-dir", str(out)])
    assert code == 0
    assert (out / "voltages.png").exists()
    assert (out / "eigenvalues.png").exists()
