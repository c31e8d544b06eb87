import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from modphi.benchmarks import risk_benchmark
from modphi.cli import COLUMNS, PRESETS, render, run
from modphi.engines import Engine, mixed_tail
from modphi.risk import risk_report


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def portfolio_file(tmp_path):
    def write(cfg):
        path = tmp_path / "port.json"
        path.write_text(json.dumps(cfg))
        return str(path)

    return write


def test_tail_row_matches_library():
    code, out, _ = _run(["tail", "--portfolio", "risk-benchmark", "--method", "modpoisson", "--order", "6",
                         "--x", "120"])
    assert code == 0
    (row,) = _rows(out)
    assert list(row) == COLUMNS["tail"]
    assert row["method"] == "modpoisson" and row["order"] == "6"
    expected = mixed_tail(risk_benchmark(), 120, Engine("modpoisson", 6))
    assert float(row["estimate"]) == pytest.approx(expected, rel=1e-11)
    assert row["estimate"] == f"{expected:.12g}"


def test_method_with_inline_order():
    _, a, _ = _run(["tail", "--portfolio", "risk-benchmark", "--method", "modpoisson(6)", "--x", "120",
                    "--no-timing"])
    _, b, _ = _run(["tail", "--portfolio", "risk-benchmark", "--method", "modpoisson", "--order", "6",
                    "--x", "120", "--no-timing"])
    assert a == b


def test_var_es_matches_risk_module():
    code, out, _ = _run(["var-es", "--portfolio", "risk-benchmark", "--method", "recursive",
                         "--alpha", "0.95,0.99"])
    assert code == 0
    rows = _rows(out)
    rep = risk_report(risk_benchmark(), (0.95, 0.99), Engine("recursive"))
    assert [int(r["var"]) for r in rows] == list(rep.var)
    for r, e in zip(rows, rep.es):
        assert r["es"] == f"{e:.12g}"


def test_bad_rho_names_field(portfolio_file):
    path = portfolio_file({"n": 10, "rho": 1.2, "pd_grid": {"lo": 0.01, "hi": 0.05}})
    code, out, err = _run(["tail", "--portfolio", path, "--method", "recursive", "--x", "2"])
    assert code == 2
    assert "rho" in err and out == ""


@pytest.mark.parametrize(
    "argv, field",
    [
        (["tail", "--portfolio", "risk-benchmark", "--method", "nope", "--x", "1"], "method"),
        (["tail", "--portfolio", "risk-benchmark", "--method", "modpoisson", "--x", "1"], "order"),
        (["tail", "--portfolio", "risk-benchmark", "--method", "recursive", "--x", "a,b"], "x"),
        (["tail", "--portfolio", "missing.json", "--method", "recursive", "--x", "1"], "portfolio"),
        (["var-es", "--portfolio", "risk-benchmark", "--method", "recursive", "--alpha", "1.5"], "alpha"),
        (["var-es", "--portfolio", "risk-benchmark", "--method", "is2", "--alpha", "0.9"], "method"),
        (["cdo", "--portfolio", "cdo-benchmark", "--method", "ld"], "method"),
        (["tail", "--portfolio", "risk-benchmark", "--method", "mc", "--x", "1", "--runs", "0"], "runs"),
        (["tail", "--portfolio", "risk-benchmark", "--method", "recursive", "--x", "1", "--nodes", "0"], "nodes"),
    ],
)
def test_config_errors(argv, field):
    code, _, err = _run(argv)
    assert code == 2
    assert field in err


def test_parse_error_exit_code():
    code, _, err = _run(["tail", "--method", "recursive"])
    assert code == 2 and "portfolio" in err


def test_numeric_failure_exit_code(portfolio_file):
    path = portfolio_file({"n": 2000, "rho": 0.1, "pd_grid": {"lo": 0.4, "hi": 0.6}, "exposure": [0, 0.5, 0.5]})
    code, _, err = _run(["tail", "--portfolio", path, "--method", "modcompound(2)", "--x", "100", "--nodes", "4"])
    assert code == 3
    assert "numeric" in err and "modcompound" in err and "node" in err


def test_resource_exit_code(portfolio_file):
    pmf = [0.0] * 99 + [1.0]
    path = portfolio_file({"n": 20000, "rho": 0.1, "pd_grid": {"lo": 0.01, "hi": 0.02}, "exposure": pmf})
    code, _, err = _run(["tail", "--portfolio", path, "--method", "recursive", "--x", "10"])
    assert code == 4
    assert "resource" in err


def test_no_timing_is_byte_identical(tmp_path):
    argv = ["tail", "--portfolio", "risk-benchmark", "--method", "is2", "--x", "60,90", "--runs", "2000",
            "--seed", "5", "--no-timing"]
    a, b = _run(argv)[1], _run(argv)[1]
    assert a == b
    assert all(r["seconds"] == "" for r in _rows(a))


def test_thread_count_does_not_change_output(monkeypatch):
    argv = ["tail", "--portfolio", "risk-benchmark", "--method", "mc", "--x", "60", "--runs", "50000",
            "--no-timing"]
    monkeypatch.setenv("RISK_THREADS", "1")
    a = _run(argv)[1]
    monkeypatch.setenv("RISK_THREADS", "3")
    assert _run(argv)[1] == a


def test_json_output_and_file(tmp_path):
    out = tmp_path / "res.json"
    code, stdout, _ = _run(["var-es", "--portfolio", "risk-benchmark", "--method", "modpoisson(4)",
                            "--alpha", "0.99", "--format", "json", "-o", str(out)])
    assert code == 0 and stdout == ""
    (row,) = json.loads(out.read_text())
    assert set(row) == set(COLUMNS["var-es"])
    assert row["order"] == 4 and isinstance(row["var"], int)


def test_cdo_rows(portfolio_file, tmp_path):
    tranches = tmp_path / "tr.json"
    tranches.write_text(json.dumps([{"attach": 0.0, "detach": 0.1}, {"attach": 0.1, "detach": 0.3}]))
    path = portfolio_file({"n": 30, "rho": 0.2, "pd_grid": {"lo": 0.02, "hi": 0.08}})
    code, out, _ = _run(["cdo", "--portfolio", path, "--method", "stein-poisson", "--tranches", str(tranches),
                         "--maturity", "2", "--freq", "4", "--rate", "0.02"])
    assert code == 0
    rows = _rows(out)
    assert list(rows[0]) == COLUMNS["cdo"]
    assert [r["tranche"] for r in rows] == ["0-10%", "10-30%"]
    for r in rows:
        assert len(r["fair_spread_bp"].split(".")[1]) == 4
        legs = float(r["default_leg_bp"]) / float(r["premium_leg_bp"]) * 1e4
        assert legs == pytest.approx(float(r["fair_spread_bp"]), rel=1e-3)


def test_cdo_bad_schedule_names_field():
    code, _, err = _run(["cdo", "--portfolio", "cdo-benchmark", "--method", "recursive", "--maturity", "1.1"])
    assert code == 2 and "maturity" in err


def test_mc_var_es_notes_variance():
    code, out, err = _run(["var-es", "--portfolio", "risk-benchmark", "--method", "mc", "--alpha", "0.9",
                           "--runs", "5000"])
    assert code == 0 and "high-variance" in err
    assert int(_rows(out)[0]["var"]) > 0


def test_bench_presets_exist():
    assert {"fig1", "fig2", "fig3", "fig4", "fig5", "table1", "table2"} <= set(PRESETS)


def test_bench_fig5_rows():
    code, out, _ = _run(["bench", "fig5", "--nodes", "16"])
    rows = _rows(out)
    assert code == 0 and len(rows) == 16
    assert [int(r["order"]) for r in rows] == list(range(0, 31, 2))
    assert all(float(r["seconds"]) >= 0 for r in rows)


def test_render_formats():
    rows = [{"a": 1.23456789012345, "fair_spread_bp": 12.3, "b": None, "c": np.int64(3)}]
    text = render(rows, ["a", "fair_spread_bp", "b", "c"], "csv")
    assert text.splitlines()[1] == "1.23456789012,12.3000,,3"
    data = json.loads(render(rows, ["a", "b"], "json"))
    assert data == [{"a": 1.23456789012, "b": None}]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "modphi", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "var-es" in proc.stdout
