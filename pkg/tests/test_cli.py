import io
import json
import subprocess
import sys

import pytest

from seqchi2 import __version__
from seqchi2 import cli
from seqchi2.cli import RunRecord, run
from seqchi2.quadrature import QuadResult


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def record(*argv):
    code, out, _ = call(*argv)
    lines = out.strip().splitlines()
    assert len(lines) == 1
    return code, RunRecord.from_json(lines[0])


def test_alpha_total_mass():
    code, rec = record("alpha", "--n-categories", "5", "--c", "0.7", "--x1", "0", "--x2", "0", "--method", "quad")
    assert code == 0
    assert rec.outputs["alpha"] == pytest.approx(1.0, abs=1e-10)
    assert "log_alpha" in rec.outputs and rec.version == __version__


def test_alpha_from_sample_sizes():
    code, rec = record("alpha", "--n-categories", "4", "--n1", "49", "--n2", "100", "--x1", "30", "--x2", "30",
                       "--method", "asym")
    assert code == 0 and rec.inputs["c"] == pytest.approx(0.7)


def test_bracket_names_failed_condition():
    code, out, err = call("alpha", "--n-categories", "5", "--c", "0.6", "--x1", "40", "--x2", "5",
                          "--method", "bracket")
    assert code == 3
    rec = RunRecord.from_json(out)
    assert rec.outputs["failed_conditions"] == ["rho window"]
    assert "rho window" in err


def test_bracket_product_condition():
    code, out, _ = call("alpha", "--n-categories", "3", "--c", "0.5", "--x1", "2", "--x2", "0.6",
                        "--method", "bracket")
    assert code == 3
    assert "x1*x2* lower bound" in RunRecord.from_json(out).outputs["failed_conditions"]


def test_quiet_suppresses_messages():
    code, out, err = call("alpha", "--n-categories", "5", "--c", "0.6", "--x1", "40", "--x2", "5", "--method",
                          "bracket", "--quiet")
    assert code == 3 and err == "" and out


def test_bracket_success_fields():
    code, rec = record("alpha", "--n-categories", "5", "--c", "0.6", "--x1", "60", "--x2", "60", "--method", "bracket")
    o = rec.outputs
    assert code == 0
    assert o["bracket_lo_log"] <= o["log_alpha"] <= o["bracket_hi_log"]
    assert all(o["diagnostics"].values())


def test_usage_errors():
    assert call("alpha", "--x1", "1")[0] == 2
    assert call("nonsense")[0] == 2
    assert call("alpha", "--x1", "1", "--x2", "1", "--method", "magic")[0] == 2
    assert call()[0] == 2


def test_design_flag_conflict_is_domain_error():
    assert call("alpha", "--x1", "1", "--x2", "1")[0] == 3
    assert call("alpha", "--c", "0.5", "--n1", "2", "--n2", "3", "--x1", "1", "--x2", "1")[0] == 3


def test_tolerance_exit(monkeypatch):
    def fake(levels, design, rel_tol=1e-10):
        return QuadResult(-3.0, 0.0497870683678639, 1e-3, 40000, converged=False, rel_error=0.02)

    monkeypatch.setattr(cli, "alpha_quad", fake)
    code, rec = record("alpha", "--c", "0.5", "--x1", "3", "--x2", "3")
    assert code == 4 and rec.outputs["converged"] is False and rec.outputs["log_alpha"] == -3.0


def test_levels_modes():
    code, a = record("levels", "--n-categories", "5", "--c", "0.6", "--alpha1", "1e-5", "--p", "1")
    code2, b = record("levels", "--n-categories", "5", "--c", "0.6", "--alpha1", "1e-5", "--alpha2", "1e-5")
    assert code == code2 == 0
    assert a.outputs["log_alpha"] == pytest.approx(b.outputs["log_alpha"], rel=1e-12)
    code, q = record("levels", "--n-categories", "5", "--c", "0.6", "--alpha1", "1e-5", "--p", "1", "--method", "quad")
    assert code == 0 and q.outputs["x1_star"] == pytest.approx(28.473255424006, rel=1e-10)


def test_levels_deep_tail_reports_log():
    code, rec = record("levels", "--n-categories", "5", "--c", "0.6", "--alpha1", "1e-300", "--p", "1.2")
    assert code == 0
    assert rec.outputs["alpha"] == 0.0 and rec.outputs["underflow"] is True
    assert rec.outputs["log_alpha"] < -700


def test_bessel_command():
    code, rec = record("bessel", "--d", "3", "--s1", "1", "--s2", "4", "--x1", "2", "--x2", "2")
    assert code == 0
    assert rec.outputs["x1_star"] == 4.0 and rec.outputs["c"] == 0.5 and rec.outputs["n_categories"] == 4


def test_bonferroni_command():
    code, rec = record("bonferroni", "--marginals", "0.9,0.8", "--pairwise", "[[0, 0.75], [0, 0]]")
    assert code == 0
    assert rec.outputs["best_lo"] == rec.outputs["best_hi"] == pytest.approx(0.75)
    assert call("bonferroni", "--marginals", "0.2,0.3", "--pairwise", "0,0.5;0,0")[0] == 3


def test_infeld_command():
    code, rec = record("infeld", "--nu", "1.5", "--x", "10")
    assert code == 0 and rec.outputs["psi"] == pytest.approx(0.100000002267, abs=1e-12)
    code, rec = record("infeld", "--nu", "2.5", "--x", "0.5")
    assert code == 0 and rec.outputs["psi"] is None


def test_csv_output():
    code, out, _ = call("alpha", "--c", "0.7", "--x1", "5", "--x2", "6", "--format", "csv")
    header, row = out.strip().splitlines()
    assert code == 0 and "out.log_alpha" in header.split(",") and row.startswith("alpha,")


def test_grid(tmp_path):
    grid = tmp_path / "grid.csv"
    grid.write_text("x1,x2,c\n0,0,0.5\n10,12,0.7\n40,5,0.6\n")
    code, out, _ = call("alpha", "--n-categories", "5", "--method", "bracket", "--grid", str(grid), "--quiet")
    lines = out.strip().splitlines()
    assert len(lines) == 3 and code == 3  # first and last rows fail validity
    mid = RunRecord.from_json(lines[1]).outputs
    assert mid["bracket_lo_log"] <= mid["log_alpha"] <= mid["bracket_hi_log"]
    code, out, _ = call("alpha", "--n-categories", "5", "--grid", str(grid), "--format", "csv")
    assert code == 0 and len(out.strip().splitlines()) == 4


def test_missing_grid_file():
    assert call("alpha", "--grid", "/nonexistent/grid.csv")[0] == 2


def test_record_round_trip():
    for argv in (["alpha", "--c", "0.6", "--x1", "20", "--x2", "25"],
                 ["mc", "--mode", "bessel", "--reps", "1000", "--seed", "4"],
                 ["alpha", "--c", "0.6", "--x1", "40", "--x2", "5", "--method", "bracket"]):
        _, out, _ = call(*argv)
        rec = RunRecord.from_json(out)
        assert rec.to_json() == out.strip()
        assert RunRecord.from_json(rec.to_json()) == rec


def test_mc_determinism_across_workers(monkeypatch):
    outs = set()
    for w in ("1", "2", "4"):
        monkeypatch.setenv("SEQCHI2_WORKERS", w)
        outs.add(call("mc", "--mode", "pearson", "--reps", "150000", "--seed", "8")[1])
    assert len(outs) == 1
    assert RunRecord.from_json(outs.pop()).seed == 8


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "seqchi2", "infeld", "--nu", "0", "--x", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "infeld"
