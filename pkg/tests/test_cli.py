"""
コマンドラインのテスト
"""
import csv
import io
import json
import math

import pytest

from app.causal_ceo.cli import EXIT_ERROR, EXIT_OK, main

COPY_PMF = """\
(X,1,0,2) (Y,1,1,2) (U,1,1,2) (Xhat,1,0,2)
0,0,0,0;0.5
1,1,1,1;0.5
"""


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def _csv(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestCurve:
    def test_single_point(self, workdir, capsys):
        code, out = _run(capsys, "curve", "--d", "0.5", "--sigma-w2", "1,1")
        assert code == EXIT_OK
        rows = _csv(out)
        assert len(rows) == 1
        assert float(rows[0]["R_ceo"]) == pytest.approx(1.5 * math.log(2.0), abs=1e-9)
        assert rows[0]["unit"] == "nats"
        assert (workdir / "logs" / "app.log").exists()

    def test_bits(self, workdir, capsys):
        _, out = _run(capsys, "curve", "--d", "0.5", "--bits")
        row = _csv(out)[0]
        assert float(row["R_ceo"]) == pytest.approx(1.5, abs=1e-9)
        assert row["unit"] == "bits"

    def test_grid_is_clamped_into_window(self, workdir, capsys):
        code, out = _run(capsys, "curve", "--d-grid", "0.1:1.5:5")
        assert code == EXIT_OK
        rows = _csv(out)
        statuses = [r["status"] for r in rows]
        assert statuses.count("clamped") == 3
        assert all(s in ("ok", "clamped") for s in statuses)

    def test_both_modes(self, workdir, capsys):
        _, out = _run(capsys, "curve", "--a", "0.5", "--d-grid", "0.4:1.0:3", "--mode", "both")
        modes = [r["mode"] for r in _csv(out)]
        assert modes.count("riccati") == 3
        assert modes.count("fusion") == 3

    def test_output_file_and_markdown(self, workdir, capsys):
        code, out = _run(capsys, "curve", "--d", "0.5", "--format", "markdown", "--out", "out/curve.md")
        assert code == EXIT_OK
        assert out == ""
        assert (workdir / "out" / "curve.md").read_text(encoding="utf-8").startswith("# レート歪み曲線")

    def test_config_file_is_overridden_by_arguments(self, workdir, capsys):
        (workdir / "run.json").write_text(json.dumps({"sigma_w2": [1.0, 1.0], "d": 0.9}), encoding="utf-8")
        _, out = _run(capsys, "curve", "--config", "run.json", "--d", "0.5")
        assert float(_csv(out)[0]["d"]) == 0.5


class TestAllocate:
    def test_rows_per_scheme_and_channel(self, workdir, capsys):
        code, out = _run(capsys, "allocate", "--d", "0.5")
        assert code == EXIT_OK
        rows = _csv(out)
        assert [(r["scheme"], r["channel"]) for r in rows] == [
            ("ceo", "1"), ("ceo", "2"), ("waterfilling", "1"), ("waterfilling", "2"),
        ]
        assert float(rows[0]["sigma_z2"]) == pytest.approx(0.25, abs=1e-8)
        assert float(rows[0]["rho_k"]) == pytest.approx(0.125, abs=1e-8)

    def test_infeasible_target_is_an_error(self, workdir, capsys):
        code, out = _run(capsys, "allocate", "--d", "0.2")
        assert code == EXIT_ERROR
        response = json.loads(out)
        assert response["error"] == "InfeasibleError"
        assert response["detail"]

    def test_bad_grid_is_an_error(self, workdir, capsys):
        code, out = _run(capsys, "curve", "--d-grid", "1:2")
        assert code == EXIT_ERROR
        assert json.loads(out)["error"] == "ModelError"


class TestProfiles:
    def test_saved_profile_is_reused(self, workdir, capsys):
        code, _ = _run(capsys, "curve", "--d", "0.5", "--sigma-w2", "1,1", "--bits", "--save-profile", "unit-pair")
        assert code == EXIT_OK
        saved = json.loads((workdir / "config" / "unit-pair.json").read_text(encoding="utf-8"))
        assert saved["sigma_w2"] == [1.0, 1.0]
        assert "subcommand" not in saved

        code, out = _run(capsys, "curve", "--profile", "unit-pair")
        assert code == EXIT_OK
        row = _csv(out)[0]
        assert float(row["d"]) == pytest.approx(0.5)
        assert float(row["R_ceo"]) == pytest.approx(1.5, abs=1e-9)

    def test_flags_override_profile(self, workdir, capsys):
        _run(capsys, "allocate", "--d", "0.5", "--save-profile", "base")
        _, out = _run(capsys, "curve", "--profile", "base", "--d", "0.8")
        assert float(_csv(out)[0]["d"]) == pytest.approx(0.8)

    def test_unknown_profile_is_an_error(self, workdir, capsys):
        _run(capsys, "allocate", "--d", "0.5", "--save-profile", "known")
        code, out = _run(capsys, "curve", "--profile", "missing")
        assert code == EXIT_ERROR
        response = json.loads(out)
        assert response["error"] == "ModelError"
        assert "known" in response["detail"]


class TestSimulate:
    def test_repeatable_json(self, workdir, capsys):
        argv = ["simulate", "--d", "0.5", "--horizon", "300", "--trials", "2", "--seed", "5", "--format", "json"]
        first_code, first = _run(capsys, *argv)
        second_code, second = _run(capsys, *argv)
        assert first == second
        assert first_code == second_code
        report = json.loads(first)["report"]
        assert report["achieved_mse_exact"] == pytest.approx(0.5, abs=1e-9)
        assert report["samples"] == 600

    def test_trace_file(self, workdir, capsys):
        _run(capsys, "simulate", "--d", "0.5", "--horizon", "20", "--trials", "1", "--trace", "trace.csv")
        rows = _csv((workdir / "trace.csv").read_text(encoding="utf-8"))
        assert len(rows) == 20
        assert rows[0]["step"] == "1"


class TestBtEval:
    def test_copy_toy(self, workdir, capsys):
        (workdir / "copy.pmf").write_text(COPY_PMF, encoding="utf-8")
        code, out = _run(capsys, "bt-eval", "--spec", "copy.pmf", "--format", "json")
        assert code == EXIT_OK
        data = json.loads(out)
        assert data["bound"]["gamma"] == pytest.approx(0.75)
        assert data["bound"]["sharp_success"] == pytest.approx(0.25)
        assert data["rates"]["rates"] == pytest.approx([math.log(2.0)])

    def test_missing_spec_file(self, workdir, capsys):
        code, out = _run(capsys, "bt-eval", "--spec", "nothing.pmf")
        assert code == EXIT_ERROR
        assert json.loads(out)["error"] == "SpecParseError"


class TestSelftest:
    def test_single_suite(self, workdir, capsys):
        code, out = _run(capsys, "selftest", "--suite", "remote-forms")
        assert code == EXIT_OK
        rows = _csv(out)
        assert rows[0]["suite"] == "remote-forms"
        assert rows[0]["failed"] == "0"
