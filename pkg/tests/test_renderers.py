"""
レンダラーのテスト
"""
import json
import math

import pytest
import yaml

from app.causal_ceo import i18n
from app.causal_ceo.models import OutputFormat, RateUnit, Report, RunConfig
from app.causal_ceo.renderers import CsvRenderer, JsonRenderer, MarkdownRenderer, YamlRenderer, get_renderer
from app.causal_ceo.renderers.base import flatten_row, format_cell


@pytest.fixture
def report():
    return Report(
        kind="curve",
        parameters={"a": 0.0, "sigma_w2": [1.0, 1.0]},
        rows=[
            {"d": 0.5, "R_ceo": 1.0397207708399179, "d_k": [2.0 / 3.0, 2.0 / 3.0]},
            {"d": 0.2, "status": "infeasible", "detail": "below joint MMSE"},
        ],
        document={"records": [{"d": 0.5, "R_ceo": 1.0397207708399179}]},
        warnings=["clamped 1 point"],
    )


@pytest.fixture
def english():
    i18n.set_language("en")
    yield
    i18n.set_language("ja")


class TestCells:
    def test_format_cell(self):
        assert format_cell(None) == ""
        assert format_cell(True) == "true"
        assert format_cell(3) == "3"
        assert format_cell(1.0 / 3.0) == "0.333333333333333"
        assert format_cell(math.inf) == "inf"
        assert format_cell(math.nan) == "nan"

    def test_flatten_row(self):
        assert flatten_row({"d_k": [0.1, 0.2], "K": 2}) == {"d_k_1": 0.1, "d_k_2": 0.2, "K": 2}


class TestCsvRenderer:
    def test_columns_and_defaults(self, report):
        content = CsvRenderer(RunConfig())
        lines = content.render(report)["curve.csv"].splitlines()
        assert lines[0] == "d,R_ceo,d_k_1,d_k_2,status,unit,detail"
        assert lines[1] == "0.5,1.03972077083992,0.666666666666667,0.666666666666667,ok,nats,"
        assert lines[2] == "0.2,,,,infeasible,nats,below joint MMSE"

    def test_bits_unit_column(self, report):
        content = CsvRenderer(RunConfig(unit=RateUnit.BITS)).render(report)["curve.csv"]
        assert ",bits," in content

    def test_deterministic(self, report):
        renderer = CsvRenderer(RunConfig())
        assert renderer.render(report) == renderer.render(report)

    def test_trace(self):
        content = CsvRenderer(RunConfig()).render_trace([{"step": 1, "x": 0.5}, {"step": 2, "x": math.nan}])
        assert content["trace.csv"] == "step,x\n1,0.5\n2,nan\n"


class TestStructuredRenderers:
    def test_json(self, report):
        text = JsonRenderer(RunConfig()).render(report)["curve.json"]
        data = json.loads(text)
        assert list(data) == ["kind", "unit", "parameters", "records", "warnings"]
        assert data["records"][0]["R_ceo"] == pytest.approx(1.0397207708399179)
        assert data["warnings"] == ["clamped 1 point"]

    def test_json_keeps_infinity(self):
        text = JsonRenderer(RunConfig()).render(Report(kind="allocate", document={"sigma_z2": [math.inf]}))
        assert "Infinity" in text["allocate.json"]

    def test_yaml(self, report):
        data = yaml.safe_load(YamlRenderer(RunConfig()).render(report)["curve.yaml"])
        assert data["meta"]["kind"] == "curve"
        assert data["meta"]["title"] == "レート歪み曲線"
        assert data["parameters"]["sigma_w2"] == [1.0, 1.0]
        assert data["warnings"] == ["clamped 1 point"]


class TestMarkdownRenderer:
    def test_japanese_headings(self, report):
        text = MarkdownRenderer(RunConfig()).render(report)["curve.md"]
        assert text.startswith("# レート歪み曲線\n")
        assert "## パラメータ" in text
        assert "| 歪み d | CEOレート |" in text
        assert "- clamped 1 point" in text

    def test_english_headings(self, report, english):
        text = MarkdownRenderer(RunConfig(language="en")).render(report)["curve.md"]
        assert text.startswith("# Rate-distortion curve\n")
        assert "## Warnings" in text

    def test_unknown_column_keeps_its_name(self, english):
        text = MarkdownRenderer(RunConfig()).render(Report(kind="bt-eval", rows=[{"gamma": 0.75}]))["bt-eval.md"]
        assert "| gamma |" in text

    def test_channel_columns_carry_their_index(self, report):
        text = MarkdownRenderer(RunConfig()).render(report)["curve.md"]
        assert "| 復号MMSE 1 | 復号MMSE 2 |" in text


class TestReportLabels:
    def test_english_falls_back_to_japanese_entry(self, tmp_path):
        path = tmp_path / "strings.json"
        path.write_text(json.dumps({
            "ja": {"column": {"R_ceo": "CEOレート", "s_k": "因果MMSE"}},
            "en": {"column": {"R_ceo": "CEO rate"}},
        }), encoding="utf-8")
        table = i18n.ReportLabels(str(path))
        table.use("en")
        assert table.column("R_ceo") == "CEO rate"
        assert table.column("s_k_3") == "因果MMSE 3"
        assert table.heading("results") == "results"

    def test_unsupported_language_uses_japanese(self):
        table = i18n.ReportLabels()
        table.use("fr")
        assert table.language == "ja"
        assert table.title("curve") == "レート歪み曲線"

    def test_missing_file_keeps_keys(self, tmp_path):
        table = i18n.ReportLabels(str(tmp_path / "none.json"))
        assert table.title("simulate") == "simulate"
        assert table.column("d_k_1") == "d_k_1"

def test_get_renderer():
    assert isinstance(get_renderer(RunConfig(format=OutputFormat.MARKDOWN)), MarkdownRenderer)
    assert isinstance(get_renderer(RunConfig(format=OutputFormat.YAML)), YamlRenderer)
