"""
CSVレンダラー
"""
import csv
import io
import logging
from typing import Any, Dict, List

from ..models import Report, RunConfig
from .base import columns_of, flatten_row, format_cell

logger = logging.getLogger(__name__)


class CsvRenderer:
    """CSVレンダラー"""

    def __init__(self, settings: RunConfig):
        self.settings = settings

    def render(self, report: Report) -> Dict[str, str]:
        """CSV形式でレンダリング"""
        rows = [flatten_row(r) for r in report.rows]
        unit = self.settings.unit.value
        for row in rows:
            row.setdefault("status", "ok")
            row.setdefault("unit", unit)
        logger.debug(f"CsvRenderer.render: {report.kind}, {len(rows)} rows")
        return {f"{report.kind}.csv": self._generate_csv_content(rows)}

    def render_trace(self, trace: List[Dict[str, Any]]) -> Dict[str, str]:
        """シミュレーションのステップ毎トレース"""
        return {"trace.csv": self._generate_csv_content(trace)}

    def _generate_csv_content(self, rows: List[Dict[str, Any]]) -> str:
        """CSVコンテンツを生成（ヘッダー行は常に出力）"""
        output = io.StringIO()
        writer = csv.writer(output, lineterminator='\n')
        headers = columns_of(rows)
        writer.writerow(headers)
        for row in rows:
            writer.writerow([format_cell(row.get(h)) for h in headers])
        content = output.getvalue()
        output.close()
        return content
