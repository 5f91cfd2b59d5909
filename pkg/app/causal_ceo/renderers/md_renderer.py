"""
Markdownレンダラー
"""
import logging
from typing import Any, Dict, List

from ..i18n import labels
from ..models import Report, RunConfig
from .base import columns_of, flatten_row, format_cell

logger = logging.getLogger(__name__)


class MarkdownRenderer:
    """Markdownレンダラー"""

    def __init__(self, settings: RunConfig):
        self.settings = settings

    def render(self, report: Report) -> Dict[str, str]:
        """Markdown形式でレンダリング"""
        lines: List[str] = [f"# {labels.title(report.kind)}", ""]

        if report.parameters:
            lines += [f"## {labels.heading('parameters')}", ""]
            lines += self._table([{
                labels.heading('name'): k,
                labels.heading('value'): format_cell(v) if not isinstance(v, list)
                else ", ".join(format_cell(x) for x in v),
            } for k, v in report.parameters.items()], localize=False)
            lines.append("")

        rows = [flatten_row(r) for r in report.rows]
        if rows:
            lines += [f"## {labels.heading('results')}", ""]
            lines += [f"{labels.heading('unit')}: {self.settings.unit.value}", ""]
            lines += self._table(rows)
            lines.append("")

        if report.warnings:
            lines += [f"## {labels.heading('warnings')}", ""]
            lines += [f"- {w}" for w in report.warnings]
            lines.append("")

        return {f"{report.kind}.md": "\n".join(lines)}

    def _table(self, rows: List[Dict[str, Any]], localize: bool = True) -> List[str]:
        columns = columns_of(rows)
        if localize:
            header = [labels.column(c) for c in columns]
        else:
            header = columns
        out = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
        for row in rows:
            cells = [format_cell(row.get(c)) if not isinstance(row.get(c), str) else row[c] for c in columns]
            out.append("| " + " | ".join(cells) + " |")
        return out
