"""
JSONレンダラー
"""
import json
import logging
from typing import Dict

from ..models import Report, RunConfig
from .base import to_document

logger = logging.getLogger(__name__)


class JsonRenderer:
    """JSONレンダラー"""

    def __init__(self, settings: RunConfig):
        self.settings = settings

    def render(self, report: Report) -> Dict[str, str]:
        """JSON形式でレンダリング（inf/nan は Infinity/NaN）"""
        document = {
            "kind": report.kind,
            "unit": self.settings.unit.value,
            "parameters": to_document(report.parameters),
            **to_document(report.document),
            "warnings": list(report.warnings),
        }
        return {f"{report.kind}.json": json.dumps(document, indent=2, ensure_ascii=False, sort_keys=False) + "\n"}
