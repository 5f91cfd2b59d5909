"""
YAMLレンダラー
"""
import logging
from typing import Dict

import yaml

from ..i18n import labels
from ..models import Report, RunConfig
from .base import to_document

logger = logging.getLogger(__name__)


class YamlRenderer:
    """YAMLレンダラー"""

    def __init__(self, settings: RunConfig):
        self.settings = settings

    def render(self, report: Report) -> Dict[str, str]:
        """YAML形式でレンダリング"""
        meta_info = {
            'kind': report.kind,
            'title': labels.title(report.kind),
            'unit': self.settings.unit.value,
        }
        data = {
            'meta': meta_info,
            'parameters': to_document(report.parameters),
            **to_document(report.document),
        }
        if report.warnings:
            data['warnings'] = list(report.warnings)
        content = yaml.dump(data, default_flow_style=False, allow_unicode=True, sort_keys=False, indent=2)
        return {f"{report.kind}.yaml": content}
