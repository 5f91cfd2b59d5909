"""
レンダラーパッケージ
"""
from ..models import OutputFormat, RunConfig
from .csv_renderer import CsvRenderer
from .json_renderer import JsonRenderer
from .md_renderer import MarkdownRenderer
from .yaml_renderer import YamlRenderer

__all__ = ['CsvRenderer', 'JsonRenderer', 'MarkdownRenderer', 'YamlRenderer', 'get_renderer']


def get_renderer(settings: RunConfig):
    """出力形式に応じたレンダラーを返す"""
    renderers = {
        OutputFormat.CSV: CsvRenderer,
        OutputFormat.JSON: JsonRenderer,
        OutputFormat.YAML: YamlRenderer,
        OutputFormat.MARKDOWN: MarkdownRenderer,
    }
    return renderers[settings.format](settings)
