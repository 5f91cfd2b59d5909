"""
レポート見出しの多言語対応

config/strings.json は言語毎に title（レポート種別）、heading（節見出し）、
column（表の列名）の三つの表を持つ。見つからない項目は ja、最後にキーそのもの。
"""
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

DEFAULT_LANGUAGE = "ja"

# flatten_row が展開したチャネル毎の列（d_k_1 など）
_INDEXED_COLUMN = re.compile(r"^(?P<base>.+)_(?P<index>\d+)$")


class ReportLabels:
    """レポートの見出し・列名の表"""

    def __init__(self, strings_file_path: str = "config/strings.json"):
        self.strings_file_path = Path(strings_file_path)
        self._tables: Dict[str, Dict[str, Dict[str, str]]] = self._load()
        self.language = DEFAULT_LANGUAGE

    def _load(self) -> Dict[str, Any]:
        if not self.strings_file_path.exists():
            logger.warning(f"Strings file not found: {self.strings_file_path}")
            return {}
        try:
            with open(self.strings_file_path, 'r', encoding='utf-8') as f:
                tables = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Failed to load strings file: {e}")
            return {}
        logger.debug(f"Loaded report labels for {sorted(tables)} from {self.strings_file_path}")
        return tables

    def use(self, language: str) -> None:
        """言語を切り替える（未対応なら ja）"""
        if language in self._tables:
            self.language = language
        else:
            logger.warning(f"Language not supported: {language}, falling back to {DEFAULT_LANGUAGE}")
            self.language = DEFAULT_LANGUAGE

    def _find(self, table: str, key: str) -> Optional[str]:
        for language in (self.language, DEFAULT_LANGUAGE):
            value = self._tables.get(language, {}).get(table, {}).get(key)
            if isinstance(value, str):
                return value
        return None

    def title(self, kind: str) -> str:
        return self._find("title", kind) or kind

    def heading(self, name: str) -> str:
        return self._find("heading", name) or name

    def column(self, name: str) -> str:
        """列名。チャネル番号付きの列は元の列名に番号を添える"""
        label = self._find("column", name)
        if label is not None:
            return label
        match = _INDEXED_COLUMN.match(name)
        if match:
            base = self._find("column", match["base"])
            if base is not None:
                return f"{base} {match['index']}"
        return name


# グローバルインスタンス
labels = ReportLabels()


def set_language(language: str) -> None:
    labels.use(language)
