"""
レンダラー共通の変換
"""
import math
from enum import Enum
from typing import Any, Dict, List

from pydantic import BaseModel


def to_document(value: Any) -> Any:
    """モデル・列挙型・タプルをJSON/YAMLで扱える素の値に変換（inf/nan は float のまま）"""
    if isinstance(value, BaseModel):
        return to_document(value.model_dump(by_alias=True))
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_document(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_document(v) for v in value]
    if hasattr(value, "item") and callable(value.item):
        # numpy のスカラー
        return value.item()
    return value


def flatten_row(row: Dict[str, Any]) -> Dict[str, Any]:
    """リスト値を name_1, name_2, ... の列に展開"""
    flat: Dict[str, Any] = {}
    for key, value in row.items():
        value = to_document(value)
        if isinstance(value, list):
            for j, item in enumerate(value, start=1):
                flat[f"{key}_{j}"] = item
        else:
            flat[key] = value
    return flat


def columns_of(rows: List[Dict[str, Any]]) -> List[str]:
    """行に現れる列名を出現順で"""
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return columns


def format_cell(value: Any) -> str:
    """数値は有効数字15桁、inf/nan はそのまま、真偽値は true/false"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.15g}"
    return str(value)
