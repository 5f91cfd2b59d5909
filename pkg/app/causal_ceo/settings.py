"""
設定管理
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import ValidationError

from .errors import ModelError
from .models import RunConfig

logger = logging.getLogger(__name__)


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class SettingsManager:
    """設定管理クラス"""

    def __init__(self, config_dir: Optional[Path] = None):
        if config_dir is None:
            config_dir = Path("config")
        self.config_dir = Path(config_dir)
        self.default_config_path = self.config_dir / "default.json"

    def _validate(self, data: Dict[str, Any], source: str) -> RunConfig:
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            raise ModelError(f"invalid settings in {source}: {e}") from e

    def _read(self, path: Path) -> Dict[str, Any]:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ModelError(f"cannot read settings file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ModelError(f"settings file {path} must contain a JSON object")
        return data

    def get_default_settings(self) -> RunConfig:
        """デフォルト設定を取得"""
        if self.default_config_path.exists():
            logger.info(f"Loaded default settings from {self.default_config_path}")
            return self._validate(self._read(self.default_config_path), str(self.default_config_path))
        # default.jsonが存在しない場合は組み込みの既定値
        return RunConfig()

    def save_settings(self, settings: RunConfig, profile_name: str = "default") -> Path:
        """設定をプロファイルとして保存（サブコマンドは保存しない）"""
        config_path = self._profile_path(profile_name)
        self.config_dir.mkdir(parents=True, exist_ok=True)
        data = settings.model_dump(mode="json", exclude_none=True, exclude={"subcommand"})
        with open(config_path, 'w', encoding='utf-8') as f:
            json.dump(data, f, ensure_ascii=False, indent=2)
        logger.info(f"Saved profile '{profile_name}' to {config_path}")
        return config_path

    def list_profiles(self) -> List[str]:
        """プロファイル一覧を取得"""
        if not self.config_dir.exists():
            return []
        return sorted(
            p.stem for p in self.config_dir.glob("*.json") if p.name != "strings.json"
        )

    def _profile_path(self, profile_name: str) -> Path:
        if not profile_name or Path(profile_name).name != profile_name or profile_name == "strings":
            raise ModelError(f"invalid profile name '{profile_name}'")
        return self.config_dir / f"{profile_name}.json"

    def _read_profile(self, profile_name: str) -> Dict[str, Any]:
        config_path = self._profile_path(profile_name)
        if not config_path.exists():
            available = ", ".join(self.list_profiles()) or "none"
            raise ModelError(f"unknown profile '{profile_name}' (available: {available})")
        return self._read(config_path)

    def resolve(self, config_file: Optional[Union[str, Path]] = None,
                overrides: Optional[Dict[str, Any]] = None,
                profile: Optional[str] = None) -> RunConfig:
        """
        既定値 < default.json < プロファイル < --config ファイル < コマンドライン引数 の順で重ねる
        """
        data = self.get_default_settings().model_dump(mode="json", exclude_none=True)
        if profile is not None:
            data = _deep_merge(data, self._read_profile(profile))
            logger.info(f"Loaded profile '{profile}'")
        if config_file is not None:
            data = _deep_merge(data, self._read(Path(config_file)))
            logger.info(f"Loaded settings file {config_file}")
        if overrides:
            data = _deep_merge(data, {k: v for k, v in overrides.items() if v is not None})
        return self._validate(data, "command line")


# グローバル設定マネージャー
settings_manager = SettingsManager()
