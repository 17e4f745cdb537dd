# settings.py - 运行参数管理
#
# 默认值来自 manifest.yaml 的 spec.config，config/settings.yaml 中的同名键覆盖默认值。

import logging
import os
from typing import Any, Dict, Optional

import yaml

from engine.errors import IoError, UsageError

logger = logging.getLogger(__name__)

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def to_bool(value: Any) -> bool:
    """
    布尔参数转换，字符串按 true/false、yes/no、on/off、1/0 解析
    """
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ValueError(f"not a boolean: {value!r}")


_CASTS = {
    "integer": int,
    "float": float,
    "string": str,
    "boolean": to_bool,
}


class Settings:
    """
    参数管理类，读取manifest默认值并叠加YAML覆盖文件
    """

    def __init__(self, config_file: Optional[str] = None):
        self.base_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        self.config_dir = os.path.join(self.base_dir, 'config')
        self.manifest_file = os.path.join(self.base_dir, 'manifest.yaml')
        self.default_config_file = os.path.join(self.config_dir, 'settings.yaml')
        self.config_file = config_file or self.default_config_file

        # 默认覆盖文件不存在时创建空文件
        if self.config_file == self.default_config_file and not os.path.exists(self.config_file):
            self._create_empty_overrides()

        self._types: Dict[str, str] = {}
        self._values = self._load_defaults()
        self._values.update(self._load_overrides())

    def _create_empty_overrides(self) -> None:
        try:
            os.makedirs(self.config_dir, exist_ok=True)
            with open(self.config_file, 'w', encoding='utf-8') as f:
                yaml.safe_dump({}, f, allow_unicode=True, default_flow_style=False)
        except OSError as e:
            logger.warning("创建配置文件失败: %s", e)

    def _load_defaults(self) -> Dict[str, Any]:
        """
        从manifest的spec.config读取参数默认值
        """
        try:
            with open(self.manifest_file, 'r', encoding='utf-8') as f:
                manifest = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise IoError(f"cannot read manifest '{self.manifest_file}': {e}") from e

        defaults = {}
        for entry in manifest.get('spec', {}).get('config', []):
            name = entry['name']
            self._types[name] = entry.get('type', 'string')
            defaults[name] = self._cast(name, entry.get('default'))
        return defaults

    def _load_overrides(self) -> Dict[str, Any]:
        """
        读取YAML覆盖文件，未知键只记录警告
        """
        if not os.path.exists(self.config_file):
            if self.config_file != self.default_config_file:
                raise IoError(f"config file '{self.config_file}' does not exist")
            return {}
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise IoError(f"cannot read config file '{self.config_file}': {e}") from e
        if not isinstance(data, dict):
            raise UsageError(f"config file '{self.config_file}' must hold a mapping of option names")

        overrides = {}
        for name, value in data.items():
            if name not in self._types:
                logger.warning("忽略未知配置项 '%s'", name)
                continue
            overrides[name] = self._cast(name, value)
        return overrides

    def _cast(self, name: str, value: Any) -> Any:
        cast = _CASTS.get(self._types.get(name, 'string'), str)
        try:
            return cast(value)
        except (TypeError, ValueError):
            raise UsageError(f"option '{name}' expects a {self._types[name]}, got {value!r}") from None

    def get(self, name: str, default: Any = None) -> Any:
        return self._values.get(name, default)

    def as_dict(self) -> Dict[str, Any]:
        return dict(self._values)


# 全局实例，首次使用时创建
_settings: Optional[Settings] = None


def _instance() -> Settings:
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


# 便捷函数
def get(name: str, default: Any = None) -> Any:
    return _instance().get(name, default)


def as_dict() -> Dict[str, Any]:
    return _instance().as_dict()


def reload(config_file: Optional[str] = None) -> Settings:
    global _settings
    _settings = Settings(config_file)
    return _settings
