# module_loader.py - 命令模块加载器

import importlib.util
import logging
import os
import sys
from types import ModuleType
from typing import Dict, Iterator, List, Optional, Tuple

logger = logging.getLogger(__name__)

# 不作为命令加载的基础设施文件
EXCLUDED_FILES = {"__init__.py", "module_loader.py", "settings.py", "output_processor.py", "arguments.py"}

_loaded: Dict[str, ModuleType] = {}


def get_base_dir() -> str:
    """
    获取项目根目录
    """
    return os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module(module_file: str, module_name: Optional[str] = None) -> Optional[ModuleType]:
    """
    从文件动态加载模块，同一文件只加载一次
    """
    module_file = os.path.abspath(module_file)
    if module_file in _loaded:
        return _loaded[module_file]
    package = os.path.basename(os.path.dirname(module_file))
    name = module_name or os.path.splitext(os.path.basename(module_file))[0]
    qualified = f"{package}.{name}"
    try:
        spec = importlib.util.spec_from_file_location(qualified, module_file)
        module = importlib.util.module_from_spec(spec)
        sys.modules[qualified] = module
        spec.loader.exec_module(module)
    except Exception as e:
        sys.modules.pop(qualified, None)
        logger.warning("加载模块 %s 失败: %s", module_file, e)
        return None
    _loaded[module_file] = module
    return module


def _iter_modules() -> Iterator[Tuple[str, str, ModuleType]]:
    """
    依次产出 (文件路径, 类型core|func, 模块)，只包含实现了get_info()的模块
    """
    base_dir = get_base_dir()
    for module_type in ("core", "func"):
        directory = os.path.join(base_dir, module_type)
        if not os.path.isdir(directory):
            continue
        for file in sorted(os.listdir(directory)):
            if not file.endswith(".py") or file in EXCLUDED_FILES:
                continue
            path = os.path.join(directory, file)
            module = load_module(path)
            if module is not None and callable(getattr(module, 'get_info', None)):
                yield path, module_type, module


def get_module_keyword(module) -> Optional[str]:
    """
    通过get_info()返回的字典获取关键词
    """
    try:
        info = module.get_info()
    except Exception as e:
        logger.warning("调用get_info()出错: %s", e)
        return None
    if isinstance(info, dict):
        return info.get('keyword')
    return None


def get_module_description(module) -> str:
    try:
        info = module.get_info()
    except Exception as e:
        logger.warning("调用get_info()出错: %s", e)
        return "no description"
    if isinstance(info, dict):
        return info.get('description', "no description")
    return "no description"


def get_available_keywords() -> List[str]:
    """
    所有可用命令关键词，按字母顺序
    """
    keywords = [get_module_keyword(module) for _, _, module in _iter_modules()]
    return sorted(keyword for keyword in keywords if keyword)


def get_module_info() -> Dict[str, Dict[str, str]]:
    """
    返回格式：{keyword: {"description": ..., "usage": ..., "type": "core|func"}}
    """
    module_info = {}
    for path, module_type, module in _iter_modules():
        info = dict(module.get_info())
        keyword = info.pop('keyword', None) or os.path.splitext(os.path.basename(path))[0]
        module_info[keyword] = {
            "description": info.pop('description', "no description"),
            "type": module_type,
            **info,
        }
    return module_info


def find_module_by_keyword(keyword: str) -> Optional[Tuple[str, str]]:
    """
    根据关键词查找模块文件，返回 (文件路径, 类型)
    """
    for path, module_type, module in _iter_modules():
        if get_module_keyword(module) == keyword:
            return path, module_type
    return None
