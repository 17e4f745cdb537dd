# menu.py - 菜单功能模块

from typing import Dict

from core import module_loader
from core.output_processor import Reply

GLOBAL_OPTIONS = "global options: --output <path>  --threads <n>  --config <path>"


def get_info() -> Dict[str, str]:
    return {
        "keyword": "menu",
        "description": "list every command with its usage",
        "usage": "menu",
    }


def usage_text(keyword: str) -> str:
    """
    单个命令的说明和用法，用于 --help 和参数错误
    """
    info = module_loader.get_module_info().get(keyword, {})
    description = info.get('description', 'no description')
    usage = info.get('usage', keyword)
    lines = [f"{keyword}: {description}", f"usage: {usage}"]
    if info.get('example'):
        lines.append(f"example: {info['example']}")
    return "\n".join(lines) + "\n"


def menu_text() -> str:
    lines = ["commands:"]
    for keyword, info in sorted(module_loader.get_module_info().items()):
        lines.append(f"  {keyword:<10} {info['description']}")
        lines.append(f"  {'':<10} {info.get('usage', keyword)}")
    lines.append("")
    lines.append(GLOBAL_OPTIONS)
    lines.append("use <command> --help for the usage of one command")
    return "\n".join(lines) + "\n"


def execute(request_dict: Dict) -> Reply:
    return Reply(menu_text())
