# arguments.py - 命令参数解析

import argparse
import math
from typing import List

from engine.errors import UsageError


class CommandParser(argparse.ArgumentParser):
    """
    出错时抛出UsageError而不是退出进程，--help由分发器统一处理
    """

    def __init__(self, keyword: str, **kwargs):
        kwargs.setdefault('add_help', False)
        kwargs.setdefault('allow_abbrev', False)
        super().__init__(prog=keyword, **kwargs)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")

    def exit(self, status=0, message=None):
        raise UsageError(message or f"{self.prog}: invalid arguments")


def positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def alpha_value(text: str) -> float:
    """实数或inf（Dirichlet）"""
    token = text.strip().lower()
    if token in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        value = float(token)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is neither a real number nor inf") from None
    if math.isnan(value) or value == -math.inf:
        raise argparse.ArgumentTypeError(f"'{text}' is not an admissible coefficient")
    return value


def alpha_list(text: str) -> List[float]:
    values = [alpha_value(token) for token in text.split(',') if token.strip()]
    if len(values) < 2:
        raise argparse.ArgumentTypeError("expected at least two comma-separated coefficients")
    return values
