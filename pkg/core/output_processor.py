# output_processor.py - 结果输出处理

import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from engine.errors import IoError


@dataclass
class Reply:
    """命令返回的文本和退出码"""
    text: str
    exit_code: int = 0


class OutputProcessor:
    @staticmethod
    def format_value(value: Any) -> str:
        """
        浮点数保留12位有效数字，布尔值输出yes/no
        """
        if isinstance(value, bool):
            return "yes" if value else "no"
        if isinstance(value, float):
            if math.isinf(value):
                return "inf" if value > 0 else "-inf"
            text = f"{value:.12g}"
            return "0" if text == "-0" else text
        if value is None:
            return "none"
        return str(value)

    @staticmethod
    def table(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        lines = ["\t".join(header)]
        for row in rows:
            lines.append("\t".join(OutputProcessor.format_value(value) for value in row))
        return "\n".join(lines) + "\n"

    @staticmethod
    def key_values(pairs: Iterable[tuple]) -> str:
        return OutputProcessor.table(("quantity", "value"), pairs)

    @staticmethod
    def join(*tables: str) -> str:
        """多个表格之间以空行分隔"""
        return "\n".join(table for table in tables if table)

    @staticmethod
    def emit(text: str, path: Optional[str] = None) -> None:
        if path is None:
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as e:
            raise IoError(f"cannot write output '{path}': {e}") from e
