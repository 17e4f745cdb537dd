# main.py - 命令行入口：解析全局参数，按关键词分发到 func/ 中的命令模块

from __future__ import annotations

import logging
import os
import sys
from typing import List, Optional

# 添加项目根目录到Python路径
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from core import menu, module_loader, settings  # noqa: E402
from core.arguments import CommandParser, positive_int  # noqa: E402
from core.output_processor import OutputProcessor, Reply  # noqa: E402
from engine.errors import QuantumGraphError, UsageError  # noqa: E402

logger = logging.getLogger("quantumgraphbox")


def _global_parser() -> CommandParser:
    parser = CommandParser("quantumgraphbox")
    parser.add_argument("--output")
    parser.add_argument("--threads", type=positive_int)
    parser.add_argument("--config")
    return parser


def _configure_logging() -> None:
    level = str(settings.get("log_level", "WARNING")).upper()
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def _fail(message: str, exit_code: int, usage: Optional[str] = None) -> int:
    sys.stderr.write(f"error: {message}\n")
    if usage:
        sys.stderr.write(usage)
    return exit_code


def run(argv: Optional[List[str]] = None) -> int:
    """
    执行一条命令并返回退出码：0 成功，1 参数或输入错误，2 数值检验失败
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        global_args, rest = _global_parser().parse_known_args(argv)
        settings.reload(global_args.config)
    except QuantumGraphError as e:
        return _fail(str(e), e.exit_code)
    _configure_logging()

    if not rest:
        return _fail("no command given", 1, menu.menu_text())
    keyword, args = rest[0], rest[1:]
    if keyword in ("--help", "-h"):
        OutputProcessor.emit(menu.menu_text())
        return 0

    module_tuple = module_loader.find_module_by_keyword(keyword)
    if module_tuple is None:
        return _fail(f"unknown command '{keyword}'", 1, menu.menu_text())

    # 检查是否包含--help参数
    if '--help' in args or '-h' in args:
        OutputProcessor.emit(menu.usage_text(keyword))
        return 0

    module_file, _ = module_tuple
    module = module_loader.load_module(module_file)
    if module is None or not hasattr(module, 'execute'):
        return _fail(f"command module '{keyword}' could not be loaded", 1)

    request_dict = {
        'args': args,
        'args_text': " ".join(args),
        'threads': global_args.threads or settings.get("threads", 1),
        'output': global_args.output,
    }
    try:
        result = module.execute(request_dict)
        reply = result if isinstance(result, Reply) else Reply(str(result))
        OutputProcessor.emit(reply.text, global_args.output)
    except UsageError as e:
        return _fail(str(e), e.exit_code, menu.usage_text(keyword))
    except QuantumGraphError as e:
        logger.debug("%s failed", keyword, exc_info=True)
        return _fail(f"{type(e).__name__}: {e}", e.exit_code)
    except Exception as e:
        logger.exception("unexpected failure in '%s'", keyword)
        return _fail(f"unexpected failure: {e}", 1)
    return reply.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
