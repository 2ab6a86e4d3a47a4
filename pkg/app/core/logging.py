"""实验室的日志配置。

structlog 渲染到标准库 logging：控制台日志写到stderr（stdout留给命令行摘要），
开启 LOG_TO_FILE 时另写按日期滚动的JSONL文件。每次命令运行期间，
run_log 把同样的记录追加到结果目录下的 run.log.jsonl。

命令、种子、试验编号与SNR通过 scoped_context 绑定，线程池任务用
contextvars.copy_context() 继承。
"""

import json
import logging
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime
from pathlib import Path
from typing import (
    Any,
    Iterator,
)

import structlog

from app.core.config import (
    Environment,
    settings,
)

RUN_LOG_NAME = "run.log.jsonl"

_run_context: ContextVar[dict[str, Any]] = ContextVar("run_context", default={})


@contextmanager
def scoped_context(**kwargs: Any) -> Iterator[None]:
    """在with块内给日志追加上下文字段，退出时恢复。"""
    token = _run_context.set({**_run_context.get(), **kwargs})
    try:
        yield
    finally:
        _run_context.reset(token)


def add_run_context(logger: Any, method_name: str, event_dict: dict[str, Any]) -> dict[str, Any]:
    """structlog处理器：把运行上下文写入事件字典，显式传入的字段优先。"""
    context = _run_context.get()
    if context:
        return {**context, **event_dict}
    return event_dict


def add_environment(logger: Any, method_name: str, event_dict: dict[str, Any]) -> dict[str, Any]:
    """structlog处理器：标注运行环境。"""
    event_dict["environment"] = settings.ENVIRONMENT.value
    return event_dict


def get_log_file_path() -> Path:
    """当天的日志文件路径。"""
    return settings.LOG_DIR / f"{settings.ENVIRONMENT.value}-{datetime.now().strftime('%Y-%m-%d')}.jsonl"


class JsonlFileHandler(logging.Handler):
    """把日志记录逐行追加为JSON的处理器。"""

    def __init__(self, file_path: Path):
        """初始化处理器。

        Args:
            file_path: 日志文件路径，父目录不存在时创建
        """
        super().__init__()
        self.file_path = Path(file_path)
        self.file_path.parent.mkdir(parents=True, exist_ok=True)

    def emit(self, record: logging.LogRecord) -> None:
        """写入一条记录。"""
        try:
            entry = {
                "timestamp": datetime.fromtimestamp(record.created).isoformat(),
                "level": record.levelname,
                "message": record.getMessage(),
                "module": record.module,
                "thread": record.threadName,
                **_run_context.get(),
            }
            with open(self.file_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry, ensure_ascii=False, default=str) + "\n")
        except Exception:
            self.handleError(record)


@contextmanager
def run_log(out_dir: Path) -> Iterator[Path | None]:
    """命令运行期间把日志同时写入结果目录。

    Args:
        out_dir: 结果目录

    Yields:
        run.log.jsonl 的路径；RUN_LOG_ENABLED 关闭时为None
    """
    if not settings.RUN_LOG_ENABLED:
        yield None
        return
    path = Path(out_dir) / RUN_LOG_NAME
    handler = JsonlFileHandler(path)
    handler.setLevel(logging.getLogger().level)
    root = logging.getLogger()
    root.addHandler(handler)
    try:
        yield path
    finally:
        root.removeHandler(handler)
        handler.close()


def get_structlog_processors(include_callsite: bool) -> list[Any]:
    """构造共享的structlog处理器链。"""
    processors = [
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        add_run_context,
    ]
    if include_callsite:
        processors.append(
            structlog.processors.CallsiteParameterAdder(
                {
                    structlog.processors.CallsiteParameter.FUNC_NAME,
                    structlog.processors.CallsiteParameter.LINENO,
                    structlog.processors.CallsiteParameter.MODULE,
                }
            )
        )
    processors.append(add_environment)
    return processors


def setup_logging() -> None:
    """根据环境配置logging与structlog。"""
    log_level = logging.getLevelName(settings.LOG_LEVEL.upper())
    if not isinstance(log_level, int):
        log_level = logging.INFO

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.LOG_TO_FILE:
        handlers.append(JsonlFileHandler(get_log_file_path()))
    for handler in handlers:
        handler.setLevel(log_level)
    logging.basicConfig(format="%(message)s", level=log_level, handlers=handlers)

    if settings.LOG_FORMAT == "console":
        renderer = structlog.dev.ConsoleRenderer()
    else:
        renderer = structlog.processors.JSONRenderer()
    structlog.configure(
        processors=[
            *get_structlog_processors(settings.ENVIRONMENT in (Environment.DEVELOPMENT, Environment.TEST)),
            renderer,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


setup_logging()

logger = structlog.get_logger()
logger.debug(
    "logging_initialized",
    environment=settings.ENVIRONMENT.value,
    log_level=settings.LOG_LEVEL,
    log_format=settings.LOG_FORMAT,
)
