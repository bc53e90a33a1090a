"""
memoctrl 记忆型零能控性工具库 - 日志模块

求解器、秩判据和 HUM 迭代都通过 get_logger() 取得 logger。
库本身不配置任何输出格式：命令行前端在启动时用 structlog 配置好
logger 后调用 set_logger() 注入，单独使用库时则回落到标准 logging。

消息统一使用 f-string 拼好后再传入，这样标准 logging.Logger 与
structlog 的 BoundLogger 都能直接接收。

Example:
    >>> import structlog
    >>> from memoctrl.logger import set_logger, timed
    >>> set_logger(structlog.get_logger("experiment"))
    >>> with timed("forward solve"):
    ...     pass
"""

import logging
import time
from contextlib import contextmanager
from typing import Any, Iterator, Protocol, runtime_checkable


@runtime_checkable
class Logger(Protocol):
    """
    Logger 协议

    标准 logging.Logger 与 structlog 的 logger 都满足此协议。
    """

    def debug(self, msg: Any, *args: Any, **kwargs: Any) -> Any: ...
    def info(self, msg: Any, *args: Any, **kwargs: Any) -> Any: ...
    def warning(self, msg: Any, *args: Any, **kwargs: Any) -> Any: ...
    def error(self, msg: Any, *args: Any, **kwargs: Any) -> Any: ...
    def exception(self, msg: Any, *args: Any, **kwargs: Any) -> Any: ...


_logger: Logger | None = None


def set_logger(logger: Logger) -> None:
    """
    注入全局 logger

    Args:
        logger: 任何实现了 Logger 协议的对象
    """
    global _logger
    _logger = logger


def reset_logger() -> None:
    """清除注入的 logger，恢复为标准 logging（测试用）"""
    global _logger
    _logger = None


def get_logger(name: str = "memoctrl") -> Logger:
    """
    获取 logger

    优先返回 set_logger() 注入的 logger，否则返回同名的标准 logging.Logger。

    Args:
        name: 回落到标准 logging 时使用的名称

    Returns:
        Logger 实例
    """
    if _logger is not None:
        return _logger
    return logging.getLogger(name)


@contextmanager
def timed(label: str) -> Iterator[None]:
    """
    以 debug 级别记录代码块耗时

    Args:
        label: 日志中显示的任务名称
    """
    start = time.perf_counter()
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        get_logger().debug(f"{label} finished in {elapsed:.3f}s")


__all__ = [
    "Logger",
    "set_logger",
    "reset_logger",
    "get_logger",
    "timed",
]
