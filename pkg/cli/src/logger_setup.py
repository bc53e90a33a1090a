import logging
import sys
import colorama
import structlog

from memoctrl import set_logger

LEVELS = {
    "error": logging.ERROR,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def custom_processor_merge_callsite(logger, method_name, event_dict: dict[str, str]):
    keys = ("module", "filename", "func_name", "lineno")
    if any(event_dict.get(key) is None for key in keys):
        return event_dict

    module, filename, func_name, lineno = (event_dict.pop(key) for key in keys)
    event_dict["merged_callsite"] = f"{module}/{filename}:{func_name}:{lineno}"
    return event_dict


def _plain(style: str, **kwargs) -> structlog.dev.KeyValueColumnFormatter:
    return structlog.dev.KeyValueColumnFormatter(
        key_style=None,
        value_style=style,
        reset_style=colorama.Style.RESET_ALL,
        value_repr=str,
        **kwargs,
    )


def _console_renderer() -> structlog.dev.ConsoleRenderer:
    level_styles = {
        "debug": colorama.Fore.CYAN + colorama.Style.BRIGHT,
        "info": colorama.Fore.GREEN + colorama.Style.BRIGHT,
        "warning": colorama.Fore.YELLOW + colorama.Style.BRIGHT,
        "error": colorama.Fore.RED + colorama.Style.BRIGHT,
        "critical": colorama.Fore.MAGENTA + colorama.Style.BRIGHT,
    }
    return structlog.dev.ConsoleRenderer(
        columns=[
            structlog.dev.Column("timestamp", _plain(colorama.Fore.LIGHTBLACK_EX)),
            structlog.dev.Column(
                "level",
                structlog.dev.LogLevelColumnFormatter(
                    level_styles=level_styles,
                    reset_style=colorama.Style.RESET_ALL,
                    width=8,
                ),
            ),
            structlog.dev.Column("event", _plain(colorama.Fore.WHITE + colorama.Style.NORMAL)),
            structlog.dev.Column(
                "merged_callsite",
                _plain(colorama.Fore.BLUE + colorama.Style.NORMAL, prefix="->", postfix="|"),
            ),
            # Remaining keys such as exit_code or error
            structlog.dev.Column(
                "",
                structlog.dev.KeyValueColumnFormatter(
                    key_style=colorama.Fore.CYAN + colorama.Style.BRIGHT,
                    value_style=colorama.Fore.MAGENTA + colorama.Style.BRIGHT,
                    reset_style=colorama.Style.RESET_ALL,
                    value_repr=str,
                ),
            ),
        ],
        exception_formatter=structlog.dev.RichTracebackFormatter(),
    )


def logger_setup(level: str = "info"):
    """
    配置 structlog 并注入 memoctrl

    诊断信息全部写到标准错误，标准输出只留给错误 JSON 与 schema。

    Args:
        level: error / info / debug
    """
    logger_processors = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.TimeStamper(fmt="iso", utc=False),
        structlog.processors.CallsiteParameterAdder(
            {
                structlog.processors.CallsiteParameter.MODULE,
                structlog.processors.CallsiteParameter.FILENAME,
                structlog.processors.CallsiteParameter.FUNC_NAME,
                structlog.processors.CallsiteParameter.LINENO,
            }
        ),
        custom_processor_merge_callsite,
        structlog.dev.set_exc_info,
    ]

    # Interactive terminal
    if sys.stderr.isatty():
        logger_processors.append(_console_renderer())
    else:
        logger_processors.append(structlog.processors.JSONRenderer())

    structlog.configure(
        processors=logger_processors,
        wrapper_class=structlog.make_filtering_bound_logger(LEVELS[level]),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=True,
    )
    set_logger(structlog.get_logger("memoctrl"))
