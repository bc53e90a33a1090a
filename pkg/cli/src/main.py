"""
memoctrl-cli 命令行入口

    memoctrl <command> --config <path> [--out-dir <path>]
    memoctrl schema [--out-dir <path>]

退出码: 0 成功（包括判据不成立），2 配置或校验错误，3 数值失败，4 秩判据无结论。
"""

import argparse
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

import structlog
from pydantic import ValidationError
from pydantic_core import to_json

from memoctrl import ConfigurationError, MemoctrlError, NumericalError, __version__
from cli.src.commands import (
    COMMANDS,
    EXIT_INVALID,
    EXIT_NUMERICAL,
    EXIT_OK,
    ErrorReport,
    RunRecord,
)
from cli.src.config import get_app_settings, load_run_config, run_config_schema
from cli.src.logger_setup import logger_setup

description = """
Memory-type null controllability toolkit: forward and adjoint Volterra solves,
rank conditions, HUM control synthesis and moving-window heat equation control.
"""

COMMAND_HELP = {
    "simulate": "solve the uncontrolled system, write trajectory.csv and summary.json",
    "adjoint": "solve the adjoint system, write adjoint.csv and summary.json",
    "check-rank": "evaluate rank conditions, write rank.json",
    "synthesize": "synthesize a memory-type null control, write control.csv and synthesis.json",
    "parabolic": "moving-window heat equation with memory, write system, coverage and synthesis outputs",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memoctrl", description=description)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMAND_HELP.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        sub.add_argument("--out-dir", type=Path, default=Path("."), help="directory for result files")
    schema = subparsers.add_parser("schema", help="print the run configuration JSON schema")
    schema.add_argument("--out-dir", type=Path, default=None, help="also write schema.json here")
    return parser


def report_error(error: Exception, exit_code: int) -> int:
    print(ErrorReport(error=type(error).__name__, detail=str(error)).model_dump_json())
    structlog.get_logger().error("run failed", error=type(error).__name__, exit_code=exit_code)
    return exit_code


def write_schema(out_dir: Optional[Path]) -> int:
    text = to_json(run_config_schema(), indent=2).decode()
    print(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "schema.json").write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_app_settings()
    except ValidationError as e:
        print(ErrorReport(error=type(e).__name__, detail=str(e)).model_dump_json())
        return EXIT_INVALID
    logger_setup(settings.LOG)

    if args.command == "schema":
        return write_schema(args.out_dir)

    started_at = datetime.now().astimezone()
    try:
        config = load_run_config(args.config)
        if config.command != args.command:
            raise ConfigurationError(
                f"config is for command {config.command!r}, invoked as {args.command!r}"
            )
        outcome = COMMANDS[config.command](config, settings, args.config.parent)
    except (ValidationError, OSError) as e:
        return report_error(e, EXIT_INVALID)
    except NumericalError as e:
        return report_error(e, EXIT_NUMERICAL)
    except MemoctrlError as e:
        return report_error(e, EXIT_INVALID)

    outcome.write(args.out_dir)
    record = RunRecord(
        command=args.command,
        config_path=str(args.config),
        version=__version__,
        started_at=started_at,
        finished_at=datetime.now().astimezone(),
        exit_code=outcome.exit_code,
        outputs=outcome.outputs,
    )
    (args.out_dir / "run.json").write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
    structlog.get_logger().info(
        f"{args.command} finished, wrote {len(outcome.outputs)} files", exit_code=outcome.exit_code
    )
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
