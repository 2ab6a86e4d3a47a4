#!/usr/bin/env python3
"""OAM雷达通信实验室的命令行界面。"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any

import colorama
from colorama import (
    Fore,
    Style,
)

from app.business.experiments import (
    COMMANDS,
    PRESETS,
    ExperimentReport,
    ScenarioConfig,
    load_config,
    load_preset,
    run,
)
from app.business.experiments.service import resolve_output_dir
from app.core.config import settings
from app.core.errors import OamLabError
from app.core.logging import logger
from app.utils.io import write_json


def print_title(title: str) -> None:
    """打印带颜色的格式化标题。

    Args:
        title: 要打印的标题文本
    """
    print("\n" + "=" * 60)
    print(f"{Fore.CYAN}{Style.BRIGHT}{title.center(60)}{Style.RESET_ALL}")
    print("=" * 60 + "\n")


def print_info(message: str) -> None:
    """打印带颜色的信息消息。"""
    print(f"{Fore.GREEN}• {message}{Style.RESET_ALL}")


def print_warning(message: str) -> None:
    """打印带颜色的警告消息。"""
    print(f"{Fore.YELLOW}⚠ {message}{Style.RESET_ALL}")


def print_error(message: str) -> None:
    """打印带颜色的错误消息到stderr。"""
    print(f"{Fore.RED}✗ {message}{Style.RESET_ALL}", file=sys.stderr)


def print_success(message: str) -> None:
    """打印带颜色的成功消息。"""
    print(f"{Fore.GREEN}✓ {message}{Style.RESET_ALL}")


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def display_summary(report: ExperimentReport) -> None:
    """显示运行结果摘要。

    Args:
        report: 实验报告
    """
    print_title(f"{report.command} summary")
    print(f"{Fore.CYAN}Version:{Style.RESET_ALL} {report.version}")
    print(f"{Fore.CYAN}Seed:{Style.RESET_ALL} {report.seed}")
    print(f"{Fore.CYAN}Duration:{Style.RESET_ALL} {report.wall_clock_s:.2f} seconds")

    print("\n" + f"{Fore.CYAN}Results:{Style.RESET_ALL}")
    for key, value in report.results.items():
        if isinstance(value, (list, dict)):
            print(f"  • {key}: {len(value)} entries")
        else:
            print(f"  • {key}: {_format_value(value)}")

    if report.command == "spin":
        for entry in report.results.get("targets", []):
            print(
                f"  • target {entry['target']}: Ω̂ = {entry['spin_rate_over_pi']:.3f}π rad/s"
                + (f"{Fore.YELLOW} (static){Style.RESET_ALL}" if entry["static"] else "")
            )

    print(f"\n{Fore.CYAN}Files written to:{Style.RESET_ALL} {report.output_dir}")
    for name in report.files:
        print(f"  • {name}")


def emit_error(error: dict[str, Any], out_dir: Path | None) -> None:
    """把错误JSON写到stderr，并在结果目录中写 error.json。"""
    print(json.dumps(error, ensure_ascii=False, default=str), file=sys.stderr)
    if out_dir is not None:
        try:
            write_json(out_dir / "error.json", error)
        except OSError as e:
            logger.warning("error_file_not_written", path=str(out_dir), reason=str(e))


def _snr_list(value: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"SNR列表格式错误: {value}") from e


def build_parser() -> argparse.ArgumentParser:
    """构造参数解析器。"""
    parser = argparse.ArgumentParser(
        prog="oam-lab", description="UCA-based OAM joint radar-communication numerical lab"
    )
    parser.add_argument("command", choices=COMMANDS, help="Pipeline to run")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="Scenario JSON file")
    source.add_argument("--preset", choices=sorted(PRESETS), help="Built-in scenario")
    parser.add_argument("--snr-db", type=_snr_list, help="Comma-separated SNR list in dB")
    parser.add_argument("--trials", type=int, help="Monte-Carlo trials per SNR")
    parser.add_argument("--seed", type=int, help="Root random seed")
    parser.add_argument("--out", type=Path, help=f"Output directory (default {settings.OUTPUT_DIR})")
    parser.add_argument("--rate-min", type=float, help="Minimum average rate for optimize")
    parser.add_argument("--grid-n", type=int, help="Weight grid resolution for optimize")
    return parser


def _load(args: argparse.Namespace) -> ScenarioConfig:
    if args.config is not None:
        return load_config(args.config)
    return load_preset(args.preset)


def main(argv: list[str] | None = None) -> int:
    """命令行界面的主入口点。

    Returns:
        进程退出码：成功为0，模块错误为对应错误类的 exit_code，其他失败为1
    """
    colorama.init()
    args = build_parser().parse_args(argv)
    overrides = {
        "snr_db": args.snr_db,
        "trials": args.trials,
        "seed": args.seed,
        "rate_min": args.rate_min,
        "grid_n": args.grid_n,
    }

    out_dir: Path | None = args.out
    try:
        config = _load(args)
        out_dir = resolve_output_dir(config, args.out)
        print_title(f"oam-lab {args.command}")
        print_info(f"Scenario: {args.config or args.preset}")
        print_info(f"Output: {out_dir}")
        report = run(args.command, config, overrides=overrides, out=out_dir)
    except OamLabError as e:
        print_error(e.message)
        logger.error("run_failed", error=e.code, exit_code=e.exit_code, details=e.details)
        emit_error(e.to_dict(), out_dir)
        return e.exit_code
    except KeyboardInterrupt:
        print_warning("Run canceled by user.")
        return 130
    except Exception as e:
        print_error(f"Run failed: {e}")
        logger.exception("run_failed_unexpectedly")
        emit_error({"error": "internal", "exit_code": 1, "message": str(e), "details": {}}, out_dir)
        return 1

    print_success(f"{args.command} completed")
    display_summary(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
