"""实验室运行设置。

运行设置只覆盖与场景无关的部分：输出目录、并行度、日志与指标、网格预算。
阵列、目标与SNR由JSON场景文件描述，见 app.business.experiments。

加载顺序：.env.{环境}.local > .env.{环境} > .env.local > .env，
已存在的环境变量不会被 .env 覆盖；环境默认值只在变量未设置时生效。
"""

import os
from enum import Enum
from pathlib import Path

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).resolve().parents[2]


class Environment(str, Enum):
    """运行环境。"""

    DEVELOPMENT = "development"
    PRODUCTION = "production"
    TEST = "test"


def get_environment() -> Environment:
    """根据 APP_ENV 确定运行环境，未知值按开发环境处理。"""
    match os.getenv("APP_ENV", "development").lower():
        case "production" | "prod":
            return Environment.PRODUCTION
        case "test":
            return Environment.TEST
        case _:
            return Environment.DEVELOPMENT


def load_env_file(env: Environment) -> Path | None:
    """加载第一个存在的 .env 文件。

    Returns:
        已加载文件的路径，未找到时为None
    """
    candidates = [
        PROJECT_ROOT / f".env.{env.value}.local",
        PROJECT_ROOT / f".env.{env.value}",
        PROJECT_ROOT / ".env.local",
        PROJECT_ROOT / ".env",
    ]
    for path in candidates:
        if path.is_file():
            load_dotenv(dotenv_path=path)
            return path
    return None


ENV_FILE = load_env_file(get_environment())


def parse_bool_from_env(env_key: str, default: str = "false") -> bool:
    """从环境变量解析布尔值。"""
    return os.getenv(env_key, default).strip().lower() in ("true", "1", "t", "yes")


def parse_positive_int_from_env(env_key: str, default: int) -> int:
    """从环境变量解析正整数。

    Raises:
        ValueError: 值不是正整数
    """
    raw = os.getenv(env_key)
    if raw is None or not raw.strip():
        return default
    value = int(raw)
    if value < 1:
        raise ValueError(f"{env_key} 必须为正整数: {raw}")
    return value


def parse_float_list_from_env(env_key: str, default: list[float]) -> list[float]:
    """从环境变量解析逗号分隔的浮点数列表，例如 DEFAULT_SNR_DB="5,10,15"。"""
    raw = os.getenv(env_key)
    if not raw:
        return list(default)
    return [float(item) for item in raw.strip("\"'").split(",") if item.strip()]


class Settings:
    """不使用pydantic的运行设置。"""

    def __init__(self):
        """从环境变量初始化，再套用当前环境的默认值。"""
        self.ENVIRONMENT = get_environment()

        self.PROJECT_NAME = os.getenv("PROJECT_NAME", "oam-radcom-lab")
        self.VERSION = os.getenv("VERSION", "0.1.0")

        # 日志
        self.LOG_DIR = Path(os.getenv("LOG_DIR", "logs"))
        self.LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
        self.LOG_FORMAT = os.getenv("LOG_FORMAT", "json")  # "json"或"console"
        self.LOG_TO_FILE = parse_bool_from_env("LOG_TO_FILE", "true")
        self.RUN_LOG_ENABLED = parse_bool_from_env("RUN_LOG_ENABLED", "true")

        # 结果与并行
        self.OUTPUT_DIR = Path(os.getenv("OUTPUT_DIR", "results"))
        self.MAX_WORKERS = parse_positive_int_from_env("MAX_WORKERS", 4)

        # 穷举权重网格的最大点数
        self.GRID_BUDGET = parse_positive_int_from_env("GRID_BUDGET", 1_000_000)

        self.DEFAULT_SNR_DB = parse_float_list_from_env("DEFAULT_SNR_DB", [5.0, 10.0, 15.0, 20.0])

        self.METRICS_ENABLED = parse_bool_from_env("METRICS_ENABLED", "true")

        self.apply_environment_settings()

    def apply_environment_settings(self):
        """套用环境默认值，已设置的环境变量优先。"""
        env_settings = {
            Environment.DEVELOPMENT: {
                "LOG_LEVEL": "DEBUG",
                "LOG_FORMAT": "console",
            },
            Environment.PRODUCTION: {
                "LOG_LEVEL": "INFO",
            },
            Environment.TEST: {
                "LOG_LEVEL": "WARNING",
                "LOG_FORMAT": "console",
                "LOG_TO_FILE": False,
                "RUN_LOG_ENABLED": False,
                "MAX_WORKERS": 2,
                "METRICS_ENABLED": False,
            },
        }

        for key, value in env_settings.get(self.ENVIRONMENT, {}).items():
            if key not in os.environ:
                setattr(self, key, value)


settings = Settings()
