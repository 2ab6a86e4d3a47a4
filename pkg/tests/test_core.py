"""运行设置、日志与结果文件工具的测试。"""

import json

import numpy as np
import pytest

from app.core.config import (
    Environment,
    Settings,
    parse_float_list_from_env,
    parse_positive_int_from_env,
    settings,
)
from app.core.errors import ImagingError
from app.core.logging import (
    logger,
    run_log,
    scoped_context,
)
from app.utils.io import (
    write_csv,
    write_json,
)
from app.utils.rng import derive_seed


def test_test_environment_defaults():
    """测试环境关闭指标与结果目录日志，工作线程为2。"""
    assert settings.ENVIRONMENT == Environment.TEST
    assert settings.METRICS_ENABLED is False
    assert settings.RUN_LOG_ENABLED is False


def test_explicit_env_overrides_environment_defaults(monkeypatch):
    """已设置的环境变量优先于环境默认值。"""
    monkeypatch.setenv("MAX_WORKERS", "7")
    monkeypatch.setenv("DEFAULT_SNR_DB", "0, 12.5")
    fresh = Settings()
    assert fresh.MAX_WORKERS == 7
    assert fresh.DEFAULT_SNR_DB == [0.0, 12.5]


def test_env_parsers(monkeypatch):
    """正整数与浮点列表的解析。"""
    monkeypatch.setenv("PROBE_INT", "0")
    with pytest.raises(ValueError):
        parse_positive_int_from_env("PROBE_INT", 3)
    monkeypatch.delenv("PROBE_INT")
    assert parse_positive_int_from_env("PROBE_INT", 3) == 3
    assert parse_float_list_from_env("PROBE_LIST", [1.0]) == [1.0]


def test_run_log_records_context(tmp_path, monkeypatch):
    """run_log 期间的记录带上下文写入结果目录，退出后不再写入。"""
    monkeypatch.setattr(settings, "RUN_LOG_ENABLED", True)
    with scoped_context(command="probe", trial=3), run_log(tmp_path) as path:
        logger.warning("probe_event", snr_db=10.0)
    logger.warning("after_run")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1
    entry = json.loads(lines[0])
    assert entry["level"] == "WARNING"
    assert entry["trial"] == 3
    assert entry["command"] == "probe"
    assert "probe_event" in entry["message"]


def test_error_to_dict():
    """错误JSON带错误码、退出码与结构化细节。"""
    error = ImagingError("峰值不足", requested=3, found=1)
    assert error.to_dict() == {
        "error": "imaging",
        "exit_code": 13,
        "message": "峰值不足",
        "details": {"requested": 3, "found": 1},
    }


def test_write_csv_and_json(tmp_path):
    """CSV用repr浮点与CRLF行尾，JSON支持复数数组。"""
    path = write_csv(tmp_path / "sub" / "t.csv", ["a", "b"], [(0.1, float("nan")), (True, None)])
    assert path.read_bytes() == b"a,b\r\n0.1,nan\r\ntrue,\r\n"
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", ["a"], [(1, 2)])

    data = json.loads(write_json(tmp_path / "x.json", {"z": np.array([1 + 2j])}).read_text(encoding="utf-8"))
    assert data == {"z": {"real": [1.0], "imag": [2.0]}}


def test_derive_seed_is_stable():
    """派生种子只依赖输入。"""
    assert derive_seed(7, "sweep", 0, 1) == derive_seed(7, "sweep", 0, 1)
    assert derive_seed(7, "sweep", 0, 1) != derive_seed(7, "sweep", 1, 0)
