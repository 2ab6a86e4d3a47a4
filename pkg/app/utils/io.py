"""结果文件的写入：CSV表格与JSON报告。

CSV统一带表头、每条记录一行、按RFC 4180加引号；浮点数用repr格式，
相同输入写出的文件逐字节一致。
"""

import csv
import json
import math
from pathlib import Path
from typing import (
    Any,
    Iterable,
    Sequence,
)

import numpy as np

from app.core.logging import logger


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """写CSV文件。

    Args:
        path: 目标路径，父目录不存在时创建
        header: 列名
        rows: 记录，每条长度必须等于列数

    Returns:
        写入的路径

    Raises:
        ValueError: 某条记录的列数与表头不一致
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{path.name} 第{count + 1}条记录有{len(row)}列，表头有{len(header)}列")
            writer.writerow([_cell(v) for v in row])
            count += 1
    logger.debug("csv_written", path=str(path), rows=count)
    return path


def to_jsonable(value: Any) -> Any:
    """把numpy与pydantic对象转换为JSON可序列化的值。"""
    if hasattr(value, "model_dump"):
        return to_jsonable(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"real": to_jsonable(value.real.tolist()), "imag": to_jsonable(value.imag.tolist())}
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON没有inf与nan
        return value if math.isfinite(value) else str(value)
    if isinstance(value, complex):
        return {"real": value.real, "imag": value.imag}
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Path | str, payload: Any) -> Path:
    """写缩进为2的JSON文件。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(payload), f, indent=2, ensure_ascii=False)
        f.write("\n")
    logger.debug("json_written", path=str(path))
    return path
