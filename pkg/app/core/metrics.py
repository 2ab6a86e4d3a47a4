"""实验运行的Prometheus指标。

指标注册在独立的注册表中，运行结束时以文本文件形式写到结果目录，
供node_exporter的textfile收集器或人工查看。
"""

import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from prometheus_client import (
    CollectorRegistry,
    Counter,
    Histogram,
    write_to_textfile,
)

from app.core.config import settings

registry = CollectorRegistry()

stage_duration_seconds = Histogram(
    "stage_duration_seconds",
    "Time spent in a processing stage",
    ["stage"],
    buckets=[0.01, 0.1, 0.5, 1.0, 5.0, 30.0, 120.0, 600.0],
    registry=registry,
)

trials_total = Counter("trials_total", "Monte-Carlo trials completed", ["command"], registry=registry)

music_peak_shortfall_total = Counter(
    "music_peak_shortfall_total", "MUSIC searches that found fewer peaks than requested", ["domain"], registry=registry
)

optimizer_candidates_total = Counter(
    "optimizer_candidates_total", "Weight candidates evaluated by the optimizer", registry=registry
)


@contextmanager
def track_stage(stage: str) -> Iterator[None]:
    """记录with块的耗时到stage_duration_seconds。"""
    start = time.perf_counter()
    try:
        yield
    finally:
        stage_duration_seconds.labels(stage=stage).observe(time.perf_counter() - start)


def write_metrics(out_dir: Path) -> Path | None:
    """把注册表写成Prometheus文本文件。

    Args:
        out_dir: 结果目录

    Returns:
        写入的文件路径；指标被禁用时为None
    """
    if not settings.METRICS_ENABLED:
        return None
    path = Path(out_dir) / "metrics.prom"
    write_to_textfile(str(path), registry)
    return path
