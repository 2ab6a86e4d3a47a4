"""测试公共夹具。

在导入 app 之前设置 APP_ENV=test，使设置类套用测试环境的默认值
（控制台日志、两个工作线程、关闭指标文件）。
"""

import math
import os

os.environ.setdefault("APP_ENV", "test")

import pytest  # noqa: E402

from app.business.forward_model.schemas import OamSystemConfig  # noqa: E402
from app.business.scene.schemas import (  # noqa: E402
    ScattererRole,
    ScattererState,
    TargetState,
)

SMALL_RADIUS = 30 * 2 * math.pi / 209.0


def small_config(noise_variance: float = 0.0, n_modes: int = 8, n_subcarriers: int = 8, **kwargs) -> OamSystemConfig:
    """U = W = 8 的小规模系统，模态以0为中心。"""
    first = -(n_modes // 2)
    return OamSystemConfig(
        n_tx=kwargs.pop("n_tx", n_modes + 1),
        n_rx=kwargs.pop("n_rx", n_modes + 1),
        radius=kwargs.pop("radius", SMALL_RADIUS),
        modes=tuple(range(first, first + n_modes)),
        wavenumbers=tuple(209.0 + w for w in range(n_subcarriers)),
        noise_variance=noise_variance,
        **kwargs,
    )


def cone_target(
    range_m: float = 60.0,
    elevation_deg: float = 30.0,
    azimuth_deg: float = 45.0,
    spin_rate: float = 8 * math.pi,
    speed: float = 0.0,
    vertex_rcs: float = 1.0,
    body: bool = False,
) -> TargetState:
    """质心加锥顶的自旋目标，可选一个弹体散射点。"""
    scatterers = [
        ScattererState(role=ScattererRole.CENTROID),
        ScattererState(role=ScattererRole.VERTEX, rotation_radius=0.5, rcs_amplitude=vertex_rcs),
    ]
    if body:
        scatterers.append(
            ScattererState(
                role=ScattererRole.BODY, rotation_radius=0.35, initial_phase=2 * math.pi / 3, rcs_amplitude=0.6
            )
        )
    return TargetState(
        range_m=range_m,
        elevation=math.radians(elevation_deg),
        azimuth=math.radians(azimuth_deg),
        speed=speed,
        direction=math.radians(88.0),
        spin_rate=spin_rate,
        scatterers=tuple(scatterers),
    )


def scenario_dict(**overrides) -> dict:
    """小规模场景文件内容：U = W = 6，一个目标，粗网格搜索。"""
    data = {
        "system": {
            "n_tx": 8,
            "n_rx": 8,
            "radius": SMALL_RADIUS,
            "modes": [-3, -2, -1, 0, 1, 2],
            "wavenumbers": [209.0 + w for w in range(6)],
        },
        "targets": [
            {
                "range_m": 60.0,
                "elevation_deg": 30.0,
                "azimuth_deg": 40.0,
                "spin_rate": 8 * math.pi,
                "scatterers": [
                    {"role": "centroid"},
                    {"role": "vertex", "rotation_radius": 0.5, "rcs_amplitude": 0.5},
                ],
            }
        ],
        "snr_db": [10.0, 20.0],
        "snapshots": 20,
        "sample_rate": 1000.0,
        "duration": 0.5,
        "trials": 2,
        "seed": 7,
        "search": {
            "range_min": 58.0,
            "range_max": 62.0,
            "elevation_min_deg": 25.0,
            "elevation_max_deg": 35.0,
            "azimuth_min_deg": 0.0,
            "azimuth_max_deg": 360.0,
            "angle_step_deg": 1.0,
            "range_step": 0.1,
            "refine_factor": 4,
        },
        "comm": {"target_index": 0, "csi_error": 0.05, "rate_min": 0.0, "grid_n": 3, "snr_db": 15.0},
        "spectrogram_modes": [-1],
        "fisher_stride": 25,
    }
    data.update(overrides)
    return data


@pytest.fixture
def system_config() -> OamSystemConfig:
    """无噪声的小规模系统。"""
    return small_config()


@pytest.fixture
def target() -> TargetState:
    """60 m 处的自旋锥体。"""
    return cone_target()
