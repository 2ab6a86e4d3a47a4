"""MUSIC成像的Schema定义。"""

import math
from typing import Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    model_validator,
)

from app.business.imaging.config import imaging_config

Domain = Literal["mode", "frequency"]


class SearchBounds(BaseModel):
    """谱峰搜索范围与网格，角度为弧度。

    Attributes:
        range_min: 距离下限（米）
        range_max: 距离上限（米）
        elevation_min: 俯仰下限
        elevation_max: 俯仰上限
        azimuth_min: 方位下限
        azimuth_max: 方位上限，与下限相差2π时方位轴按周期处理
        angle_step: 粗网格角度步长
        range_step: 粗网格距离步长（米）
        refine_factor: 局部细化倍数
        range_cues: 每个目标的粗略位置 (r, θ, φ)，用于距离解模糊
    """

    model_config = ConfigDict(frozen=True)

    range_min: float = Field(..., gt=0.0)
    range_max: float = Field(default=300.0, gt=0.0)
    elevation_min: float = Field(default=math.radians(5.0), ge=0.0, le=math.pi)
    elevation_max: float = Field(default=math.radians(90.0), ge=0.0, le=math.pi)
    azimuth_min: float = Field(default=0.0)
    azimuth_max: float = Field(default=2 * math.pi)
    angle_step: float = Field(default_factory=lambda: math.radians(imaging_config.ANGLE_STEP_DEG), gt=0.0)
    range_step: float = Field(default_factory=lambda: imaging_config.RANGE_STEP_M, gt=0.0)
    refine_factor: int = Field(default_factory=lambda: imaging_config.REFINE_FACTOR, ge=1)
    range_cues: tuple[tuple[float, float, float], ...] = Field(default=())

    @model_validator(mode="after")
    def validate_order(self) -> "SearchBounds":
        """上限大于下限。"""
        if self.range_max <= self.range_min:
            raise ValueError("距离上限必须大于下限")
        if self.elevation_max <= self.elevation_min:
            raise ValueError("俯仰上限必须大于下限")
        if self.azimuth_max <= self.azimuth_min:
            raise ValueError("方位上限必须大于下限")
        return self

    @property
    def azimuth_periodic(self) -> bool:
        """方位轴是否覆盖整周。"""
        return self.azimuth_max - self.azimuth_min >= 2 * math.pi - 1e-9


class SteeringFamily(BaseModel):
    """可分离的导向矢量族：a(i, j) = row_factor[i] ⊙ col_factor[j]。

    phase_axis 不为None时，该轴的因子是纯相位 e^{i·phase_scale·n·y}（n 为分量序号，
    可差一个公共相位），谱计算走按分量差求和的快速路径。
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    axis1: np.ndarray
    axis2: np.ndarray
    row_factor: np.ndarray
    col_factor: np.ndarray
    phase_axis: Literal[1, 2] | None = None
    phase_scale: float = 0.0

    @model_validator(mode="after")
    def validate_factors(self) -> "SteeringFamily":
        """因子维度一致。"""
        if self.row_factor.shape[0] != self.axis1.size or self.col_factor.shape[0] != self.axis2.size:
            raise ValueError("导向因子与网格长度不匹配")
        if self.row_factor.shape[1] != self.col_factor.shape[1]:
            raise ValueError("导向因子维度不一致")
        return self


class MusicSpectrum(BaseModel):
    """二维MUSIC空间谱。

    Attributes:
        axis1: 第一轴网格（θ 或 r），单调递增
        axis2: 第二轴网格（φ 或 θ），单调递增
        values: 谱值，形状 (len(axis1), len(axis2))
        saturated: 是否有网格点触及上限
        periodic1: 第一轴周期（无周期为None）
        periodic2: 第二轴周期（无周期为None）
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray
    saturated: bool = False
    periodic1: float | None = None
    periodic2: float | None = None

    @model_validator(mode="after")
    def validate_grid(self) -> "MusicSpectrum":
        """网格单调、谱值有限且为正。"""
        if self.values.shape != (self.axis1.size, self.axis2.size):
            raise ValueError("谱值维度与网格不匹配")
        for axis in (self.axis1, self.axis2):
            if axis.size > 1 and np.any(np.diff(axis) <= 0):
                raise ValueError("网格必须单调递增")
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ValueError("谱值必须有限且为正")
        return self


class Peak(BaseModel):
    """一个谱峰。"""

    model_config = ConfigDict(frozen=True)

    axis1: float
    axis2: float
    value: float


class PeakSearchResult(BaseModel):
    """谱峰搜索结果，按峰值降序。"""

    model_config = ConfigDict(frozen=True)

    peaks: tuple[Peak, ...]
    requested: int
    shortfall: bool


class PositionEstimate(BaseModel):
    """单个散射点的三维位置估计。

    Attributes:
        range_m: r̂（米）
        elevation: θ̂（弧度）
        azimuth: φ̂（弧度）
        mode_sources: 参与平均的模态域谱峰数（子载波数）
        freq_sources: 参与平均的频率域谱峰数（模态数）
    """

    model_config = ConfigDict(frozen=True)

    range_m: float = Field(..., gt=0.0)
    elevation: float = Field(..., ge=0.0, le=math.pi)
    azimuth: float = Field(..., ge=0.0, lt=2 * math.pi)
    mode_sources: int = Field(..., ge=0)
    freq_sources: int = Field(..., ge=0)


class DomainPeaks(BaseModel):
    """一次模态域（固定w）或频率域（固定u）搜索的谱峰。"""

    model_config = ConfigDict(frozen=True)

    domain: Domain
    index: int
    peaks: tuple[Peak, ...]
    shortfall: bool
    signal_to_noise: float


class ImagingReport(BaseModel):
    """成像结果。

    Attributes:
        estimates: 位置估计，按参考谱峰降序
        domain_peaks: 每个w与每个u的谱峰
        reference_mode_index: 模态域参考子载波
        reference_freq_index: 频率域参考模态
        mode_spectrum: 参考子载波的 (θ, φ) 谱
        freq_spectrum: 参考模态的 (r, θ) 谱
        joint_mode_spectrum: 各子载波平均后的 (θ, φ) 联合谱
        joint_freq_spectrum: 各模态平均后的 (r, θ) 联合谱
        shortfalls: 谱峰不足的 (domain, index)
        range_folded: 距离是否在模糊区间内搜索后解模糊
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    estimates: tuple[PositionEstimate, ...]
    domain_peaks: tuple[DomainPeaks, ...]
    reference_mode_index: int
    reference_freq_index: int
    mode_spectrum: MusicSpectrum
    freq_spectrum: MusicSpectrum
    joint_mode_spectrum: MusicSpectrum
    joint_freq_spectrum: MusicSpectrum
    shortfalls: tuple[tuple[str, int], ...]
    range_folded: bool
