"""时频处理与转速估计的Schema定义。"""

from typing import Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    model_validator,
)


class StftParams(BaseModel):
    """STFT与脊线提取参数。

    Attributes:
        window_len: 窗长（样本）
        hop: 帧移（样本）
        window: 窗函数
        pad_factor: 补零倍数
        rel_threshold: 脊点相对每帧最大值的门限
        max_jump_hz: 相邻帧脊线允许的最大频率跳变，缺省为 fs/16
    """

    model_config = ConfigDict(frozen=True)

    window_len: int = Field(default=128, ge=2)
    hop: int = Field(default=16, ge=1)
    window: Literal["gaussian", "hann"] = "gaussian"
    pad_factor: int = Field(default=4, ge=1)
    rel_threshold: float = Field(default=0.1, gt=0.0, lt=1.0)
    max_jump_hz: float | None = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def validate_hop(self) -> "StftParams":
        """帧移不超过窗长。"""
        if self.hop > self.window_len:
            raise ValueError("帧移不能超过窗长")
        return self


class DopplerTrack(BaseModel):
    """一条时频脊线。

    Attributes:
        times: 帧中心时刻（秒），严格递增
        frequencies: 脊线频率（Hz）
        magnitudes: 脊线幅度
        mode: OAM模态 ℓ
        subcarrier: 子载波下标；None 表示按距离聚焦后的全子载波序列
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    frequencies: np.ndarray
    magnitudes: np.ndarray
    mode: int
    subcarrier: int | None = None

    @model_validator(mode="after")
    def validate_axes(self) -> "DopplerTrack":
        """长度一致且时间严格递增。"""
        if not (self.times.shape == self.frequencies.shape == self.magnitudes.shape) or self.times.ndim != 1:
            raise ValueError("脊线的时间、频率、幅度长度必须一致")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("脊线时间必须严格递增")
        return self

    @property
    def duration(self) -> float:
        """脊线覆盖的时长（秒）。"""
        return float(self.times[-1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def spread(self) -> float:
        """频率标准差（Hz），衡量脊线的起伏。"""
        return float(np.std(self.frequencies)) if self.frequencies.size else 0.0


class SpinEstimate(BaseModel):
    """转速估计。

    Attributes:
        spin_rate: Ω̂（rad/s），各非零模态估计的平均；静止时为0
        per_mode: 每个非零模态的 Ω̂_u
        periods: 每个非零模态的旋转周期 T_u（秒）
        excluded_modes: 因观测不足两个周期被排除的模态
        static: 是否判定为不旋转（质心或无转动）
    """

    model_config = ConfigDict(frozen=True)

    spin_rate: float = Field(..., ge=0.0)
    per_mode: dict[int, float] = Field(default_factory=dict)
    periods: dict[int, float] = Field(default_factory=dict)
    excluded_modes: tuple[int, ...] = ()
    static: bool = False

    @model_validator(mode="after")
    def validate_mean(self) -> "SpinEstimate":
        """Ω̂ 等于各模态估计的平均。"""
        if self.per_mode:
            mean = sum(self.per_mode.values()) / len(self.per_mode)
            if abs(mean - self.spin_rate) > 1e-9 * max(1.0, abs(mean)):
                raise ValueError("Ω̂ 必须等于各模态估计的平均")
        elif self.spin_rate != 0.0:
            raise ValueError("没有模态估计时 Ω̂ 必须为0")
        return self


class TargetSpinReport(BaseModel):
    """单个目标的转速检测结果与中间脊线。

    Attributes:
        target_index: 目标下标
        focus_range: 聚焦距离（米），None 表示全部子载波非相干平均
        estimate: 转速估计
        components: 各非零模态起伏最大的脊线减去线性多普勒参考，用于估计周期
        reference: 模态0中起伏最小的脊线
        azimuthal_components: 各非零模态中与模态0最强起伏脊线同属一个散射点的脊线之差，
            只保留随ℓ线性变化的方位项
        resolution: STFT频率单元宽度（Hz）
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    target_index: int
    focus_range: float | None
    estimate: SpinEstimate
    components: tuple[DopplerTrack, ...]
    reference: DopplerTrack
    azimuthal_components: tuple[DopplerTrack, ...] = ()
    resolution: float = Field(default=0.0, ge=0.0)
