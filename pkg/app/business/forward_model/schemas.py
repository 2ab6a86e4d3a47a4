"""正向模型的Schema定义：系统配置、权重、回波立方体与通信链路。"""

import math

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from app.business.forward_model.config import forward_config

POWER_TOLERANCE = 1e-12


class WeightVector(BaseModel):
    """OAM模态功率权重 A₁..A_U，Σ|A_u|² = 1。"""

    model_config = ConfigDict(frozen=True)

    amplitudes: tuple[float, ...] = Field(..., min_length=1, description="非负权重")

    @field_validator("amplitudes")
    @classmethod
    def validate_power(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        """权重非负且总功率为1。"""
        if any(a < 0 or not math.isfinite(a) for a in v):
            raise ValueError("权重必须是非负有限值")
        power = math.fsum(a * a for a in v)
        if abs(power - 1.0) > POWER_TOLERANCE:
            raise ValueError(f"权重总功率必须为1，当前为 {power:.15g}")
        return v

    @classmethod
    def normalized(cls, values: list[float] | tuple[float, ...] | np.ndarray) -> "WeightVector":
        """按单位功率归一化后构造。"""
        arr = np.asarray(values, dtype=np.float64)
        norm = math.sqrt(math.fsum(float(a) ** 2 for a in arr))
        if norm == 0.0:
            raise ValueError("权重不能全为0")
        return cls(amplitudes=tuple(float(a) / norm for a in arr))

    @classmethod
    def equal(cls, count: int) -> "WeightVector":
        """等功率权重。"""
        return cls.normalized([1.0] * count)

    def as_array(self) -> np.ndarray:
        """权重数组。"""
        return np.asarray(self.amplitudes, dtype=np.float64)

    def __len__(self) -> int:
        """模态数U。"""
        return len(self.amplitudes)


class OamSystemConfig(BaseModel):
    """UCA-OAM雷达通信一体化系统参数。

    Attributes:
        n_tx: 发射阵元数 M
        n_rx: 接收阵元数 N
        radius: UCA半径 R（米）
        modes: 连续的OAM模态 ℓ₁..ℓ_U
        wavenumbers: 步长为1的子载波波数 k₁..k_W（rad/m）
        psk_order: PSK阶数 M_p
        noise_variance: 噪声方差 ξ²
        weights: 功率权重
        gain: 雷达链路折叠增益
        comm_gain: 通信信道常数 β
    """

    model_config = ConfigDict(frozen=True)

    n_tx: int = Field(..., ge=1, description="发射阵元数M")
    n_rx: int = Field(..., ge=1, description="接收阵元数N")
    radius: float = Field(..., gt=0.0, description="UCA半径（米）")
    modes: tuple[int, ...] = Field(..., min_length=1, description="OAM模态")
    wavenumbers: tuple[float, ...] = Field(..., min_length=1, description="子载波波数（rad/m）")
    psk_order: int = Field(default=4, ge=2, description="PSK阶数")
    noise_variance: float = Field(default=0.01, ge=0.0, description="噪声方差ξ²")
    weights: WeightVector | None = Field(default=None, description="功率权重，缺省为等功率")
    gain: float = Field(default_factory=lambda: forward_config.DEFAULT_GAIN, gt=0.0, description="雷达折叠增益")
    comm_gain: float = Field(
        default_factory=lambda: forward_config.DEFAULT_COMM_GAIN, gt=0.0, description="通信常数β"
    )

    @field_validator("modes")
    @classmethod
    def validate_modes(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        """模态必须连续递增。"""
        if any(b - a != 1 for a, b in zip(v, v[1:])):
            raise ValueError("OAM模态必须是连续整数")
        return v

    @field_validator("wavenumbers")
    @classmethod
    def validate_wavenumbers(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        """波数为正且步长为1。"""
        if v[0] <= 0:
            raise ValueError("波数必须为正")
        if any(abs((b - a) - 1.0) > 1e-9 for a, b in zip(v, v[1:])):
            raise ValueError("子载波波数步长必须为1 rad/m")
        return v

    @field_validator("psk_order")
    @classmethod
    def validate_psk_order(cls, v: int) -> int:
        """PSK阶数为2的幂。"""
        if v & (v - 1):
            raise ValueError("PSK阶数必须是2的幂")
        return v

    @model_validator(mode="after")
    def validate_dimensions(self) -> "OamSystemConfig":
        """U ≤ M，权重长度等于U。"""
        if len(self.modes) > self.n_tx:
            raise ValueError("OAM模态数不能超过发射阵元数")
        if self.weights is None:
            object.__setattr__(self, "weights", WeightVector.equal(len(self.modes)))
        elif len(self.weights) != len(self.modes):
            raise ValueError("权重长度必须等于模态数")
        return self

    @property
    def n_modes(self) -> int:
        """模态数U。"""
        return len(self.modes)

    @property
    def n_subcarriers(self) -> int:
        """子载波数W。"""
        return len(self.wavenumbers)

    @property
    def mode_array(self) -> np.ndarray:
        """模态数组（整数）。"""
        return np.asarray(self.modes, dtype=np.int64)

    @property
    def wavenumber_array(self) -> np.ndarray:
        """波数数组。"""
        return np.asarray(self.wavenumbers, dtype=np.float64)

    @property
    def weight_array(self) -> np.ndarray:
        """权重数组。"""
        return self.weights.as_array()

    @property
    def element_angles(self) -> np.ndarray:
        """发射阵元方位角 φ_m = 2π m/M，m从0开始。"""
        return 2 * np.pi * np.arange(self.n_tx) / self.n_tx

    def with_weights(self, weights: WeightVector) -> "OamSystemConfig":
        """替换权重后的新配置。"""
        return self.model_copy(update={"weights": weights})

    def with_noise(self, noise_variance: float) -> "OamSystemConfig":
        """替换噪声方差后的新配置。"""
        return self.model_copy(update={"noise_variance": noise_variance})


class EchoCube(BaseModel):
    """补偿后的回波样本 E'_R，按 (模态u, 子载波w, 慢时间n, 快拍l) 索引。

    Attributes:
        data: U×W×N_t×L 复数组
        modes: 模态
        wavenumbers: 波数
        sample_rate: 慢时间采样率（Hz）
        times: 慢时间采样时刻（秒）
        rcs_draws: 每个散射点每个快拍的RCS复幅度，S×L
        symbols: 每个 (u, w, l) 的PSK符号索引
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray
    modes: np.ndarray
    wavenumbers: np.ndarray
    sample_rate: float
    times: np.ndarray
    rcs_draws: np.ndarray
    symbols: np.ndarray

    @model_validator(mode="after")
    def validate_shape(self) -> "EchoCube":
        """维度一致且元素有限。"""
        if self.data.ndim != 4:
            raise ValueError("回波立方体必须是四维")
        n_modes, n_sub, n_t, n_snap = self.data.shape
        if (n_modes, n_sub) != (self.modes.size, self.wavenumbers.size) or n_t != self.times.size:
            raise ValueError("回波立方体维度与坐标不匹配")
        if self.rcs_draws.ndim != 2 or self.rcs_draws.shape[1] != n_snap:
            raise ValueError("RCS抽样维度与快拍数不匹配")
        if self.symbols.shape != (n_modes, n_sub, n_snap):
            raise ValueError("符号维度与立方体不匹配")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("回波立方体含非有限元素")
        return self

    @property
    def shape(self) -> tuple[int, int, int, int]:
        """(U, W, N_t, L)。"""
        return self.data.shape

    @property
    def n_snapshots(self) -> int:
        """快拍数L。"""
        return self.data.shape[3]

    def slow_time(self, u: int, w: int, snapshot: int = 0) -> np.ndarray:
        """(u, w) 的慢时间序列。"""
        return self.data[u, w, :, snapshot]


class CommLink(BaseModel):
    """通信链路的一次实现。

    Attributes:
        channel: 真实信道 H，W×M
        estimate: 含误差的信道估计 Ĥ，W×M
        received: 接收样本 y，U×W
        symbols: 发送的PSK符号索引，U×W
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    channel: np.ndarray
    estimate: np.ndarray
    received: np.ndarray
    symbols: np.ndarray
