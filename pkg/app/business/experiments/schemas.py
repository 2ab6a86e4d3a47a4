"""场景文件与实验报告的Schema定义。

场景文件中的角度一律为度，转速为rad/s；转换为弧度在构造领域对象时进行，
因此 model_dump 的结果可以原样写回场景文件。
"""

import math
from pathlib import Path
from typing import (
    Any,
    Literal,
)

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from app.business.doppler.schemas import StftParams
from app.business.forward_model.config import forward_config
from app.business.forward_model.schemas import (
    OamSystemConfig,
    WeightVector,
)
from app.business.imaging.config import imaging_config
from app.business.imaging.schemas import SearchBounds
from app.business.optimizer.schemas import SearchMode
from app.business.scene.schemas import (
    ScattererRole,
    ScattererState,
    TargetState,
)
from app.core.config import settings
from app.utils.rng import spawn_rng

Command = Literal["synth", "image", "spin", "pcrb", "rate", "optimize", "sweep"]
COMMANDS: tuple[Command, ...] = ("synth", "image", "spin", "pcrb", "rate", "optimize", "sweep")


def snr_to_noise_variance(snr_db: float) -> float:
    """单位发射功率下 ξ² = 10^{−SNR/10}。"""
    return 10.0 ** (-snr_db / 10.0)


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemSpec(_Spec):
    """阵列与波形参数。

    Attributes:
        n_tx: 发射阵元数M
        n_rx: 接收阵元数N
        radius: UCA半径（米）
        modes: OAM模态，连续整数
        wavenumbers: 子载波波数（rad/m），步长1
        psk_order: PSK阶数
        weights: 功率权重，缺省为等功率
        gain: 雷达折叠增益
        comm_gain: 通信信道常数β
    """

    n_tx: int = Field(..., ge=1)
    n_rx: int = Field(..., ge=1)
    radius: float = Field(..., gt=0.0)
    modes: list[int] = Field(..., min_length=1)
    wavenumbers: list[float] = Field(..., min_length=1)
    psk_order: int = 4
    weights: list[float] | None = None
    gain: float = Field(default=forward_config.DEFAULT_GAIN, gt=0.0)
    comm_gain: float = Field(default=forward_config.DEFAULT_COMM_GAIN, gt=0.0)

    def to_config(self, noise_variance: float) -> OamSystemConfig:
        """构造系统配置。"""
        return OamSystemConfig(
            n_tx=self.n_tx,
            n_rx=self.n_rx,
            radius=self.radius,
            modes=tuple(self.modes),
            wavenumbers=tuple(self.wavenumbers),
            psk_order=self.psk_order,
            noise_variance=noise_variance,
            weights=WeightVector(amplitudes=tuple(self.weights)) if self.weights is not None else None,
            gain=self.gain,
            comm_gain=self.comm_gain,
        )


class ScattererSpec(_Spec):
    """场景文件中的散射点。"""

    role: ScattererRole
    rotation_radius: float = Field(default=0.0, ge=0.0)
    initial_phase_deg: float = 0.0
    rcs_amplitude: float = Field(default=1.0, ge=0.0)
    rcs_phase_deg: float = 0.0

    def to_state(self) -> ScattererState:
        """转换为弧度制的散射点状态。"""
        return ScattererState(
            role=self.role,
            rotation_radius=self.rotation_radius,
            initial_phase=math.radians(self.initial_phase_deg),
            rcs_amplitude=self.rcs_amplitude,
            rcs_phase=math.radians(self.rcs_phase_deg),
        )


class TargetSpec(_Spec):
    """场景文件中的目标。"""

    range_m: float = Field(..., gt=0.0)
    elevation_deg: float = Field(..., ge=0.0, le=180.0)
    azimuth_deg: float = Field(..., ge=0.0, lt=360.0)
    speed: float = Field(default=0.0, ge=0.0)
    direction_deg: float = 0.0
    spin_rate: float = Field(default=0.0, ge=0.0)
    half_cone_angle_deg: float = Field(default=30.0, gt=0.0, lt=90.0)
    scatterers: list[ScattererSpec] = Field(..., min_length=1)

    def to_state(self) -> TargetState:
        """转换为弧度制的目标状态。"""
        return TargetState(
            range_m=self.range_m,
            elevation=math.radians(self.elevation_deg),
            azimuth=math.radians(self.azimuth_deg),
            speed=self.speed,
            direction=math.radians(self.direction_deg),
            spin_rate=self.spin_rate,
            half_cone_angle=math.radians(self.half_cone_angle_deg),
            scatterers=tuple(s.to_state() for s in self.scatterers),
        )


class SearchSpec(_Spec):
    """MUSIC搜索范围。

    range_min 缺省为 20R。use_range_cues 时以目标配置距离作为解模糊线索，
    cue_jitter_m 为正时线索距离加上 [−cue_jitter_m, cue_jitter_m] 内的均匀扰动，
    模拟粗测距给出的先验。
    """

    range_min: float | None = Field(default=None, gt=0.0)
    range_max: float = Field(default=300.0, gt=0.0)
    elevation_min_deg: float = Field(default=5.0, ge=0.0, le=180.0)
    elevation_max_deg: float = Field(default=90.0, ge=0.0, le=180.0)
    azimuth_min_deg: float = 0.0
    azimuth_max_deg: float = 360.0
    angle_step_deg: float = Field(default=imaging_config.ANGLE_STEP_DEG, gt=0.0)
    range_step: float = Field(default=imaging_config.RANGE_STEP_M, gt=0.0)
    refine_factor: int = Field(default=imaging_config.REFINE_FACTOR, ge=1)
    use_range_cues: bool = True
    cue_jitter_m: float = Field(default=0.0, ge=0.0)


class CommSpec(_Spec):
    """通信链路与权重优化参数。

    Attributes:
        target_index: 通信目标下标
        csi_error: 信道估计相对误差ε
        rate_min: 最低平均速率
        grid_n: 权重网格参数𝔑
        mode: 优化搜索方式
        snr_db: 通信与优化使用的SNR，缺省与单次命令相同
    """

    target_index: int = Field(default=0, ge=0)
    csi_error: float = Field(default=0.05, ge=0.0)
    rate_min: float = Field(default=6.0, ge=0.0)
    grid_n: int = Field(default=10, ge=2)
    mode: SearchMode = "auto"
    snr_db: float | None = None


class ScenarioConfig(_Spec):
    """一次实验的完整场景。

    Attributes:
        system: 阵列与波形
        targets: 目标列表
        snr_db: SNR列表（dB），单次命令使用其中最大值
        snapshots: 成像快拍数L
        spin_snapshots: 转速检测慢时间立方体的快拍数
        sample_rate: 慢时间采样率（Hz）
        duration: 慢时间观测时长（秒）
        trials: 蒙特卡洛试验次数
        seed: 根种子
        search: 成像搜索范围
        max_range: 距离先验上界 r_m（米）
        max_spin_rate: 转速先验上界 Ω_m（rad/s）
        comm: 通信与优化参数
        stft: 时频分析参数
        spectrogram_modes: 输出时频图的模态ℓ
        spectrogram_subcarrier: 输出单子载波时频图的子载波下标
        fisher_stride: Fisher信息累加时对慢时间样本的抽取间隔
        spin_isolation: 转速检测是否对每个目标单独仿真慢时间立方体
        output_dir: 结果目录
    """

    system: SystemSpec
    targets: list[TargetSpec] = Field(..., min_length=1)
    snr_db: list[float] = Field(default_factory=lambda: list(settings.DEFAULT_SNR_DB), min_length=1)
    snapshots: int = Field(default=200, ge=1)
    spin_snapshots: int = Field(default=1, ge=1)
    sample_rate: float = Field(default=4000.0, gt=0.0)
    duration: float = Field(default=2.0, ge=0.0)
    trials: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    search: SearchSpec = Field(default_factory=SearchSpec)
    max_range: float = Field(default=300.0, gt=0.0)
    max_spin_rate: float = Field(default=100.0, gt=0.0)
    comm: CommSpec = Field(default_factory=CommSpec)
    stft: StftParams = Field(default_factory=StftParams)
    spectrogram_modes: list[int] = Field(default_factory=list)
    spectrogram_subcarrier: int = Field(default=0, ge=0)
    fisher_stride: int = Field(default=1, ge=1)
    spin_isolation: bool = True
    output_dir: str | None = None

    @field_validator("snr_db")
    @classmethod
    def validate_snr(cls, v: list[float]) -> list[float]:
        """SNR为有限值。"""
        if any(not math.isfinite(s) for s in v):
            raise ValueError("SNR必须是有限值")
        return v

    @model_validator(mode="after")
    def validate_scenario(self) -> "ScenarioConfig":
        """在加载时检查各模块的前置条件。"""
        cfg = self.system_config()
        targets = self.target_states()
        n_sources = sum(len(t.scatterers) for t in targets)
        if n_sources >= cfg.n_modes or n_sources >= cfg.n_subcarriers:
            raise ValueError(
                f"散射点总数 {n_sources} 必须小于模态数 {cfg.n_modes} 和子载波数 {cfg.n_subcarriers}"
            )
        for q, t in enumerate(targets):
            if t.range_m > self.max_range:
                raise ValueError(f"目标{q}的距离超过先验上界 r_m = {self.max_range}")
            if t.spin_rate > self.max_spin_rate:
                raise ValueError(f"目标{q}的转速超过先验上界 Ω_m = {self.max_spin_rate}")
        if self.comm.target_index >= len(targets):
            raise ValueError(f"通信目标下标 {self.comm.target_index} 越界")
        missing = [m for m in self.spectrogram_modes if m not in cfg.modes]
        if missing:
            raise ValueError(f"时频图模态不在模态集合中: {missing}")
        if self.spectrogram_subcarrier >= cfg.n_subcarriers:
            raise ValueError("时频图子载波下标越界")
        self.search_bounds()
        return self

    @property
    def main_snr_db(self) -> float:
        """单次命令使用的SNR。"""
        return max(self.snr_db)

    @property
    def comm_snr_db(self) -> float:
        """通信与优化使用的SNR。"""
        return self.comm.snr_db if self.comm.snr_db is not None else self.main_snr_db

    def system_config(self, snr_db: float | None = None) -> OamSystemConfig:
        """给定SNR下的系统配置，缺省为单次命令的SNR。"""
        return self.system.to_config(snr_to_noise_variance(self.main_snr_db if snr_db is None else snr_db))

    def target_states(self) -> list[TargetState]:
        """弧度制的目标列表。"""
        return [t.to_state() for t in self.targets]

    @property
    def n_sources(self) -> int:
        """散射点总数QP。"""
        return sum(len(t.scatterers) for t in self.targets)

    def search_bounds(self, cue_seed: int | None = None) -> SearchBounds:
        """MUSIC搜索范围。

        Args:
            cue_seed: 线索扰动的种子，缺省为根种子；仅在 cue_jitter_m 为正时使用
        """
        s = self.search
        cues = ()
        if s.use_range_cues:
            ranges = np.array([t.range_m for t in self.targets])
            if s.cue_jitter_m > 0.0:
                rng = spawn_rng(self.seed if cue_seed is None else cue_seed, "range_cues")
                ranges = np.maximum(ranges + rng.uniform(-s.cue_jitter_m, s.cue_jitter_m, ranges.size), 1e-3)
            cues = tuple(
                (float(r), math.radians(t.elevation_deg), math.radians(t.azimuth_deg))
                for r, t in zip(ranges, self.targets)
            )
        return SearchBounds(
            range_min=s.range_min if s.range_min is not None else 20 * self.system.radius,
            range_max=s.range_max,
            elevation_min=math.radians(s.elevation_min_deg),
            elevation_max=math.radians(s.elevation_max_deg),
            azimuth_min=math.radians(s.azimuth_min_deg),
            azimuth_max=math.radians(s.azimuth_max_deg),
            angle_step=math.radians(s.angle_step_deg),
            range_step=s.range_step,
            refine_factor=s.refine_factor,
            range_cues=cues,
        )

    def side_information(self, command: Command) -> dict[str, str]:
        """命令用到的真值先验，写入报告以区分盲估计。"""
        info: dict[str, str] = {}
        if command in ("image", "sweep") and self.search.use_range_cues:
            if self.search.cue_jitter_m > 0.0:
                info["range_cues"] = f"configured ranges with uniform jitter ±{self.search.cue_jitter_m} m"
            else:
                info["range_cues"] = "configured target ranges (oracle)"
        if command in ("spin", "sweep"):
            if self.spin_isolation:
                info["spin_isolation"] = "each target simulated alone (oracle separation)"
            else:
                info["spin_focus"] = "configured target range and direction (oracle)"
        return info

    def with_overrides(self, **overrides: Any) -> "ScenarioConfig":
        """应用命令行覆盖项（值为None的键忽略），并重新校验。"""
        data = self.model_dump(mode="json")
        for key, value in overrides.items():
            if value is None:
                continue
            if key in ("rate_min", "grid_n"):
                data["comm"][key] = value
            else:
                data[key] = value
        return ScenarioConfig.model_validate(data)


class ExperimentReport(BaseModel):
    """一次命令运行的报告。

    Attributes:
        command: 运行的命令
        version: 工具版本
        seed: 根种子
        wall_clock_s: 耗时（秒）
        config: 场景回显，可直接用 load_config 重新加载
        results: 命令相关的结果
        files: 写出的文件（相对结果目录）
        side_information: 结果所依赖的真值先验及其来源
    """

    model_config = ConfigDict(frozen=True)

    command: Command
    version: str
    seed: int
    wall_clock_s: float = Field(..., ge=0.0)
    config: dict[str, Any]
    results: dict[str, Any] = Field(default_factory=dict)
    files: list[str] = Field(default_factory=list)
    side_information: dict[str, str] = Field(default_factory=dict)
    output_dir: Path
