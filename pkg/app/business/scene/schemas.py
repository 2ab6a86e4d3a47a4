"""目标与散射点状态的Schema定义。

角度一律为弧度；场景文件中的角度（度）在 experiments 模块中转换。
"""

import math
from enum import Enum

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)


class ScattererRole(str, Enum):
    """散射点角色。"""

    CENTROID = "centroid"
    VERTEX = "vertex"
    BODY = "body"


class ScattererState(BaseModel):
    """单个散射点。

    Attributes:
        role: 角色（质心、锥顶或弹体）
        rotation_radius: 绕自旋轴的旋转半径 γ（米）
        initial_phase: 初始方位相位 ψ₀（弧度）
        rcs_amplitude: 平均RCS复幅度的模
        rcs_phase: 平均RCS复幅度的相位（弧度）
    """

    model_config = ConfigDict(frozen=True)

    role: ScattererRole = Field(..., description="散射点角色")
    rotation_radius: float = Field(default=0.0, ge=0.0, description="旋转半径γ（米）")
    initial_phase: float = Field(default=0.0, description="初始相位ψ₀（弧度）")
    rcs_amplitude: float = Field(default=1.0, ge=0.0, description="平均RCS幅度")
    rcs_phase: float = Field(default=0.0, description="平均RCS相位（弧度）")

    @model_validator(mode="after")
    def validate_role_radius(self) -> "ScattererState":
        """质心角色当且仅当旋转半径为0。"""
        is_centroid = self.role == ScattererRole.CENTROID
        if is_centroid != (self.rotation_radius == 0.0):
            raise ValueError("质心散射点的旋转半径必须为0，其他散射点必须为正")
        return self

    @property
    def mean_rcs(self) -> complex:
        """平均RCS复幅度 σ。"""
        return complex(self.rcs_amplitude * math.cos(self.rcs_phase), self.rcs_amplitude * math.sin(self.rcs_phase))


class TargetState(BaseModel):
    """单个自旋目标。

    Attributes:
        range_m: 质心距离 r⁰（米）
        elevation: 质心俯仰角 θ⁰（弧度）
        azimuth: 质心方位角 φ⁰（弧度）
        speed: 平动速度 v（米/秒）
        direction: 速度与视线夹角 ρ（弧度）
        spin_rate: 自旋角速度 Ω（弧度/秒）
        half_cone_angle: 锥体半角 α（弧度）
        scatterers: 散射点列表
    """

    model_config = ConfigDict(frozen=True)

    range_m: float = Field(..., gt=0.0, description="质心距离（米）")
    elevation: float = Field(..., ge=0.0, le=math.pi, description="俯仰角θ⁰（弧度）")
    azimuth: float = Field(..., ge=0.0, lt=2 * math.pi, description="方位角φ⁰（弧度）")
    speed: float = Field(default=0.0, ge=0.0, description="平动速度v（米/秒）")
    direction: float = Field(default=0.0, description="速度与视线夹角ρ（弧度）")
    spin_rate: float = Field(default=0.0, ge=0.0, description="自旋角速度Ω（弧度/秒）")
    half_cone_angle: float = Field(
        default=math.pi / 6, gt=0.0, lt=math.pi / 2, description="锥体半角α（弧度）"
    )
    scatterers: tuple[ScattererState, ...] = Field(..., min_length=1, description="散射点")

    @field_validator("scatterers")
    @classmethod
    def validate_roles(cls, v: tuple[ScattererState, ...]) -> tuple[ScattererState, ...]:
        """恰好一个质心散射点和一个锥顶散射点。"""
        roles = [s.role for s in v]
        if roles.count(ScattererRole.CENTROID) != 1:
            raise ValueError("目标必须恰好包含一个质心散射点")
        if roles.count(ScattererRole.VERTEX) != 1:
            raise ValueError("目标必须恰好包含一个锥顶散射点")
        return v

    @property
    def centroid(self) -> ScattererState:
        """质心散射点。"""
        return next(s for s in self.scatterers if s.role == ScattererRole.CENTROID)

    @property
    def vertex(self) -> ScattererState:
        """锥顶散射点。"""
        return next(s for s in self.scatterers if s.role == ScattererRole.VERTEX)

    @property
    def vertex_index(self) -> int:
        """锥顶散射点在列表中的位置。"""
        return next(i for i, s in enumerate(self.scatterers) if s.role == ScattererRole.VERTEX)

    @property
    def centroid_index(self) -> int:
        """质心散射点在列表中的位置。"""
        return next(i for i, s in enumerate(self.scatterers) if s.role == ScattererRole.CENTROID)
