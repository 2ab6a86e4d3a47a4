"""权重优化的Schema定义。"""

import math
from typing import (
    Literal,
    NamedTuple,
)

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    model_validator,
)

from app.business.forward_model.schemas import WeightVector

RATE_TOLERANCE = 1e-9
SearchMode = Literal["auto", "exhaustive", "coordinate"]


class CandidateRecord(NamedTuple):
    """一个被评估的候选权重。"""

    index: int
    levels: tuple[int, ...]
    amplitudes: tuple[float, ...]
    objective: float
    rate: float
    feasible: bool


class OptimizationResult(BaseModel):
    """权重优化结果。

    Attributes:
        weights: 最优权重
        levels: 最优权重对应的网格整数 𝔫
        objective: Σ PCRB
        rate: 达到的平均速率
        rate_min: 速率约束
        evaluated: 评估的候选数
        feasible: 可行候选数
        mode: 实际使用的搜索方式
        baseline_objective: 等功率权重的 Σ PCRB
        baseline_rate: 等功率权重的平均速率
        candidates: 全部候选记录（按评估顺序）
    """

    model_config = ConfigDict(frozen=True)

    weights: WeightVector
    levels: tuple[int, ...]
    objective: float
    rate: float
    rate_min: float = Field(..., ge=0.0)
    evaluated: int = Field(..., ge=1)
    feasible: int = Field(..., ge=1)
    mode: Literal["exhaustive", "coordinate"]
    baseline_objective: float
    baseline_rate: float
    candidates: tuple[CandidateRecord, ...] = Field(default=(), repr=False)

    @model_validator(mode="after")
    def validate_constraint(self) -> "OptimizationResult":
        """最优权重满足速率约束。"""
        if self.rate < self.rate_min - RATE_TOLERANCE:
            raise ValueError("最优权重不满足速率约束")
        if not math.isfinite(self.objective):
            raise ValueError("最优目标值必须有限")
        return self
