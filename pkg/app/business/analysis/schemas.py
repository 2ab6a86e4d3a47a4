"""性能分析的Schema定义：Fisher信息矩阵与通信速率。"""

from typing import Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    model_validator,
)

FisherParameterKind = Literal["range", "elevation", "azimuth", "spin"]
PARAMETER_KINDS: tuple[FisherParameterKind, ...] = ("range", "elevation", "azimuth", "spin")
SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-8


def parameter_names(n_targets: int) -> list[str]:
    """4Q个关键参数的名称，顺序为 (r, θ, φ, Ω) × Q。"""
    return [f"{kind}[{q}]" for q in range(n_targets) for kind in PARAMETER_KINDS]


class FisherMatrix(BaseModel):
    """4Q×4Q 实对称半正定Fisher信息矩阵。"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    names: tuple[str, ...]

    @model_validator(mode="after")
    def validate_matrix(self) -> "FisherMatrix":
        """对称且半正定。"""
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != len(self.names):
            raise ValueError("Fisher矩阵维度与参数名不匹配")
        if not np.all(np.isfinite(m)):
            raise ValueError("Fisher矩阵含非有限元素")
        scale = max(float(np.max(np.abs(m))), np.finfo(np.float64).tiny)
        if np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
            raise ValueError("Fisher矩阵不对称")
        trace = float(np.trace(m))
        if m.size and float(np.linalg.eigvalsh(0.5 * (m + m.T))[0]) < -PSD_RTOL * abs(trace):
            raise ValueError("Fisher矩阵不是半正定")
        return self

    @property
    def size(self) -> int:
        """参数个数4Q。"""
        return self.matrix.shape[0]


class RateReport(BaseModel):
    """通信目标处的SINR与平均速率。

    Attributes:
        sinr: U×W 线性SINR
        average_rate: R_av = (1/U)ΣΣ log₂(1 + SINR)
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sinr: np.ndarray
    average_rate: float

    @model_validator(mode="after")
    def validate_sinr(self) -> "RateReport":
        """SINR非负。"""
        if self.sinr.ndim != 2 or np.any(self.sinr < 0):
            raise ValueError("SINR必须是非负的U×W矩阵")
        return self
