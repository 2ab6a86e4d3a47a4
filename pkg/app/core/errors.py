"""实验室的错误层次结构。

每个错误类都带有机器可读的code和进程退出码，命令行据此输出错误JSON并退出。
"""

from typing import Any


class OamLabError(Exception):
    """所有实验室错误的基类。"""

    code = "oam_lab_error"
    exit_code = 1

    def __init__(self, message: str, **details: Any):
        """初始化错误。

        Args:
            message: 人类可读的错误描述
            **details: 附加的结构化上下文
        """
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        """转换为错误JSON。"""
        return {
            "error": self.code,
            "exit_code": self.exit_code,
            "message": self.message,
            "details": self.details,
        }


class NumericsDomainError(OamLabError, ValueError):
    """数值核函数的输入超出定义域。"""

    code = "numerics_domain"
    exit_code = 10


class SceneGeometryError(OamLabError, ValueError):
    """目标几何或运动学无效。"""

    code = "scene_geometry"
    exit_code = 11


class ForwardModelError(OamLabError, ValueError):
    """回波或通信链路合成失败。"""

    code = "forward_model"
    exit_code = 12


class ImagingError(OamLabError, ValueError):
    """MUSIC成像失败。"""

    code = "imaging"
    exit_code = 13


class DopplerError(OamLabError, ValueError):
    """时频处理或转速估计失败。"""

    code = "doppler"
    exit_code = 14


class SingularFisherError(OamLabError, ArithmeticError):
    """Fisher信息矩阵奇异，存在不可辨识的参数组合。"""

    code = "singular_fisher"
    exit_code = 15


class RankDeficientChannelError(OamLabError, ArithmeticError):
    """等效信道ĤF列不满秩。"""

    code = "rank_deficient_channel"
    exit_code = 16


class GridBudgetError(OamLabError, ValueError):
    """穷举权重网格超出预算。"""

    code = "grid_budget"
    exit_code = 17


class InfeasibleRateError(OamLabError):
    """网格上没有满足最低速率的权重。"""

    code = "infeasible_rate"
    exit_code = 18


class ConfigParseError(OamLabError, ValueError):
    """场景文件无法解析。"""

    code = "config_parse"
    exit_code = 20


class ConfigValidationError(OamLabError, ValueError):
    """场景文件违反了某个不变量。"""

    code = "config_validation"
    exit_code = 21
