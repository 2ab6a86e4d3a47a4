"""OAM波束权重优化：速率约束下最小化 Σ PCRB。"""

from app.business.optimizer.schemas import (
    CandidateRecord,
    OptimizationResult,
)
from app.business.optimizer.service import (
    candidate_key,
    grid_size,
    optimize_weights,
    weight_grid,
    weight_grid_levels,
)

__all__ = [
    "CandidateRecord",
    "OptimizationResult",
    "candidate_key",
    "grid_size",
    "optimize_weights",
    "weight_grid",
    "weight_grid_levels",
]
