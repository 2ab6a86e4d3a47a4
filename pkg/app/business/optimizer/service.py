"""OAM波束权重的网格搜索优化：在速率约束下最小化 Σ PCRB。

每个候选只需组合预先算好的Fisher信息块与速率系数，不重新合成回波。
"""

import itertools
import math
from functools import reduce
from typing import Iterator

import numpy as np

from app.business.analysis.service import (
    average_rate,
    combine_fisher,
    fisher_blocks,
    pcrb,
    rate_terms,
    sinr_from_terms,
)
from app.business.forward_model.schemas import (
    OamSystemConfig,
    WeightVector,
)
from app.business.forward_model.service import comm_received
from app.business.optimizer.schemas import (
    RATE_TOLERANCE,
    CandidateRecord,
    OptimizationResult,
    SearchMode,
)
from app.business.scene.schemas import TargetState
from app.business.scene.service import scatterer_position
from app.core.config import settings
from app.core.errors import (
    GridBudgetError,
    InfeasibleRateError,
    SingularFisherError,
)
from app.core.logging import logger
from app.core.metrics import (
    optimizer_candidates_total,
    track_stage,
)
from app.utils.rng import spawn_rng

EXHAUSTIVE_MAX_MODES = 6
MAX_SWEEPS = 50
RANDOM_STARTS = 8


def _reduce_levels(levels: tuple[int, ...]) -> tuple[int, ...]:
    divisor = reduce(math.gcd, levels)
    return tuple(n // divisor for n in levels)


def grid_size(n_modes: int, grid_n: int) -> int:
    """完整网格点数 𝔑^U。"""
    return grid_n**n_modes


def weight_grid_levels(n_modes: int, grid_n: int, budget: int | None = None) -> Iterator[tuple[int, ...]]:
    """网格 {1..𝔑}^U 上归一化后互不相同的整数向量（各分量最大公约数为1）。

    Raises:
        ValueError: 𝔑 < 2 或 U < 1
        GridBudgetError: 𝔑^U 超过预算
    """
    if grid_n < 2 or n_modes < 1:
        raise ValueError(f"需要 𝔑 ≥ 2 且 U ≥ 1，当前 𝔑={grid_n}, U={n_modes}")
    limit = settings.GRID_BUDGET if budget is None else budget
    if grid_size(n_modes, grid_n) > limit:
        raise GridBudgetError(
            "穷举网格超出预算，请改用坐标扫描模式",
            grid_points=float(grid_size(n_modes, grid_n)),
            budget=limit,
            hint="mode=coordinate",
        )
    for levels in itertools.product(range(1, grid_n + 1), repeat=n_modes):
        if reduce(math.gcd, levels) == 1:
            yield levels


def weight_grid(n_modes: int, grid_n: int, budget: int | None = None) -> Iterator[WeightVector]:
    """步长 1/𝔑 的权重网格，逐个归一化为单位功率并去重。

    Raises:
        ValueError: 𝔑 < 2 或 U < 1
        GridBudgetError: 𝔑^U 超过预算
    """
    for levels in weight_grid_levels(n_modes, grid_n, budget):
        yield WeightVector.normalized(levels)


class _Evaluator:
    """在固定场景下评估候选权重，结果按约化后的网格向量缓存。"""

    def __init__(
        self,
        blocks: np.ndarray,
        interference: np.ndarray,
        noise: np.ndarray,
        noise_variance: float,
        rate_min: float,
    ):
        self.blocks = blocks
        self.interference = interference
        self.noise = noise
        self.noise_variance = noise_variance
        self.rate_min = rate_min
        self.records: dict[tuple[int, ...], CandidateRecord] = {}

    def __call__(self, levels: tuple[int, ...]) -> CandidateRecord:
        levels = _reduce_levels(levels)
        cached = self.records.get(levels)
        if cached is not None:
            return cached
        weights = WeightVector.normalized(levels)
        try:
            objective = float(np.sum(pcrb(combine_fisher(self.blocks, weights, self.noise_variance))))
        except SingularFisherError:
            objective = math.inf
        rate = average_rate(sinr_from_terms(self.interference, self.noise, weights, self.noise_variance))
        record = CandidateRecord(
            index=len(self.records),
            levels=levels,
            amplitudes=weights.amplitudes,
            objective=objective,
            rate=rate,
            feasible=rate >= self.rate_min - RATE_TOLERANCE,
        )
        self.records[levels] = record
        optimizer_candidates_total.inc()
        return record


def candidate_key(record: CandidateRecord) -> tuple:
    """比较键：可行候选按 (目标值, −速率, 字典序)，不可行候选排在其后并按速率优先。"""
    if record.feasible:
        return (0, record.objective, -record.rate, record.levels)
    return (1, -record.rate, record.objective, record.levels)


def _coordinate_sweep(evaluate: _Evaluator, start: tuple[int, ...], grid_n: int) -> CandidateRecord:
    best = evaluate(start)
    levels = list(best.levels)
    for _ in range(MAX_SWEEPS):
        improved = False
        for u in range(len(levels)):
            for level in range(1, grid_n + 1):
                trial = levels.copy()
                trial[u] = level
                record = evaluate(tuple(trial))
                if candidate_key(record) < candidate_key(best):
                    best, improved = record, True
                    levels = trial
        if not improved:
            break
    return best


def _choose_mode(mode: SearchMode, n_modes: int, grid_n: int) -> str:
    if mode != "auto":
        return mode
    if n_modes <= EXHAUSTIVE_MAX_MODES and grid_size(n_modes, grid_n) <= settings.GRID_BUDGET:
        return "exhaustive"
    return "coordinate"


def optimize_weights(
    cfg: OamSystemConfig,
    targets: list[TargetState],
    comm_target: int,
    rate_min: float,
    grid_n: int,
    fisher_times: np.ndarray | list[float],
    csi_error: float = 0.0,
    seed: int = 0,
    mode: SearchMode = "auto",
) -> OptimizationResult:
    """在 R_av ≥ R_min 与单位功率约束下最小化 Σ_i [J⁻¹]_ii。

    Args:
        cfg: 系统配置（权重被忽略）
        targets: 目标列表
        comm_target: 通信目标下标
        rate_min: 最低平均速率
        grid_n: 网格参数 𝔑
        fisher_times: Fisher信息累加的慢时间时刻
        csi_error: 信道估计相对误差 ε
        seed: 信道估计误差与坐标扫描随机起点的种子
        mode: "exhaustive" 穷举，"coordinate" 坐标扫描，"auto" 按规模选择

    Returns:
        OptimizationResult

    Raises:
        ValueError: R_min < 0 或通信目标越界
        GridBudgetError: 穷举网格超出预算
        InfeasibleRateError: 网格上没有满足速率约束的点
        SingularFisherError: 所有可行点的Fisher矩阵都奇异
    """
    if rate_min < 0:
        raise ValueError(f"R_min 必须非负: {rate_min}")
    if not 0 <= comm_target < len(targets):
        raise ValueError(f"通信目标下标越界: {comm_target}")
    n_modes = cfg.n_modes
    chosen = _choose_mode(mode, n_modes, grid_n)

    with track_stage("optimizer_setup"):
        blocks = fisher_blocks(cfg, targets, fisher_times)
        target = targets[comm_target]
        centroid = tuple(float(v) for v in scatterer_position(target, target.centroid, 0.0))
        link = comm_received(cfg, centroid, csi_error, seed)
        interference, noise = rate_terms(cfg, link.channel, link.estimate)
    evaluate = _Evaluator(blocks, interference, noise, cfg.noise_variance, rate_min)
    baseline = evaluate((1,) * n_modes)

    with track_stage(f"optimizer_{chosen}"):
        if chosen == "exhaustive":
            best = baseline
            for levels in weight_grid_levels(n_modes, grid_n):
                record = evaluate(levels)
                if candidate_key(record) < candidate_key(best):
                    best = record
        else:
            rng = spawn_rng(seed, "optimizer_starts")
            starts = [(1,) * n_modes] + [
                tuple(int(v) for v in rng.integers(1, grid_n + 1, size=n_modes)) for _ in range(RANDOM_STARTS)
            ]
            best = baseline
            for start in starts:
                record = _coordinate_sweep(evaluate, start, grid_n)
                if candidate_key(record) < candidate_key(best):
                    best = record

    records = tuple(evaluate.records.values())
    feasible = sum(1 for r in records if r.feasible)
    if not best.feasible:
        raise InfeasibleRateError(
            "网格上没有满足速率约束的权重",
            rate_min=rate_min,
            best_rate=best.rate,
            rate_gap=rate_min - best.rate,
            best_weights=list(best.amplitudes),
        )
    if not math.isfinite(best.objective):
        raise SingularFisherError("所有可行权重下Fisher矩阵都奇异", feasible=feasible)

    logger.info(
        "weights_optimized",
        mode=chosen,
        evaluated=len(records),
        feasible=feasible,
        objective=best.objective,
        rate=best.rate,
        baseline_objective=baseline.objective,
    )
    return OptimizationResult(
        weights=WeightVector(amplitudes=best.amplitudes),
        levels=best.levels,
        objective=best.objective,
        rate=best.rate,
        rate_min=rate_min,
        evaluated=len(records),
        feasible=feasible,
        mode=chosen,
        baseline_objective=baseline.objective,
        baseline_rate=baseline.rate,
        candidates=records,
    )
