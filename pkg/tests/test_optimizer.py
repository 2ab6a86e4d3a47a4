"""速率约束下权重网格搜索的测试。"""

import itertools
import math

import numpy as np
import pytest
from conftest import (
    cone_target,
    small_config,
)

from app.business.analysis.service import (
    average_rate,
    combine_fisher,
    fisher_blocks,
    pcrb,
    rate_terms,
    sinr_from_terms,
)
from app.business.experiments import (
    fisher_times,
    load_preset,
)
from app.business.forward_model.schemas import WeightVector
from app.business.forward_model.service import comm_received
from app.business.optimizer.schemas import (
    RATE_TOLERANCE,
    CandidateRecord,
)
from app.business.optimizer.service import (
    candidate_key,
    optimize_weights,
    weight_grid,
    weight_grid_levels,
)
from app.business.scene.service import scatterer_position
from app.core.errors import (
    GridBudgetError,
    InfeasibleRateError,
    SingularFisherError,
)

FISHER_TIMES = np.arange(20) / 200.0


def _optimize(rate_min: float, mode: str = "exhaustive", grid_n: int = 3):
    cfg = small_config(noise_variance=0.1, n_modes=4, n_subcarriers=6)
    return optimize_weights(cfg, [cone_target()], 0, rate_min, grid_n, FISHER_TIMES, csi_error=0.05, seed=3, mode=mode)


def test_weight_grid_deduplicates_scaled_vectors():
    """(1,1) 与 (2,2) 归一化后相同，只保留最大公约数为1的向量。"""
    assert len(list(weight_grid_levels(2, 3))) == 7
    assert len(list(weight_grid_levels(3, 2))) == 7
    for w in weight_grid(3, 3):
        assert math.fsum(a * a for a in w.amplitudes) == pytest.approx(1.0)


def test_weight_grid_budget_and_arguments():
    """网格点数超出预算或参数无效时报错。"""
    with pytest.raises(GridBudgetError) as exc_info:
        list(weight_grid_levels(4, 3, budget=10))
    assert exc_info.value.details["hint"] == "mode=coordinate"
    with pytest.raises(ValueError):
        list(weight_grid_levels(3, 1))


def test_candidate_key_prefers_feasible_then_objective():
    """可行候选优先，其次目标值更小、速率更高。"""

    def record(objective, rate, feasible, levels=(1, 1)):
        return CandidateRecord(0, levels, (0.0, 0.0), objective, rate, feasible)

    ordered = sorted(
        [record(1.0, 9.0, False), record(2.0, 1.0, True), record(1.0, 1.0, True), record(1.0, 2.0, True)],
        key=candidate_key,
    )
    assert [(c.objective, c.rate, c.feasible) for c in ordered] == [
        (1.0, 2.0, True),
        (1.0, 1.0, True),
        (2.0, 1.0, True),
        (1.0, 9.0, False),
    ]


def test_exhaustive_finds_grid_minimum():
    """无速率约束时穷举结果是全部候选中目标值最小的点。"""
    result = _optimize(rate_min=0.0)
    assert result.mode == "exhaustive"
    assert result.evaluated == 3**4 - 2
    assert result.feasible == result.evaluated
    best = min(c.objective for c in result.candidates if math.isfinite(c.objective))
    assert result.objective == best
    assert result.objective <= result.baseline_objective


def test_rate_constraint_is_respected():
    """速率下限取等功率速率时，最优解满足约束且不劣于等功率。"""
    free = _optimize(rate_min=0.0)
    result = _optimize(rate_min=free.baseline_rate)
    assert result.rate >= free.baseline_rate - 1e-9
    assert result.objective <= result.baseline_objective
    for c in result.candidates:
        if c.feasible:
            assert c.objective >= result.objective


def test_infeasible_rate_reports_gap():
    """网格上没有可行点时报错并给出速率差距。"""
    with pytest.raises(InfeasibleRateError) as exc_info:
        _optimize(rate_min=1e6)
    details = exc_info.value.details
    assert details["rate_gap"] == pytest.approx(1e6 - details["best_rate"])
    assert details["rate_gap"] > 0


def test_coordinate_sweep_improves_on_baseline():
    """坐标扫描不劣于等功率起点，结果可复现。"""
    a = _optimize(rate_min=0.0, mode="coordinate")
    b = _optimize(rate_min=0.0, mode="coordinate")
    assert a.mode == "coordinate"
    assert a.objective <= a.baseline_objective
    assert a.levels == b.levels
    assert a.evaluated <= 3**4


def test_optimize_rejects_bad_arguments():
    """R_min 为负或通信目标越界时报错。"""
    cfg = small_config(noise_variance=0.1, n_modes=4, n_subcarriers=6)
    with pytest.raises(ValueError):
        optimize_weights(cfg, [cone_target()], 0, -1.0, 3, FISHER_TIMES)
    with pytest.raises(ValueError):
        optimize_weights(cfg, [cone_target()], 1, 0.0, 3, FISHER_TIMES)


def _rescan_minimum(cfg, targets, rate_min: float, grid_n: int, csi_error: float, seed: int) -> float:
    """独立重扫 𝔑^U 全网格（含倍数重复的点）得到的可行最小 Σ PCRB。"""
    blocks = fisher_blocks(cfg, targets, FISHER_TIMES)
    centroid = tuple(float(v) for v in scatterer_position(targets[0], targets[0].centroid, 0.0))
    link = comm_received(cfg, centroid, csi_error, seed)
    interference, noise = rate_terms(cfg, link.channel, link.estimate)
    best = math.inf
    for levels in itertools.product(range(1, grid_n + 1), repeat=cfg.n_modes):
        weights = WeightVector.normalized(levels)
        rate = average_rate(sinr_from_terms(interference, noise, weights, cfg.noise_variance))
        if rate < rate_min - RATE_TOLERANCE:
            continue
        try:
            objective = float(np.sum(pcrb(combine_fisher(blocks, weights, cfg.noise_variance))))
        except SingularFisherError:
            continue
        best = min(best, objective)
    return best


def _random_target(rng: np.random.Generator):
    return cone_target(
        range_m=float(rng.uniform(40.0, 120.0)),
        elevation_deg=float(rng.uniform(15.0, 75.0)),
        azimuth_deg=float(rng.uniform(0.0, 359.0)),
        spin_rate=float(rng.uniform(4.0, 12.0)) * math.pi,
    )


@pytest.mark.slow
def test_exhaustive_matches_independent_rescan():
    """U = 4、𝔑 = 6 的100个随机场景，穷举结果都等于独立重扫的可行最小值。"""
    cfg = small_config(noise_variance=0.05, n_modes=4, n_subcarriers=6)
    rng = np.random.default_rng(99)
    for scene in range(100):
        targets = [_random_target(rng)]
        free = optimize_weights(cfg, targets, 0, 0.0, 6, FISHER_TIMES, csi_error=0.05, seed=scene, mode="exhaustive")
        rate_min = 0.9 * free.baseline_rate
        result = optimize_weights(
            cfg, targets, 0, rate_min, 6, FISHER_TIMES, csi_error=0.05, seed=scene, mode="exhaustive"
        )
        expected = _rescan_minimum(cfg, targets, rate_min, 6, 0.05, scene)
        assert result.objective == pytest.approx(expected, rel=1e-9), scene
        assert result.rate >= rate_min - RATE_TOLERANCE


@pytest.mark.slow
@pytest.mark.parametrize("rate_min", [6.0, 7.0])
def test_three_cone_weights_beat_equal_power(rate_min):
    """内置场景 U = 16、𝔑 = 10、15 dB：优化后的 Σ PCRB 低于等功率且满足速率约束。"""
    config = load_preset("paper-sec5")
    cfg = config.system_config(15.0)
    times = fisher_times(config)[::100]
    result = optimize_weights(
        cfg, config.target_states(), 0, rate_min, 10, times, csi_error=config.comm.csi_error, seed=config.seed
    )
    assert result.mode == "coordinate"
    assert result.rate >= rate_min - RATE_TOLERANCE
    assert result.objective < result.baseline_objective
