"""Fisher信息、PCRB与通信速率的测试。"""

import math

import numpy as np
import pytest
from conftest import (
    cone_target,
    small_config,
)
from pydantic import ValidationError

from app.business.analysis.schemas import (
    FisherMatrix,
    parameter_names,
)
from app.business.analysis.service import (
    SINR_CAP,
    average_rate,
    combine_fisher,
    fisher_blocks,
    fisher_matrix,
    key_parameters,
    partial_p,
    pcrb,
    rate_report,
    rate_terms,
    signal_model,
    sinr,
    sinr_from_terms,
    snapshot_fisher,
)
from app.business.forward_model.schemas import WeightVector
from app.business.forward_model.service import (
    channel_matrix,
    comm_received,
    draw_symbols,
    echo_cube,
    equivalent_channel,
    psk_symbol,
    zero_forcing_matrices,
)
from app.core.errors import (
    RankDeficientChannelError,
    SingularFisherError,
)
from app.utils.rng import complex_normal

FISHER_TIMES = np.arange(20) / 200.0
STEPS = {"range": 1e-6, "elevation": 1e-7, "azimuth": 1e-7, "spin": 1e-5}


def test_parameter_names():
    """每个目标4个关键参数，按目标顺序排列。"""
    assert parameter_names(2) == [
        "range[0]",
        "elevation[0]",
        "azimuth[0]",
        "spin[0]",
        "range[1]",
        "elevation[1]",
        "azimuth[1]",
        "spin[1]",
    ]


def test_signal_model_matches_echo(target):
    """无噪声信号模型等于 gain·A_u 乘补偿后的固定RCS回波。"""
    cfg = small_config()
    cube = echo_cube(cfg, [target], 0.0, 1000.0, 1, seed=0, rcs_model="fixed")
    expected = cfg.gain * cfg.weight_array[:, None] * cube.data[:, :, 0, 0]
    np.testing.assert_allclose(signal_model(cfg, [target], 0.0), expected, rtol=1e-9)


@pytest.mark.parametrize("kind, offset", [("range", 0), ("elevation", 1), ("azimuth", 2), ("spin", 3)])
def test_partial_matches_finite_difference(target, kind, offset):
    """闭式偏导与信号模型的中心差分一致。"""
    cfg = small_config()
    t = 0.013
    base = key_parameters([target], t)
    h = STEPS[kind]
    plus, minus = base.copy(), base.copy()
    plus[offset] += h
    minus[offset] -= h
    numeric = (signal_model(cfg, [target], t, plus) - signal_model(cfg, [target], t, minus)) / (2 * h)
    scale = float(np.max(np.abs(numeric)))
    for u, w in [(0, 0), (3, 5), (7, 7), (4, 2)]:
        analytic = partial_p(cfg, [target], 0, kind, u, w, t)
        assert abs(analytic - numeric[u, w]) <= 1e-5 * scale


def test_fisher_matrix_symmetric_psd(target):
    """Fisher矩阵对称半正定，维度为4Q。"""
    cfg = small_config(noise_variance=0.1)
    fisher = fisher_matrix(cfg, [target, cone_target(range_m=80.0, azimuth_deg=200.0)], FISHER_TIMES)
    assert fisher.size == 8
    np.testing.assert_allclose(fisher.matrix, fisher.matrix.T, rtol=1e-12)
    assert np.min(np.linalg.eigvalsh(fisher.matrix)) >= -1e-8 * np.trace(fisher.matrix)


def test_fisher_blocks_chunking_is_stable(target):
    """并行分块求和与单线程结果一致。"""
    cfg = small_config()
    a = fisher_blocks(cfg, [target], FISHER_TIMES, max_workers=1)
    b = fisher_blocks(cfg, [target], FISHER_TIMES, max_workers=3)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_pcrb_scales_with_noise(target):
    """噪声方差减半，PCRB减半。"""
    cfg = small_config()
    blocks = fisher_blocks(cfg, [target], FISHER_TIMES)
    weights = WeightVector.equal(cfg.n_modes)
    high = pcrb(combine_fisher(blocks, weights, 0.2))
    low = pcrb(combine_fisher(blocks, weights, 0.1))
    np.testing.assert_allclose(low, high / 2, rtol=1e-9)
    assert np.all(high > 0)


def test_pcrb_diagonal_and_lower_bound():
    """对角矩阵的PCRB为倒数，一般情况下 [J⁻¹]_ii ≥ 1/J_ii。"""
    np.testing.assert_allclose(pcrb(np.diag([2.0, 4.0, 0.5])), [0.5, 0.25, 2.0])
    rng = np.random.default_rng(4)
    a = rng.standard_normal((5, 5))
    spd = a @ a.T + 0.5 * np.eye(5)
    assert np.all(pcrb(spd) >= 1.0 / np.diag(spd) - 1e-12)


def test_pcrb_singular():
    """秩亏或某个参数信息为0时报错并列出不可辨识的参数。"""
    with pytest.raises(SingularFisherError) as exc_info:
        pcrb(np.array([[1.0, 1.0], [1.0, 1.0]]), ["a", "b"])
    assert exc_info.value.details["unidentifiable"] == [["a", "b"]]
    with pytest.raises(SingularFisherError):
        pcrb(np.diag([1.0, 0.0]))


def test_pcrb_single_instant_is_singular(target):
    """只在 t = 0 累加时转速信息为0。"""
    cfg = small_config(noise_variance=0.1)
    with pytest.raises(SingularFisherError):
        pcrb(fisher_matrix(cfg, [target], [0.0]))


def test_combine_fisher_rejects_zero_noise(target):
    """ξ² ≤ 0 时报错。"""
    cfg = small_config()
    blocks = fisher_blocks(cfg, [target], FISHER_TIMES[:2])
    with pytest.raises(SingularFisherError):
        combine_fisher(blocks, cfg.weights, 0.0)


def test_fisher_matrix_validation():
    """非对称矩阵不是合法的Fisher矩阵。"""
    with pytest.raises(ValidationError):
        FisherMatrix(matrix=np.array([[1.0, 2.0], [0.0, 1.0]]), names=("a", "b"))


def test_average_rate():
    """R_av = (1/U)ΣΣ log₂(1 + SINR)。"""
    assert average_rate(np.zeros((4, 6))) == 0.0
    assert average_rate(np.ones((4, 6))) == pytest.approx(6.0)
    assert average_rate(np.full((2, 3), 3.0)) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        average_rate(np.array([[-1.0]]))


def test_sinr_without_channel_error():
    """信道估计无误差时没有干扰项，SINR = A²/(ξ²·N)。"""
    weights = WeightVector.equal(4)
    grid = sinr_from_terms(np.zeros((4, 3)), np.ones((4, 3)), weights, 0.1)
    np.testing.assert_allclose(grid, 2.5)
    capped = sinr_from_terms(np.zeros((4, 3)), np.ones((4, 3)), weights, 0.0)
    np.testing.assert_allclose(capped, SINR_CAP)


def test_rate_terms_perfect_estimate():
    """Ĥ = H 时干扰系数为0，噪声系数为 1/|HF|²。"""
    cfg = small_config(noise_variance=0.01)
    h = channel_matrix(cfg, (60.0, math.radians(30.0), math.radians(45.0)))
    interference, noise = rate_terms(cfg, h, h)
    np.testing.assert_allclose(interference, 0.0, atol=1e-20)
    np.testing.assert_allclose(noise, 1.0 / np.abs(equivalent_channel(cfg, h).T) ** 2)
    report = rate_report(cfg, h, h)
    assert report.sinr.shape == (cfg.n_modes, cfg.n_subcarriers)
    assert report.average_rate == pytest.approx(average_rate(report.sinr))


def test_rate_decreases_with_channel_error():
    """信道估计误差引入干扰，速率下降。"""
    cfg = small_config(noise_variance=1e-4)
    h = channel_matrix(cfg, (60.0, math.radians(30.0), math.radians(45.0)))
    noisy = h * (1 + 0.1 * np.exp(1j * np.linspace(0, 3, h.size)).reshape(h.shape))
    assert rate_report(cfg, h, noisy).average_rate < rate_report(cfg, h, h).average_rate


def test_rate_terms_rank_deficient():
    """信道估计为0时报错。"""
    cfg = small_config()
    h = channel_matrix(cfg, (60.0, 0.5, 0.5))
    with pytest.raises(RankDeficientChannelError):
        rate_terms(cfg, h, np.zeros_like(h))


def test_rate_terms_symmetric_geometry_is_rank_deficient():
    """M = 8、φ = 45° 且 k·R·sinθ 为2π整数倍时，ℓ = ±2 的等效信道为0。"""
    cfg = small_config(n_modes=6, n_subcarriers=6, n_tx=8, n_rx=8)
    h = channel_matrix(cfg, (60.0, math.radians(30.0), math.radians(45.0)))
    gains = np.abs(equivalent_channel(cfg, h))
    assert gains[0, list(cfg.modes).index(2)] < 1e-12 * gains.max()
    with pytest.raises(RankDeficientChannelError) as exc_info:
        rate_terms(cfg, h, h)
    assert [2, 0] in exc_info.value.details["deficient"]

    shifted = channel_matrix(cfg, (60.0, math.radians(30.0), math.radians(40.0)))
    interference, _ = rate_terms(cfg, shifted, shifted)
    np.testing.assert_allclose(interference, 0.0, atol=1e-20)


def test_snapshot_fisher_properties():
    """快拍信息矩阵对称半正定、跨目标为0，且与 L/ξ² 成正比。"""
    cfg = small_config(noise_variance=0.01)
    targets = [cone_target(), cone_target(range_m=75.0, elevation_deg=50.0, azimuth_deg=200.0)]
    matrix = snapshot_fisher(cfg, targets, 10)
    assert matrix.shape == (6, 6)
    np.testing.assert_allclose(matrix, matrix.T)
    assert np.min(np.linalg.eigvalsh(matrix)) > -1e-9 * np.max(np.diag(matrix))
    np.testing.assert_array_equal(matrix[:3, 3:], 0.0)
    np.testing.assert_allclose(snapshot_fisher(cfg, targets, 20), 2 * matrix)
    np.testing.assert_allclose(snapshot_fisher(small_config(noise_variance=0.02), targets, 10), matrix / 2)
    assert np.all(pcrb(matrix) > 0)


def test_snapshot_fisher_rejects_zero_noise(target):
    """ξ² 为0时报错。"""
    with pytest.raises(SingularFisherError):
        snapshot_fisher(small_config(), [target], 10)


def test_zero_forcing_sinr_matches_monte_carlo():
    """10⁵ 次符号与噪声抽样的检测误差给出的SINR与解析值相差5%以内。"""
    cfg = small_config(noise_variance=1e-3)
    link = comm_received(cfg, (60.0, math.radians(30.0), math.radians(40.0)), csi_error=0.05, seed=4)
    analytic = sinr(cfg, link.channel, link.estimate)

    rng = np.random.default_rng(17)
    detectors = zero_forcing_matrices(cfg, link.estimate)
    gains = equivalent_channel(cfg, link.channel).T
    error_power = np.zeros((cfg.n_modes, cfg.n_subcarriers))
    shape = (10_000, cfg.n_modes, cfg.n_subcarriers)
    for _ in range(10):
        sent = cfg.weight_array[:, None] * psk_symbol(draw_symbols(rng, shape, cfg.psk_order), cfg.psk_order)
        received = gains * sent + complex_normal(rng, shape, cfg.noise_variance)
        detected = np.einsum("wuv,nvw->nuw", detectors, received)
        error_power += np.sum(np.abs(detected - sent) ** 2, axis=0)
    error_power /= 100_000
    empirical = (cfg.weight_array**2)[:, None] / error_power
    np.testing.assert_allclose(empirical, analytic, rtol=0.05)
