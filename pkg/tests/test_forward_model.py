"""正向模型：发射场、回波立方体与通信链路的测试。"""

import math

import numpy as np
import pytest
from conftest import (
    cone_target,
    small_config,
)
from pydantic import ValidationError

from app.business.forward_model.schemas import (
    OamSystemConfig,
    WeightVector,
)
from app.business.forward_model.service import (
    channel_matrix,
    comm_received,
    compensate,
    echo_cube,
    echo_matrix,
    element_signal,
    element_sum_field,
    transmit_field,
    zero_forcing_detect,
)
from app.business.scene.schemas import (
    ScattererRole,
    ScattererState,
    TargetState,
)
from app.core.errors import (
    ForwardModelError,
    RankDeficientChannelError,
)
from app.core.numerics import bessel_j


def test_weight_vector_power():
    """权重非负且总功率为1。"""
    w = WeightVector.normalized([1, 2, 2])
    assert math.fsum(a * a for a in w.amplitudes) == pytest.approx(1.0, abs=1e-15)
    assert len(WeightVector.equal(5)) == 5
    with pytest.raises(ValidationError):
        WeightVector(amplitudes=(0.5, 0.5))
    with pytest.raises(ValidationError):
        WeightVector(amplitudes=(-0.6, 0.8))
    with pytest.raises(ValueError):
        WeightVector.normalized([0.0, 0.0])


def test_system_config_validation():
    """模态连续、波数步长为1、PSK阶数为2的幂、U ≤ M。"""
    base = dict(n_tx=8, n_rx=8, radius=0.9, modes=(-1, 0, 1), wavenumbers=(209.0, 210.0))
    assert OamSystemConfig(**base).weights == WeightVector.equal(3)
    for bad in (
        {"modes": (-1, 1, 2)},
        {"wavenumbers": (209.0, 211.0)},
        {"psk_order": 6},
        {"n_tx": 2},
        {"weights": WeightVector.equal(2)},
    ):
        with pytest.raises(ValidationError):
            OamSystemConfig(**{**base, **bad})


def test_element_signal():
    """第0个阵元位于 φ = 0，信号为 A_u·e^{iφ_p}。"""
    cfg = small_config()
    amp = cfg.weight_array[2]
    assert element_signal(cfg, 2, 0, 0, 0) == pytest.approx(amp)
    assert element_signal(cfg, 2, 0, 0, 1) == pytest.approx(amp * 1j)
    m = 3
    expected = amp * np.exp(1j * cfg.modes[2] * 2 * math.pi * m / cfg.n_tx)
    assert element_signal(cfg, 2, 0, m, 0) == pytest.approx(expected)
    with pytest.raises(ForwardModelError):
        element_signal(cfg, 2, 0, cfg.n_tx, 0)


def test_transmit_field_matches_element_sum():
    """远场闭式场强与逐阵元求和一致。"""
    cfg = small_config(n_modes=6, n_subcarriers=1, n_tx=128, n_rx=128)
    point = (1e5, math.radians(25.0), math.radians(70.0))
    x = cfg.wavenumbers[0] * cfg.radius * math.sin(point[1])
    envelope = cfg.gain * cfg.weight_array[0] * cfg.n_tx / point[0] * math.sqrt(2 / (math.pi * x))
    for u in range(cfg.n_modes):
        closed = transmit_field(cfg, point, u, 0, symbol=1)
        summed = element_sum_field(cfg, point, u, 0, symbol=1)
        assert abs(closed - summed) < 1e-2 * envelope


def test_transmit_field_rejects_near_field():
    """r ≤ 20R 的观测点报错。"""
    cfg = small_config()
    with pytest.raises(ForwardModelError):
        transmit_field(cfg, (5.0, 0.5, 0.5), 0, 0)


def test_compensation_recovers_noise_free_echo(target):
    """补偿后的无噪声回波与固定RCS立方体的样本一致。"""
    cfg = small_config()
    rng = np.random.default_rng(5)
    symbols = rng.integers(0, cfg.psk_order, size=(cfg.n_modes, cfg.n_subcarriers))
    raw = echo_matrix(cfg, [target], 0.0, symbols=symbols)
    cube = echo_cube(cfg, [target], 0.0, 1000.0, 1, seed=0, rcs_model="fixed")
    np.testing.assert_allclose(compensate(cfg, raw, symbols), cube.data[:, :, 0, 0], rtol=1e-10)


def test_single_scatterer_echo_closed_form():
    """单个静止散射点的补偿回波为 σ·e^{i2kr}/r²·e^{iℓφ}·J_ℓ·J_0。"""
    cfg = small_config()
    tgt = cone_target(vertex_rcs=0.0, spin_rate=0.0)
    r, theta, phi = 60.0, math.radians(30.0), math.radians(45.0)
    cube = echo_cube(cfg, [tgt], 0.0, 1000.0, 1, seed=0, rcs_model="fixed")
    k = cfg.wavenumber_array[None, :]
    ell = cfg.mode_array[:, None]
    x = k * cfg.radius * math.sin(theta)
    expected = np.exp(2j * k * r) / r**2 * np.exp(1j * ell * phi) * bessel_j(ell, x) * bessel_j(0, x)
    np.testing.assert_allclose(cube.data[:, :, 0, 0], expected, rtol=1e-9, atol=1e-15)


def test_echo_cube_shape_and_determinism(target):
    """立方体维度为 U×W×N_t×L，相同种子得到相同样本。"""
    cfg = small_config(noise_variance=0.01)
    a = echo_cube(cfg, [target], 0.05, 200.0, 4, seed=42)
    b = echo_cube(cfg, [target], 0.05, 200.0, 4, seed=42)
    c = echo_cube(cfg, [target], 0.05, 200.0, 4, seed=43)
    assert a.shape == (8, 8, 10, 4)
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.allclose(a.data, c.data)
    np.testing.assert_allclose(a.times, np.arange(10) / 200.0)


def test_echo_cube_zero_duration_single_sample(target):
    """观测时长为0时只有 t = 0 一个样本。"""
    cube = echo_cube(small_config(), [target], 0.0, 4000.0, 3, seed=1)
    assert cube.shape == (8, 8, 1, 3)


def test_echo_cube_rejects_near_field():
    """散射点进入近场时报错。"""
    close = cone_target(range_m=5.0)
    with pytest.raises(ForwardModelError):
        echo_cube(small_config(), [close], 0.0, 1000.0, 1, seed=0)


def test_echo_cube_rejects_bad_parameters(target):
    """快拍数、采样率或时长无效时报错。"""
    with pytest.raises(ForwardModelError):
        echo_cube(small_config(), [target], 0.0, 1000.0, 0, seed=0)
    with pytest.raises(ForwardModelError):
        echo_cube(small_config(), [target], -1.0, 1000.0, 1, seed=0)


def test_channel_matrix_magnitude():
    """|h_m(k_w)| = β/(2k_w r)，形状 W×M。"""
    cfg = small_config()
    centroid = (60.0, math.radians(30.0), math.radians(45.0))
    h = channel_matrix(cfg, centroid)
    assert h.shape == (cfg.n_subcarriers, cfg.n_tx)
    expected = cfg.comm_gain / (2 * cfg.wavenumber_array * 60.0)
    np.testing.assert_allclose(np.abs(h), np.repeat(expected[:, None], cfg.n_tx, axis=1))


def test_zero_forcing_recovers_symbols():
    """完美信道估计、无噪声时迫零检测恢复 A·S。"""
    cfg = small_config()
    centroid = (60.0, math.radians(30.0), math.radians(45.0))
    link = comm_received(cfg, centroid, csi_error=0.0, seed=9)
    detected = zero_forcing_detect(cfg, link)
    expected = cfg.weight_array[:, None] * np.exp(2j * np.pi * link.symbols / cfg.psk_order)
    np.testing.assert_allclose(detected, expected, atol=1e-8)


def test_comm_received_validation():
    """信道误差为负时报错，相同种子的信道估计一致。"""
    cfg = small_config(noise_variance=0.1)
    centroid = (60.0, math.radians(30.0), math.radians(45.0))
    with pytest.raises(ForwardModelError):
        comm_received(cfg, centroid, csi_error=-0.1, seed=0)
    a = comm_received(cfg, centroid, csi_error=0.05, seed=3)
    b = comm_received(cfg, centroid, csi_error=0.05, seed=3)
    np.testing.assert_array_equal(a.estimate, b.estimate)
    np.testing.assert_array_equal(a.received, b.received)
    assert not np.allclose(a.estimate, a.channel)


def test_zero_forcing_rank_deficient():
    """等效信道为0时报错。"""
    cfg = small_config()
    link = comm_received(cfg, (60.0, 0.5, 0.5), csi_error=0.0, seed=0)
    broken = link.model_copy(update={"estimate": np.zeros_like(link.estimate)})
    with pytest.raises(RankDeficientChannelError):
        zero_forcing_detect(cfg, broken)


def test_scatterer_roles_in_cube():
    """RCS为0的散射点对回波没有贡献。"""
    cfg = small_config()
    centroid_only = TargetState(
        range_m=60.0,
        elevation=0.5,
        azimuth=0.8,
        spin_rate=4.0,
        scatterers=(
            ScattererState(role=ScattererRole.CENTROID),
            ScattererState(role=ScattererRole.VERTEX, rotation_radius=0.5, rcs_amplitude=0.0),
        ),
    )
    moving = echo_cube(cfg, [centroid_only], 0.1, 100.0, 1, seed=0, rcs_model="fixed")
    # 只剩静止质心，慢时间上不变
    np.testing.assert_allclose(moving.data, np.repeat(moving.data[:, :, :1], 10, axis=2), rtol=1e-12)
