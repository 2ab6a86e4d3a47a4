"""发射信号、远场场强、雷达回波和通信链路的合成。

合成函数在给定 (配置, 目标, 种子) 时是纯函数。
"""

from typing import Literal

import numpy as np

from app.business.forward_model.config import forward_config
from app.business.forward_model.schemas import (
    CommLink,
    EchoCube,
    OamSystemConfig,
)
from app.business.scene.schemas import TargetState
from app.business.scene.service import (
    cartesian_to_spherical,
    scatterer_cartesian,
    spherical_to_cartesian,
)
from app.core.errors import (
    ForwardModelError,
    RankDeficientChannelError,
)
from app.core.logging import logger
from app.core.numerics import (
    bessel_j,
    pseudo_inverse,
)
from app.utils.rng import (
    complex_normal,
    spawn_rng,
)

RANK_TOLERANCE = 1e-12


def psk_symbol(index: np.ndarray | int, order: int) -> np.ndarray | complex:
    """PSK符号 e^{i2πp/M_p}。"""
    value = np.exp(2j * np.pi * np.asarray(index) / order)
    return complex(value) if np.ndim(value) == 0 else value


def draw_symbols(rng: np.random.Generator, shape: tuple[int, ...], order: int) -> np.ndarray:
    """均匀抽取PSK符号索引。"""
    return rng.integers(0, order, size=shape)


def mode_twist(modes: np.ndarray) -> np.ndarray:
    """i^{ℓ}，对负模态同样成立。"""
    return np.exp(0.5j * np.pi * np.asarray(modes))


def _check_index(name: str, index: int, size: int) -> None:
    if not 0 <= index < size:
        raise ForwardModelError(f"{name} 索引越界", index=index, size=size)


def _check_far_field(cfg: OamSystemConfig, r: np.ndarray | float) -> None:
    limit = forward_config.FAR_FIELD_FACTOR * cfg.radius
    if np.any(np.asarray(r) <= limit):
        raise ForwardModelError("观测点不在远场区", min_range=float(np.min(r)), limit=limit)


def element_signal(cfg: OamSystemConfig, u: int, w: int, m: int, symbol: int) -> complex:
    """第m个发射阵元在模态u、子载波w上的基带信号 A_u·e^{iℓ_uφ_m}·e^{iφ_p}。

    索引从0开始，第0个阵元位于 φ_m = 0。

    Raises:
        ForwardModelError: 索引越界
    """
    _check_index("mode", u, cfg.n_modes)
    _check_index("subcarrier", w, cfg.n_subcarriers)
    _check_index("element", m, cfg.n_tx)
    _check_index("symbol", symbol, cfg.psk_order)
    phase_m = cfg.element_angles[m]
    return complex(cfg.weight_array[u] * np.exp(1j * cfg.modes[u] * phase_m) * psk_symbol(symbol, cfg.psk_order))


def transmit_field(
    cfg: OamSystemConfig, point: tuple[float, float, float], u: int, w: int, symbol: int = 0
) -> complex:
    """远场闭式场强 −gain·A_u·M·e^{ikr}e^{iℓφ}/r·i^{−ℓ}·J_ℓ(kR sinθ)·s。

    Raises:
        ForwardModelError: 近场点或索引越界
    """
    _check_index("mode", u, cfg.n_modes)
    _check_index("subcarrier", w, cfg.n_subcarriers)
    r, theta, phi = point
    _check_far_field(cfg, r)
    ell, k = cfg.modes[u], cfg.wavenumbers[w]
    value = (
        -cfg.gain
        * cfg.weight_array[u]
        * cfg.n_tx
        * np.exp(1j * k * r)
        * np.exp(1j * ell * phi)
        / r
        * np.exp(-0.5j * np.pi * ell)
        * bessel_j(ell, k * cfg.radius * np.sin(theta))
        * psk_symbol(symbol, cfg.psk_order)
    )
    return complex(value)


def element_sum_field(
    cfg: OamSystemConfig, point: tuple[float, float, float], u: int, w: int, symbol: int = 0
) -> complex:
    """逐阵元求和的场强，使用精确的阵元到观测点距离。"""
    _check_index("mode", u, cfg.n_modes)
    _check_index("subcarrier", w, cfg.n_subcarriers)
    k = cfg.wavenumbers[w]
    target = spherical_to_cartesian(*point)
    angles = cfg.element_angles
    elements = cfg.radius * np.stack([np.cos(angles), np.sin(angles), np.zeros_like(angles)], axis=-1)
    dist = np.linalg.norm(target[None, :] - elements, axis=-1)
    excitation = cfg.weight_array[u] * np.exp(1j * cfg.modes[u] * angles) * psk_symbol(symbol, cfg.psk_order)
    return complex(-cfg.gain * np.sum(excitation * np.exp(1j * k * dist) / dist))


def _scene_geometry(targets: list[TargetState], times: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """所有散射点在各时刻的球坐标，形状 S×N_t。"""
    rows = [scatterer_cartesian(tgt, s, times) for tgt in targets for s in tgt.scatterers]
    if not rows:
        empty = np.zeros((0, times.size))
        return empty, empty, empty
    return cartesian_to_spherical(np.stack(rows))


def mean_rcs(targets: list[TargetState]) -> np.ndarray:
    """按目标顺序展平的平均RCS复幅度。"""
    return np.array([s.mean_rcs for tgt in targets for s in tgt.scatterers], dtype=np.complex128)


def scatterer_terms(
    cfg: OamSystemConfig, r: np.ndarray, theta: np.ndarray, phi: np.ndarray
) -> np.ndarray:
    """每个散射点的单位RCS回波项 e^{i2kr}/r²·e^{iℓφ}·J_ℓ·J_0。

    Args:
        cfg: 系统配置
        r: 散射点距离，形状 (S, N)
        theta: 俯仰角，形状 (S, N)
        phi: 方位角，形状 (S, N)

    Returns:
        形状 (U, W, S, N) 的复数组
    """
    if r.size:
        _check_far_field(cfg, r)
    modes = cfg.mode_array
    k = cfg.wavenumber_array
    x = k[:, None, None] * cfg.radius * np.sin(theta)[None]
    j_l = bessel_j(modes[:, None, None, None], x[None])
    j_0 = bessel_j(0, x)
    radial = np.exp(2j * k[:, None, None] * r[None]) / r[None] ** 2
    azimuthal = np.exp(1j * modes[:, None, None] * phi[None])
    return j_l * (j_0 * radial)[None] * azimuthal[:, None]


def echo_matrix(
    cfg: OamSystemConfig,
    targets: list[TargetState],
    t: float,
    rcs: np.ndarray | None = None,
    noise: np.ndarray | None = None,
    symbols: np.ndarray | None = None,
) -> np.ndarray:
    """t 时刻的原始回波矩阵 E_R，U×W。

    Args:
        cfg: 系统配置
        targets: 目标列表
        t: 时刻（秒）
        rcs: 本快拍各散射点的RCS复幅度（按目标顺序展平），缺省为平均RCS
        noise: U×W 噪声样本，缺省无噪声
        symbols: U×W PSK符号索引，缺省全0

    Returns:
        U×W 复矩阵

    Raises:
        ForwardModelError: 散射点不在远场或输入维度不符
        SceneGeometryError: 散射点位置无效
    """
    shape = (cfg.n_modes, cfg.n_subcarriers)
    times = np.asarray([t], dtype=np.float64)
    r, theta, phi = _scene_geometry(targets, times)
    sigma = mean_rcs(targets) if rcs is None else np.asarray(rcs, dtype=np.complex128)
    if sigma.size != r.shape[0]:
        raise ForwardModelError("RCS数量与散射点数不符", expected=int(r.shape[0]), got=int(sigma.size))

    total = np.zeros(shape, dtype=np.complex128)
    if sigma.size:
        total = np.einsum("uwsn,s->uw", scatterer_terms(cfg, r, theta, phi), sigma)

    sym = np.zeros(shape, dtype=np.int64) if symbols is None else np.asarray(symbols)
    prefactor = -cfg.gain * cfg.weight_array[:, None] * np.conj(mode_twist(cfg.mode_array))[:, None]
    raw = prefactor * psk_symbol(sym, cfg.psk_order) * total
    if noise is not None:
        noise = np.asarray(noise, dtype=np.complex128)
        if noise.shape != shape:
            raise ForwardModelError("噪声维度不符", expected=list(shape), got=list(noise.shape))
        raw = raw + noise
    return raw


def compensate(cfg: OamSystemConfig, raw: np.ndarray, symbols: np.ndarray | None = None) -> np.ndarray:
    """去除增益、权重、符号与 i^{−ℓ} 因子，得到 E'_R。

    Raises:
        ForwardModelError: 存在零权重（η = 0）
    """
    weights = cfg.weight_array
    if np.any(weights == 0.0):
        zero_modes = [int(m) for m in cfg.mode_array[weights == 0.0]]
        raise ForwardModelError("零权重模态无法补偿", zero_modes=zero_modes)
    raw = np.asarray(raw, dtype=np.complex128)
    sym = np.zeros(raw.shape, dtype=np.int64) if symbols is None else np.asarray(symbols)
    s = psk_symbol(sym, cfg.psk_order)
    eta = cfg.gain * weights[:, None] * np.abs(s)
    return -raw / eta * np.conj(s) / np.abs(s) * mode_twist(cfg.mode_array)[:, None]


def echo_cube(
    cfg: OamSystemConfig,
    targets: list[TargetState],
    duration: float,
    sample_rate: float,
    snapshots: int,
    seed: int,
    rcs_model: Literal["swerling", "fixed"] = "swerling",
) -> EchoCube:
    """补偿后的回波立方体。

    慢时间每个样本重新计算散射点位置；每个快拍独立抽取RCS、符号和噪声。
    duration·sample_rate 不足1时只取 t = 0 一个样本。

    Args:
        cfg: 系统配置
        targets: 目标列表
        duration: 观测时长（秒）
        sample_rate: 慢时间采样率（Hz）
        snapshots: 快拍数L
        seed: 随机种子
        rcs_model: "swerling" 每快拍重抽RCS，"fixed" 使用平均RCS

    Returns:
        EchoCube

    Raises:
        ForwardModelError: 参数无效
    """
    if snapshots < 1 or sample_rate <= 0 or duration < 0:
        raise ForwardModelError(
            "立方体参数无效", snapshots=snapshots, sample_rate=sample_rate, duration=duration
        )
    n_samples = max(1, int(round(duration * sample_rate)))
    times = np.arange(n_samples) / sample_rate
    n_modes, n_sub = cfg.n_modes, cfg.n_subcarriers

    sigma_bar = mean_rcs(targets)
    if rcs_model == "swerling":
        fluct = complex_normal(spawn_rng(seed, "rcs"), (sigma_bar.size, snapshots))
        rcs_draws = sigma_bar[:, None] * fluct
    else:
        rcs_draws = np.repeat(sigma_bar[:, None], snapshots, axis=1)
    symbols = draw_symbols(spawn_rng(seed, "symbols"), (n_modes, n_sub, snapshots), cfg.psk_order)

    # 补偿后符号与增益已去除，确定性部分就是散射点项之和
    signal = np.zeros((n_modes, n_sub, n_samples, snapshots), dtype=np.complex128)
    chunk = max(1, forward_config.CUBE_CHUNK)
    for start in range(0, n_samples, chunk):
        stop = min(n_samples, start + chunk)
        r, theta, phi = _scene_geometry(targets, times[start:stop])
        if r.shape[0] == 0:
            break
        terms = scatterer_terms(cfg, r, theta, phi)
        signal[:, :, start:stop, :] = np.einsum("uwsn,sl->uwnl", terms, rcs_draws)

    data = signal
    if cfg.noise_variance > 0:
        # 噪声加在原始回波上，再经过与信号相同的补偿
        eta = cfg.gain * cfg.weight_array
        if np.any(eta == 0.0):
            raise ForwardModelError("零权重模态无法补偿")
        data = signal.copy()
        for snap in range(snapshots):
            raw_noise = complex_normal(spawn_rng(seed, "noise", snap), (n_modes, n_sub, n_samples), cfg.noise_variance)
            s = psk_symbol(symbols[:, :, snap], cfg.psk_order)
            factor = -np.conj(s) * mode_twist(cfg.mode_array)[:, None] / eta[:, None]
            data[:, :, :, snap] += raw_noise * factor[:, :, None]

    logger.debug(
        "echo_cube_synthesized",
        modes=n_modes,
        subcarriers=n_sub,
        samples=n_samples,
        snapshots=snapshots,
        rcs_model=rcs_model,
    )
    return EchoCube(
        data=data,
        modes=cfg.mode_array,
        wavenumbers=cfg.wavenumber_array,
        sample_rate=float(sample_rate),
        times=times,
        rcs_draws=rcs_draws,
        symbols=symbols,
    )


def channel_matrix(cfg: OamSystemConfig, centroid: tuple[float, float, float]) -> np.ndarray:
    """信道系数 h_m(k_w) = β/(2k_w r)·e^{−ik_w r − ik_w R sinθ cos(φ+φ_m)}，W×M。"""
    r, theta, phi = centroid
    _check_far_field(cfg, r)
    k = cfg.wavenumber_array[:, None]
    angles = cfg.element_angles[None, :]
    phase = k * r + k * cfg.radius * np.sin(theta) * np.cos(phi + angles)
    return cfg.comm_gain / (2 * k * r) * np.exp(-1j * phase)


def mode_matrix(cfg: OamSystemConfig) -> np.ndarray:
    """模态形成矩阵 F = [e^{iℓ_uφ_m}]，M×U。"""
    return np.exp(1j * np.outer(cfg.element_angles, cfg.mode_array))


def equivalent_channel(cfg: OamSystemConfig, channel: np.ndarray) -> np.ndarray:
    """逐子载波的等效信道增益 (H·F)，W×U。

    模态按时隙依次发送，每个子载波上的等效信道矩阵是以此为对角的U×U矩阵。
    """
    return np.asarray(channel) @ mode_matrix(cfg)


def comm_received(
    cfg: OamSystemConfig,
    centroid: tuple[float, float, float],
    csi_error: float,
    seed: int,
    symbols: np.ndarray | None = None,
) -> CommLink:
    """通信目标处的接收样本与含误差的信道估计。

    Args:
        cfg: 系统配置
        centroid: 通信目标质心 (r, θ, φ)
        csi_error: 信道估计相对误差 ε
        seed: 随机种子
        symbols: U×W PSK符号索引，缺省随机抽取

    Returns:
        CommLink

    Raises:
        ForwardModelError: 目标不在远场或 ε 为负
    """
    if csi_error < 0:
        raise ForwardModelError("信道误差必须非负", csi_error=csi_error)
    shape = (cfg.n_modes, cfg.n_subcarriers)
    channel = channel_matrix(cfg, centroid)

    if csi_error > 0:
        variance = csi_error**2 * float(np.mean(np.abs(channel) ** 2))
        estimate = channel + complex_normal(spawn_rng(seed, "csi"), channel.shape, variance)
    else:
        estimate = channel.copy()

    if symbols is None:
        sym = draw_symbols(spawn_rng(seed, "comm_symbols"), shape, cfg.psk_order)
    else:
        sym = np.asarray(symbols)
    gains = equivalent_channel(cfg, channel).T
    received = gains * cfg.weight_array[:, None] * psk_symbol(sym, cfg.psk_order)
    if cfg.noise_variance > 0:
        received = received + complex_normal(spawn_rng(seed, "comm_noise"), shape, cfg.noise_variance)
    return CommLink(channel=channel, estimate=estimate, received=received, symbols=sym)


def zero_forcing_matrices(cfg: OamSystemConfig, estimate: np.ndarray) -> np.ndarray:
    """每个子载波的迫零矩阵 (ĤF)†，W×U×U。

    Raises:
        RankDeficientChannelError: ĤF 不满秩
    """
    gains = equivalent_channel(cfg, estimate)
    magnitudes = np.abs(gains)
    floor = RANK_TOLERANCE * float(magnitudes.max(initial=0.0))
    if floor == 0.0 or np.any(magnitudes <= floor):
        bad = np.argwhere(magnitudes <= floor)
        raise RankDeficientChannelError(
            "等效信道ĤF不满秩", deficient=[[int(w), int(cfg.modes[u])] for w, u in bad]
        )
    return np.stack([pseudo_inverse(np.diag(row)) for row in gains])


def zero_forcing_detect(cfg: OamSystemConfig, link: CommLink) -> np.ndarray:
    """迫零检测 (ĤF)†·y，返回 U×W 的 A·S 估计。

    Raises:
        RankDeficientChannelError: ĤF 不满秩
    """
    detectors = zero_forcing_matrices(cfg, link.estimate)
    return np.einsum("wuv,vw->uw", detectors, link.received)
