"""Fisher信息矩阵、PCRB、迫零检测后的SINR与平均速率。

信号模型 p(ϑ) 包含所有散射点，但只对每个目标的四个关键参数求导：
质心的 (r, θ, φ) 与顶点的转速 Ω。质心项随 (r, θ, φ) 移动；
顶点方位按 φ_V(t; Ω) = φ_V(t) + g·[sin(Ωt+ψ₀+δ) − sin(Ω̄t+ψ₀+δ)] 随 Ω 变化；
其余散射点固定在真实轨迹上。
"""

import contextvars
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from app.business.analysis.schemas import (
    PARAMETER_KINDS,
    FisherMatrix,
    FisherParameterKind,
    RateReport,
    parameter_names,
)
from app.business.forward_model.config import forward_config
from app.business.forward_model.schemas import (
    OamSystemConfig,
    WeightVector,
)
from app.business.forward_model.service import (
    equivalent_channel,
    scatterer_terms,
)
from app.business.scene.schemas import (
    ScattererRole,
    TargetState,
)
from app.business.scene.service import (
    rotation_gain,
    rotation_phase_offset,
    scatterer_position,
)
from app.core.config import settings
from app.core.errors import (
    RankDeficientChannelError,
    SingularFisherError,
)
from app.core.logging import logger
from app.core.numerics import bessel_j

MAX_CONDITION = 1e14
SINR_CAP = 1e12
RANK_TOLERANCE = 1e-12


def key_parameters(targets: list[TargetState], t: float) -> np.ndarray:
    """t 时刻的 4Q 个关键参数 (r⁰, θ⁰, φ⁰, Ω) × Q。"""
    rows = []
    for target in targets:
        r, theta, phi = scatterer_position(target, target.centroid, t)
        rows.extend([float(r), float(theta), float(phi), target.spin_rate])
    return np.asarray(rows, dtype=np.float64)


def _vertex_azimuth(target: TargetState, t: np.ndarray, phi_kin: np.ndarray, spin_rate: float) -> np.ndarray:
    g = rotation_gain(target, target.vertex)
    phase = target.vertex.initial_phase + rotation_phase_offset(target)
    return phi_kin + g * (np.sin(spin_rate * t + phase) - np.sin(target.spin_rate * t + phase))


def signal_model(
    cfg: OamSystemConfig,
    targets: list[TargetState],
    t: float,
    parameters: np.ndarray | None = None,
) -> np.ndarray:
    """无噪声信号 p(ℓ_u, k_w, ϑ)，U×W。

    Args:
        cfg: 系统配置
        targets: 目标列表
        t: 时刻（秒）
        parameters: 4Q 个关键参数，缺省为 t 时刻的真实值

    Returns:
        gain·A_u·Σ σ̄·e^{i2kr}/r²·e^{iℓφ}·J_ℓ·J_0
    """
    theta_vec = key_parameters(targets, t) if parameters is None else np.asarray(parameters, dtype=np.float64)
    times = np.asarray([t], dtype=np.float64)
    total = np.zeros((cfg.n_modes, cfg.n_subcarriers), dtype=np.complex128)
    for q, target in enumerate(targets):
        r0, th0, ph0, omega = theta_vec[4 * q : 4 * q + 4]
        for s in target.scatterers:
            if s.role == ScattererRole.CENTROID:
                r, theta, phi = np.array([r0]), np.array([th0]), np.array([ph0])
            else:
                r, theta, phi = scatterer_position(target, s, times)
                if s.role == ScattererRole.VERTEX:
                    phi = _vertex_azimuth(target, times, phi, omega)
            terms = scatterer_terms(cfg, r[None, :], theta[None, :], phi[None, :])[:, :, 0, 0]
            total += s.mean_rcs * terms
    return cfg.gain * cfg.weight_array[:, None] * total


def _partials(cfg: OamSystemConfig, targets: list[TargetState], times: np.ndarray) -> np.ndarray:
    """单位权重下 ∂p/∂ϑ，形状 (4Q, U, W, T)。"""
    modes = cfg.mode_array[:, None, None]
    k = cfg.wavenumber_array[None, :, None]
    out = np.empty((4 * len(targets), cfg.n_modes, cfg.n_subcarriers, times.size), dtype=np.complex128)

    for q, target in enumerate(targets):
        r, theta, phi = (a[None, None, :] for a in scatterer_position(target, target.centroid, times))
        x = k * cfg.radius * np.sin(theta)
        j_l, j_0 = bessel_j(modes, x), bessel_j(0, x)
        common = cfg.gain * target.centroid.mean_rcs * np.exp(2j * k * r) / r**2 * np.exp(1j * modes * phi)
        term = common * j_l * j_0
        bessel_slope = 0.5 * j_0 * bessel_j(modes - 1, x) - 0.5 * j_0 * bessel_j(modes + 1, x) - j_l * bessel_j(1, x)
        out[4 * q] = term * 2 * (1j * k - 1 / r)
        out[4 * q + 1] = common * k * cfg.radius * np.cos(theta) * bessel_slope
        out[4 * q + 2] = 1j * modes * term

        vertex = target.vertex
        rv, thv, phv = (a[None, None, :] for a in scatterer_position(target, vertex, times))
        xv = k * cfg.radius * np.sin(thv)
        vertex_term = (
            cfg.gain
            * vertex.mean_rcs
            * np.exp(2j * k * rv)
            / rv**2
            * np.exp(1j * modes * phv)
            * bessel_j(modes, xv)
            * bessel_j(0, xv)
        )
        g = rotation_gain(target, vertex)
        phase = target.spin_rate * times + vertex.initial_phase + rotation_phase_offset(target)
        out[4 * q + 3] = 1j * modes * vertex_term * (g * times * np.cos(phase))[None, None, :]
    return out


def partial_p(
    cfg: OamSystemConfig,
    targets: list[TargetState],
    target_index: int,
    kind: FisherParameterKind,
    u: int,
    w: int,
    t: float,
) -> complex:
    """∂p(ℓ_u, k_w, ϑ)/∂ϑ 的闭式值，ϑ 为第 target_index 个目标的 kind 参数。

    Raises:
        SceneGeometryError: 目标几何无效
        IndexError: 目标或参数越界
    """
    if not 0 <= target_index < len(targets):
        raise IndexError(f"目标下标越界: {target_index}")
    partials = _partials(cfg, targets, np.asarray([t], dtype=np.float64))
    row = 4 * target_index + PARAMETER_KINDS.index(kind)
    return complex(cfg.weight_array[u] * partials[row, u, w, 0])


def _chunk_blocks(cfg: OamSystemConfig, targets: list[TargetState], times: np.ndarray) -> np.ndarray:
    d = _partials(cfg, targets, times)
    return np.einsum("iuwt,juwt->uij", d.conj(), d).real


def fisher_blocks(
    cfg: OamSystemConfig,
    targets: list[TargetState],
    times: np.ndarray | list[float],
    max_workers: int | None = None,
) -> np.ndarray:
    """每个模态在单位权重、单位噪声下的信息块 B_u，形状 (U, 4Q, 4Q)。

    J(A) = (1/ξ²)·Σ_u A_u²·B_u。时间按块并行求和，块结果按顺序相加。
    """
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    chunk = max(1, forward_config.CUBE_CHUNK)
    pieces = [times[i : i + chunk] for i in range(0, times.size, chunk)]
    with ThreadPoolExecutor(max_workers=max_workers or settings.MAX_WORKERS) as pool:
        futures = [pool.submit(contextvars.copy_context().run, _chunk_blocks, cfg, targets, p) for p in pieces]
        parts = [f.result() for f in futures]
    blocks = np.sum(np.stack(parts), axis=0)
    return 0.5 * (blocks + np.swapaxes(blocks, 1, 2))


def combine_fisher(blocks: np.ndarray, weights: WeightVector | np.ndarray, noise_variance: float) -> np.ndarray:
    """J = (1/ξ²)·Σ_u A_u²·B_u。

    Raises:
        SingularFisherError: ξ² ≤ 0
    """
    if noise_variance <= 0:
        raise SingularFisherError("噪声方差必须为正", noise_variance=noise_variance)
    amps = weights.as_array() if isinstance(weights, WeightVector) else np.asarray(weights, dtype=np.float64)
    return np.einsum("u,uij->ij", amps**2, blocks) / noise_variance


def fisher_matrix(
    cfg: OamSystemConfig,
    targets: list[TargetState],
    times: np.ndarray | list[float],
    max_workers: int | None = None,
) -> FisherMatrix:
    """J[i][j] = (1/ξ²)·Σ_t Σ_u Σ_w Re[conj(∂p/∂ϑ_i)·∂p/∂ϑ_j]，均匀先验下 J_B = 0。

    Raises:
        SingularFisherError: ξ² ≤ 0
    """
    blocks = fisher_blocks(cfg, targets, times, max_workers)
    matrix = combine_fisher(blocks, cfg.weights, cfg.noise_variance)
    return FisherMatrix(matrix=matrix, names=tuple(parameter_names(len(targets))))


def snapshot_fisher(
    cfg: OamSystemConfig,
    targets: list[TargetState],
    snapshots: int,
    t: float = 0.0,
) -> np.ndarray:
    """成像快拍对应的质心位置信息矩阵，形状 (3Q, 3Q)，参数按目标排列为 (r⁰, θ⁰, φ⁰)。

    成像观测是 t 时刻的 L 个快拍，每个快拍中各散射点的复幅度 σ̄_s·n_l 独立抽取，
    作为冗余参数投影掉：J = (2L/ξ²)·Re(Dᴴ·P⊥_G·D)，G 为全部散射点的导向矩阵，
    D 为质心导向矢量对位置的偏导（含 σ̄）。不同散射点的幅度不相关，跨目标项取期望后为0。
    噪声为总方差 ξ² 的圆复高斯，信息系数为 2/ξ²。

    Raises:
        SingularFisherError: ξ² ≤ 0
    """
    if cfg.noise_variance <= 0:
        raise SingularFisherError("噪声方差必须为正", noise_variance=cfg.noise_variance)
    times = np.asarray([t], dtype=np.float64)
    amps = cfg.weight_array
    n_q = len(targets)
    positions = [scatterer_position(target, s, times) for target in targets for s in target.scatterers]
    r, theta, phi = (np.stack([p[i] for p in positions]) for i in range(3))
    terms = scatterer_terms(cfg, r, theta, phi)[..., 0]
    steering = (cfg.gain * amps[:, None, None] * terms).reshape(-1, r.shape[0])
    basis, _ = np.linalg.qr(steering)

    partials = _partials(cfg, targets, times)[..., 0] * amps[None, :, None]
    keep = [4 * q + i for q in range(n_q) for i in range(3)]
    d = partials[keep].reshape(len(keep), -1).T
    residual = d - basis @ (basis.conj().T @ d)
    matrix = 2.0 * snapshots / cfg.noise_variance * (residual.conj().T @ residual).real
    owner = np.repeat(np.arange(n_q), 3)
    matrix = np.where(owner[:, None] == owner[None, :], matrix, 0.0)
    return 0.5 * (matrix + matrix.T)


def _unidentifiable(matrix: np.ndarray, names: list[str]) -> list[list[str]]:
    values, vectors = np.linalg.eigh(matrix)
    top = max(float(values[-1]), np.finfo(np.float64).tiny)
    combos = []
    for idx in np.flatnonzero(values <= top / MAX_CONDITION):
        vec = vectors[:, idx]
        combos.append([names[i] for i in np.flatnonzero(np.abs(vec) > 0.1 * np.max(np.abs(vec)))])
    return combos


def pcrb(fisher: FisherMatrix | np.ndarray, names: list[str] | None = None) -> np.ndarray:
    """后验Cramér-Rao界 [J⁻¹]_ii。

    条件数在按对角线归一化后的矩阵上计算，与各参数的量纲无关。

    Raises:
        SingularFisherError: 条件数超过1e14或某个参数的信息为0，附带不可辨识的参数组合
    """
    if isinstance(fisher, FisherMatrix):
        matrix, names = fisher.matrix, list(fisher.names)
    else:
        matrix = np.asarray(fisher, dtype=np.float64)
        names = names or [f"p{i}" for i in range(matrix.shape[0])]
    diag = np.diag(matrix)
    if matrix.size == 0 or np.any(diag <= 0):
        raise SingularFisherError(
            "Fisher信息矩阵奇异",
            condition_number=None,
            unidentifiable=[[names[i]] for i in np.flatnonzero(diag <= 0)] or [names],
        )
    scale = 1.0 / np.sqrt(diag)
    normalized = matrix * np.outer(scale, scale)
    cond = np.linalg.cond(normalized)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularFisherError(
            "Fisher信息矩阵奇异",
            condition_number=float(cond) if np.isfinite(cond) else None,
            unidentifiable=_unidentifiable(normalized, names),
        )
    return np.diag(np.linalg.inv(normalized)) * scale**2


def rate_terms(cfg: OamSystemConfig, channel: np.ndarray, estimate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """与权重无关的干扰与噪声系数，U×W。

    SINR(u, w) = A_u² / (I(u, w)·A_u² + ξ²·N(u, w))，
    其中 I = |g/ĝ − 1|²，N = 1/|ĝ|²，g 和 ĝ 分别为 HF 与 ĤF 的对应元素。

    Raises:
        RankDeficientChannelError: ĤF 不满秩
    """
    true_gain = equivalent_channel(cfg, channel).T
    est_gain = equivalent_channel(cfg, estimate).T
    magnitudes = np.abs(est_gain)
    floor = RANK_TOLERANCE * float(magnitudes.max(initial=0.0))
    if floor == 0.0 or np.any(magnitudes <= floor):
        raise RankDeficientChannelError(
            "等效信道ĤF不满秩",
            deficient=[[int(cfg.modes[u]), int(w)] for u, w in np.argwhere(magnitudes <= floor)],
        )
    interference = np.abs(true_gain / est_gain - 1.0) ** 2
    noise = 1.0 / magnitudes**2
    return interference, noise


def sinr_from_terms(
    interference: np.ndarray, noise: np.ndarray, weights: WeightVector | np.ndarray, noise_variance: float
) -> np.ndarray:
    """由干扰与噪声系数计算SINR，上限1e12。"""
    amps = weights.as_array() if isinstance(weights, WeightVector) else np.asarray(weights, dtype=np.float64)
    signal = (amps**2)[:, None] * np.ones_like(interference)
    denom = interference * signal + noise_variance * noise
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, signal / np.where(denom > 0, denom, 1.0), np.where(signal > 0, SINR_CAP, 0.0))
    return np.minimum(ratio, SINR_CAP)


def sinr(
    cfg: OamSystemConfig,
    channel: np.ndarray,
    estimate: np.ndarray,
    weights: WeightVector | None = None,
) -> np.ndarray:
    """迫零检测后每个 (u, w) 的SINR = [R_AS]_uu / ([R_I]_uu + [R_Z']_uu)，E{SS^H} = I。

    Raises:
        RankDeficientChannelError: ĤF 不满秩
    """
    interference, noise = rate_terms(cfg, channel, estimate)
    return sinr_from_terms(interference, noise, weights or cfg.weights, cfg.noise_variance)


def average_rate(sinr_grid: np.ndarray) -> float:
    """R_av = (1/U)·Σ_w Σ_u log₂(1 + SINR)。

    Raises:
        ValueError: SINR为负
    """
    grid = np.asarray(sinr_grid, dtype=np.float64)
    if np.any(grid < 0):
        raise ValueError("SINR必须非负")
    return float(np.sum(np.log2(1.0 + grid)) / grid.shape[0])


def rate_report(
    cfg: OamSystemConfig,
    channel: np.ndarray,
    estimate: np.ndarray,
    weights: WeightVector | None = None,
) -> RateReport:
    """SINR网格与平均速率。"""
    grid = sinr(cfg, channel, estimate, weights)
    rate = average_rate(grid)
    logger.debug("rate_evaluated", average_rate=rate, min_sinr=float(grid.min()), max_sinr=float(grid.max()))
    return RateReport(sinr=grid, average_rate=rate)
