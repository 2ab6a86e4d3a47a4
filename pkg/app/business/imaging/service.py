"""模态域与频率域MUSIC：协方差、噪声子空间、空间谱、谱峰搜索与位置融合。

模态域对每个子载波w估计 (θ, φ)，频率域对每个模态u估计 (r, θ)。
每个域把各下标的归一化零陷深度取平均得到联合谱，联合谱的谱峰作为锚点，
各下标在锚点附近的局部谱峰组成分组估计；两域锚点按 U·W 维快拍协方差的
信号子空间配对。逐下标的计算彼此独立，在线程池中并行执行。
"""

import contextvars
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from functools import (
    lru_cache,
    partial,
)
from typing import (
    Any,
    Callable,
    Iterable,
    NamedTuple,
)

import numpy as np

from app.business.forward_model.schemas import (
    EchoCube,
    OamSystemConfig,
)
from app.business.imaging.config import imaging_config
from app.business.imaging.schemas import (
    Domain,
    DomainPeaks,
    ImagingReport,
    MusicSpectrum,
    Peak,
    PeakSearchResult,
    PositionEstimate,
    SearchBounds,
    SteeringFamily,
)
from app.core.config import settings
from app.core.errors import ImagingError
from app.core.logging import logger
from app.core.metrics import (
    music_peak_shortfall_total,
    track_stage,
)
from app.core.numerics import (
    bessel_j,
    hermitian_evd,
)

TWO_PI = 2 * math.pi
_TINY = np.finfo(np.float64).tiny

Builder = Callable[[np.ndarray, np.ndarray], SteeringFamily]


class _Grid(NamedTuple):
    axis1: np.ndarray
    axis2: np.ndarray
    step1: float
    step2: float
    bounds1: tuple[float, float]
    bounds2: tuple[float, float]
    period1: float | None
    period2: float | None
    stride1: int
    stride2: int


class _Subspace(NamedTuple):
    index: int
    noise: np.ndarray
    signal_to_noise: float


class _NullAccumulator:
    """跨线程累加各下标的归一化零陷深度。"""

    def __init__(self, shape: tuple[int, int]):
        self.total = np.zeros(shape)
        self.count = 0
        self._lock = threading.Lock()

    def add(self, null: np.ndarray) -> None:
        with self._lock:
            self.total += null
            self.count += 1

    def mean(self) -> np.ndarray:
        return self.total / max(self.count, 1)


def sample_covariance(cube: EchoCube, axis: Domain, index: int, sample: int = 0) -> np.ndarray:
    """快拍样本协方差 (1/L)Σ e·e^H。

    Args:
        cube: 回波立方体
        axis: "mode" 固定子载波w取U维列向量；"frequency" 固定模态u取W维行向量
        index: 被固定的w或u
        sample: 慢时间样本下标

    Returns:
        U×U 或 W×W 的Hermitian矩阵

    Raises:
        ImagingError: 立方体为空或下标越界
    """
    if cube.data.size == 0:
        raise ImagingError("回波立方体为空")
    n_modes, n_sub, n_t, n_snap = cube.shape
    if not 0 <= sample < n_t:
        raise ImagingError("慢时间样本越界", sample=sample, samples=n_t)
    if axis == "mode":
        if not 0 <= index < n_sub:
            raise ImagingError("子载波下标越界", index=index, size=n_sub)
        vectors = cube.data[:, index, sample, :]
    elif axis == "frequency":
        if not 0 <= index < n_modes:
            raise ImagingError("模态下标越界", index=index, size=n_modes)
        vectors = cube.data[index, :, sample, :]
    else:
        raise ImagingError("未知的协方差方向", axis=axis)

    dim = vectors.shape[0]
    if n_snap < dim:
        logger.warning("covariance_rank_deficient", axis=axis, index=index, snapshots=n_snap, dimension=dim)
    cov = vectors @ vectors.conj().T / n_snap
    return 0.5 * (cov + cov.conj().T)


def _split_subspace(cov: np.ndarray, signal_dim: int) -> tuple[np.ndarray, np.ndarray]:
    dim = cov.shape[0]
    if signal_dim < 1 or signal_dim >= dim:
        raise ImagingError(
            "信号子空间维度必须满足 1 ≤ QP < 矩阵维度", signal_dim=signal_dim, dimension=dim
        )
    loading = imaging_config.DIAGONAL_LOADING * float(np.real(np.trace(cov)))
    values, vectors = hermitian_evd(cov + loading * np.eye(dim))
    return values, vectors[:, signal_dim:]


def noise_subspace(covariance: np.ndarray, signal_dim: int) -> np.ndarray:
    """最小的 (dim − QP) 个特征值对应的特征向量，dim×(dim − QP)。

    Raises:
        ImagingError: QP ≥ 矩阵维度或 QP < 1
    """
    cov = np.asarray(covariance, dtype=np.complex128)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ImagingError("协方差必须是方阵", shape=list(cov.shape))
    return _split_subspace(cov, signal_dim)[1]


def steering_mode_domain(
    cfg: OamSystemConfig, w: int, theta: np.ndarray | float, phi: np.ndarray | float
) -> np.ndarray:
    """模态域导向矢量 a_w(θ, φ)，分量u为 e^{iℓ_uφ}·J_{ℓ_u}(k_w R sinθ)。

    θ、φ可以是可广播的数组，结果最后一维为U。
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=np.float64), np.asarray(phi, dtype=np.float64))
    modes = cfg.mode_array
    x = cfg.wavenumbers[w] * cfg.radius * np.sin(theta)[..., None]
    return bessel_j(modes, x) * np.exp(1j * modes * phi[..., None])


def steering_freq_domain(cfg: OamSystemConfig, u: int, r: np.ndarray | float, theta: np.ndarray | float) -> np.ndarray:
    """频率域导向矢量 b_u(r, θ)，分量w为 e^{i2k_w r}·J_{ℓ_u}(k_w R sinθ)·J_0(k_w R sinθ)。"""
    r, theta = np.broadcast_arrays(np.asarray(r, dtype=np.float64), np.asarray(theta, dtype=np.float64))
    k = cfg.wavenumber_array
    x = k * cfg.radius * np.sin(theta)[..., None]
    return np.exp(2j * k * r[..., None]) * bessel_j(cfg.modes[u], x) * bessel_j(0, x)


def steering_full(
    cfg: OamSystemConfig, r: np.ndarray | float, theta: np.ndarray | float, phi: np.ndarray | float
) -> np.ndarray:
    """U×W 联合导向矩阵，元素 (u, w) 为 e^{i2k_w r}·e^{iℓ_uφ}·J_{ℓ_u}(k_w R sinθ)·J_0(k_w R sinθ)。

    r、θ、φ 可广播，结果最后两维为 (U, W)。
    """
    r, theta, phi = np.broadcast_arrays(
        np.asarray(r, dtype=np.float64), np.asarray(theta, dtype=np.float64), np.asarray(phi, dtype=np.float64)
    )
    modes = cfg.mode_array
    k = cfg.wavenumber_array
    x = k * cfg.radius * np.sin(theta)[..., None]
    radial = np.exp(2j * k * r[..., None]) * bessel_j(0, x)
    azimuthal = np.exp(1j * modes * phi[..., None])
    return bessel_j(modes[:, None], x[..., None, :]) * azimuthal[..., :, None] * radial[..., None, :]


def mode_steering_family(
    cfg: OamSystemConfig, w: int, thetas: np.ndarray, phis: np.ndarray, lagged: bool = True
) -> SteeringFamily:
    """(θ, φ) 网格上的模态域导向矢量族；模态连续，φ 轴为纯相位因子。"""
    thetas = np.asarray(thetas, dtype=np.float64)
    phis = np.asarray(phis, dtype=np.float64)
    modes = cfg.mode_array
    x = cfg.wavenumbers[w] * cfg.radius * np.sin(thetas)[:, None]
    return SteeringFamily(
        axis1=thetas,
        axis2=phis,
        row_factor=bessel_j(modes[None, :], x).astype(np.complex128),
        col_factor=np.exp(1j * np.outer(phis, modes)),
        phase_axis=2 if lagged else None,
        phase_scale=1.0,
    )


def freq_steering_family(
    cfg: OamSystemConfig, u: int, ranges: np.ndarray, thetas: np.ndarray, lagged: bool = True
) -> SteeringFamily:
    """(r, θ) 网格上的频率域导向矢量族；波数等间隔，r 轴为纯相位因子。"""
    ranges = np.asarray(ranges, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    k = cfg.wavenumber_array
    x = np.sin(thetas)[:, None] * k[None, :] * cfg.radius
    spacing = float(k[1] - k[0]) if k.size > 1 else 0.0
    return SteeringFamily(
        axis1=ranges,
        axis2=thetas,
        row_factor=np.exp(2j * np.outer(ranges, k)),
        col_factor=(bessel_j(cfg.modes[u], x) * bessel_j(0, x)).astype(np.complex128),
        phase_axis=1 if lagged and k.size > 1 else None,
        phase_scale=2.0 * spacing,
    )


@lru_cache(maxsize=8)
def _lag_summation(dim: int) -> np.ndarray:
    """dim² → (2·dim − 1) 的0/1矩阵，把 (n, m) 项归入分量差 m − n。"""
    n = np.arange(dim)
    lags = (n[None, :] - n[:, None] + dim - 1).ravel()
    summation = np.zeros((dim * dim, 2 * dim - 1))
    summation[np.arange(dim * dim), lags] = 1.0
    summation.flags.writeable = False
    return summation


def _null_fraction_direct(qn: np.ndarray, family: SteeringFamily) -> np.ndarray:
    col_conj = family.col_factor.conj()
    col_power = np.abs(family.col_factor) ** 2
    null = np.ones((family.axis1.size, family.axis2.size))
    chunk = max(1, imaging_config.SPECTRUM_CHUNK)
    for start in range(0, family.axis1.size, chunk):
        rows = family.row_factor[start : start + chunk]
        weighted = rows.conj()[:, :, None] * qn[None, :, :]
        projection = np.matmul(col_conj[None, :, :], weighted)
        denom = np.sum(np.abs(projection) ** 2, axis=-1)
        norm2 = (np.abs(rows) ** 2) @ col_power.T
        np.divide(denom, norm2, out=null[start : start + chunk], where=norm2 > _TINY)
    return null


def _null_fraction_lagged(qn: np.ndarray, family: SteeringFamily) -> np.ndarray:
    # a^H P a = Re Σ_d c_d e^{i·scale·d·y}，c_d = Σ_n conj(b_n) b_{n+d} P_{n,n+d}
    if family.phase_axis == 1:
        amplitude, phase_values = family.col_factor, family.axis1
    else:
        amplitude, phase_values = family.row_factor, family.axis2
    dim = qn.shape[0]
    projector = qn @ qn.conj().T
    lags = np.arange(1 - dim, dim)
    phases = np.exp(1j * family.phase_scale * np.outer(lags, phase_values))
    summation = _lag_summation(dim)

    null = np.ones((amplitude.shape[0], phase_values.size))
    chunk = max(1, imaging_config.SPECTRUM_CHUNK)
    for start in range(0, amplitude.shape[0], chunk):
        amp = amplitude[start : start + chunk]
        pairs = (amp.conj()[:, :, None] * amp[:, None, :] * projector[None, :, :]).reshape(amp.shape[0], -1)
        denom = np.real((pairs @ summation) @ phases)
        norm2 = np.sum(np.abs(amp) ** 2, axis=1)[:, None]
        np.divide(denom, norm2, out=null[start : start + chunk], where=norm2 > _TINY)
    return null.T if family.phase_axis == 1 else null


def _null_fraction(qn: np.ndarray, family: SteeringFamily) -> np.ndarray:
    """归一化零陷深度 a^H Q_n Q_n^H a / ‖a‖² ∈ [0, 1]；零范数导向矢量记为1。"""
    if family.phase_axis is None:
        null = _null_fraction_direct(qn, family)
    else:
        null = _null_fraction_lagged(qn, family)
    return np.clip(null, 0.0, 1.0)


def _spectrum_values(null: np.ndarray) -> np.ndarray:
    return 1.0 / np.maximum(null, 1.0 / imaging_config.SPECTRUM_DYNAMIC_RANGE)


def _spectrum_from_null(
    null: np.ndarray, axis1: np.ndarray, axis2: np.ndarray, period1: float | None, period2: float | None
) -> MusicSpectrum:
    return MusicSpectrum(
        axis1=axis1,
        axis2=axis2,
        values=_spectrum_values(null),
        saturated=bool(np.any(null < 1.0 / imaging_config.SPECTRUM_DYNAMIC_RANGE)),
        periodic1=period1,
        periodic2=period2,
    )


def music_spectrum(
    noise_sub: np.ndarray,
    family: SteeringFamily,
    period1: float | None = None,
    period2: float | None = None,
) -> MusicSpectrum:
    """归一化MUSIC空间谱 ‖a‖²/(a^H Q_n Q_n^H a)。

    谱值与导向矢量的幅度无关。归一化零陷深度低于 1/SPECTRUM_DYNAMIC_RANGE 时
    取该下限并标记饱和，因此谱值不超过 SPECTRUM_DYNAMIC_RANGE。

    Raises:
        ImagingError: 网格为空或维度不符
    """
    qn = np.asarray(noise_sub, dtype=np.complex128)
    if family.axis1.size == 0 or family.axis2.size == 0:
        raise ImagingError("谱搜索网格为空")
    if qn.ndim != 2 or qn.shape[0] != family.row_factor.shape[1]:
        raise ImagingError("噪声子空间维度与导向矢量不符", subspace=list(qn.shape))
    return _spectrum_from_null(_null_fraction(qn, family), family.axis1, family.axis2, period1, period2)


def _pad_axis(values: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    width = [(0, 0), (0, 0)]
    width[axis] = (1, 1)
    if periodic:
        return np.pad(values, width, mode="wrap")
    return np.pad(values, width, mode="constant", constant_values=-np.inf)


def _strict_local_maxima(values: np.ndarray, periodic1: bool, periodic2: bool) -> np.ndarray:
    padded = _pad_axis(_pad_axis(values, 0, periodic1), 1, periodic2)
    n1, n2 = values.shape
    mask = np.ones(values.shape, dtype=bool)
    for d1 in (-1, 0, 1):
        for d2 in (-1, 0, 1):
            if d1 == 0 and d2 == 0:
                continue
            neighbour = padded[1 + d1 : 1 + d1 + n1, 1 + d2 : 1 + d2 + n2]
            mask &= values > neighbour
    return mask


def _quadratic_offset(line: np.ndarray, idx: int, periodic: bool) -> float:
    """对数谱三点抛物线插值的偏移，单位为网格步长，限制在 ±0.5。"""
    n = line.size
    if n < 3 or (not periodic and (idx == 0 or idx == n - 1)):
        return 0.0
    lm, l0, lp = np.log(line[(idx - 1) % n]), np.log(line[idx]), np.log(line[(idx + 1) % n])
    curvature = lm - 2 * l0 + lp
    if curvature >= 0:
        return 0.0
    return float(np.clip(0.5 * (lm - lp) / curvature, -0.5, 0.5))


def _axis_step(axis: np.ndarray, period: float | None) -> float:
    if axis.size > 1:
        return float(axis[1] - axis[0])
    return period or 0.0


def _wrap(value: float, start: float, period: float | None) -> float:
    if period is None:
        return value
    return start + (value - start) % period


def peak_search(spectrum: MusicSpectrum, n_peaks: int) -> PeakSearchResult:
    """最大的QP个严格局部极大（8邻域），每轴做一次二次插值细化。

    周期轴（spectrum.periodic1/periodic2）在边界处回绕比较。

    Raises:
        ImagingError: n_peaks < 1
    """
    if n_peaks < 1:
        raise ImagingError("谱峰数必须至少为1", n_peaks=n_peaks)
    values = spectrum.values
    periodic1 = spectrum.periodic1 is not None
    periodic2 = spectrum.periodic2 is not None
    mask = _strict_local_maxima(values, periodic1, periodic2)
    candidates = np.argwhere(mask)
    order = np.argsort(-values[mask], kind="stable")
    step1 = _axis_step(spectrum.axis1, spectrum.periodic1)
    step2 = _axis_step(spectrum.axis2, spectrum.periodic2)

    peaks = []
    for i, j in candidates[order][:n_peaks]:
        d1 = _quadratic_offset(values[:, j], int(i), periodic1)
        d2 = _quadratic_offset(values[i, :], int(j), periodic2)
        peaks.append(
            Peak(
                axis1=_wrap(float(spectrum.axis1[i]) + d1 * step1, float(spectrum.axis1[0]), spectrum.periodic1),
                axis2=_wrap(float(spectrum.axis2[j]) + d2 * step2, float(spectrum.axis2[0]), spectrum.periodic2),
                value=float(values[i, j]),
            )
        )
    return PeakSearchResult(peaks=tuple(peaks), requested=n_peaks, shortfall=len(peaks) < n_peaks)


def _normalized_distances(
    reference: np.ndarray, candidates: np.ndarray, scales: np.ndarray, periods: list[float | None]
) -> np.ndarray:
    diff = reference[:, None, :] - candidates[None, :, :]
    for d, period in enumerate(periods):
        if period is not None:
            diff[..., d] = (diff[..., d] + 0.5 * period) % period - 0.5 * period
    return np.sqrt(np.sum((diff / scales) ** 2, axis=-1))


def _greedy_assignment(cost: np.ndarray) -> np.ndarray:
    """每次取代价最小的未用 (行, 列) 对；未分配的行为 −1。"""
    matches = np.full(cost.shape[0], -1, dtype=np.int64)
    used = np.zeros(cost.shape[1], dtype=bool)
    for flat in np.argsort(cost, axis=None, kind="stable"):
        p, c = np.unravel_index(flat, cost.shape)
        if matches[p] >= 0 or used[c]:
            continue
        matches[p] = c
        used[c] = True
    return matches


def match_points(
    reference: np.ndarray,
    candidates: np.ndarray,
    scales: tuple[float, ...],
    periods: tuple[float | None, ...] | None = None,
) -> np.ndarray:
    """全局贪心最近邻匹配：每次取距离最小的未用 (参考, 候选) 对。

    Args:
        reference: P×D 参考点
        candidates: C×D 候选点
        scales: 每维的归一化尺度
        periods: 每维周期，None表示非周期

    Returns:
        长度P的候选下标数组，未匹配为 −1
    """
    ref = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    cand = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if ref.size == 0 or cand.size == 0:
        return np.full(ref.shape[0], -1, dtype=np.int64)
    dims = ref.shape[1]
    periods = list(periods) if periods is not None else [None] * dims
    return _greedy_assignment(_normalized_distances(ref, cand, np.asarray(scales, dtype=np.float64), periods))


def associate_peaks(
    reference: np.ndarray,
    candidate_lists: list[np.ndarray],
    scales: tuple[float, ...],
    periods: tuple[float | None, ...] | None = None,
) -> np.ndarray:
    """把每个候选列表对齐到参考列表。

    Returns:
        形状 (len(candidate_lists), P, D) 的数组，未匹配处为NaN
    """
    ref = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    grouped = np.full((len(candidate_lists), *ref.shape), np.nan)
    for n, cand in enumerate(candidate_lists):
        cand = np.asarray(cand, dtype=np.float64).reshape(-1, ref.shape[1])
        matches = match_points(ref, cand, scales, periods)
        hit = matches >= 0
        grouped[n, hit] = cand[matches[hit]]
    return grouped


def pairing_scores(
    cfg: OamSystemConfig, signal_basis: np.ndarray, mode_points: np.ndarray, freq_points: np.ndarray
) -> np.ndarray:
    """频率域锚点 (r, θ) 与模态域锚点 (θ, φ) 的配对代价。

    代价为 1 − ‖U_s^H ĉ‖²，ĉ 是 (r_q, θ, φ_p) 处归一化的 U·W 维联合导向矢量，
    θ 取两个锚点各自的俯仰中较好的一个。

    Args:
        cfg: 系统配置
        signal_basis: (U·W)×QP 的信号子空间正交基，u 为慢变下标
        mode_points: P×2 的 (θ, φ)
        freq_points: Q×2 的 (r, θ)

    Returns:
        Q×P 的代价，取值 [0, 1]
    """
    mode_points = np.asarray(mode_points, dtype=np.float64).reshape(-1, 2)
    freq_points = np.asarray(freq_points, dtype=np.float64).reshape(-1, 2)
    n_freq, n_mode = freq_points.shape[0], mode_points.shape[0]
    thetas = np.stack(
        [
            np.broadcast_to(mode_points[None, :, 0], (n_freq, n_mode)),
            np.broadcast_to(freq_points[:, None, 1], (n_freq, n_mode)),
        ],
        axis=-1,
    )
    steer = steering_full(cfg, freq_points[:, None, None, 0], thetas, mode_points[None, :, None, 1])
    steer = steer.reshape(n_freq, n_mode, 2, -1)
    norm = np.linalg.norm(steer, axis=-1, keepdims=True)
    steer = np.divide(steer, norm, out=np.zeros_like(steer), where=norm > _TINY)
    captured = np.sum(np.abs(steer @ np.asarray(signal_basis).conj()) ** 2, axis=-1)
    return np.clip(1.0 - captured.max(axis=-1), 0.0, 1.0)


def _pair_anchors(scores: np.ndarray) -> np.ndarray:
    """一对一贪心配对，剩余的频率域锚点取各自代价最小的模态域锚点。"""
    if scores.shape[1] == 0:
        return np.full(scores.shape[0], -1, dtype=np.int64)
    pairs = _greedy_assignment(scores)
    for q in np.flatnonzero(pairs < 0):
        pairs[q] = int(np.argmin(scores[q]))
    return pairs


def range_ambiguity(cfg: OamSystemConfig) -> float:
    """频率域距离模糊周期 π/Δk；单子载波时不模糊（inf）。"""
    if cfg.n_subcarriers < 2:
        return math.inf
    return math.pi / float(cfg.wavenumbers[1] - cfg.wavenumbers[0])


def unwrap_range(folded: float, cue: float, period: float) -> float:
    """把模糊区间内的距离移到离粗略距离cue最近的周期上。"""
    return folded + period * round((cue - folded) / period)


def _closed_axis(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _periodic_axis(start: float, period: float, step: float, oversample: int = 1) -> tuple[np.ndarray, float]:
    count = max(3, int(math.ceil(period / step - 1e-9))) * oversample
    return start + period / count * np.arange(count), period / count


def _mode_grid(bounds: SearchBounds) -> _Grid:
    oversample = max(1, imaging_config.ELEVATION_OVERSAMPLE)
    theta_step = bounds.angle_step / oversample
    thetas = _closed_axis(bounds.elevation_min, bounds.elevation_max, theta_step)
    if bounds.azimuth_periodic:
        phis, step2 = _periodic_axis(bounds.azimuth_min, TWO_PI, bounds.angle_step)
        period2 = TWO_PI
    else:
        phis = _closed_axis(bounds.azimuth_min, bounds.azimuth_max, bounds.angle_step)
        step2, period2 = bounds.angle_step, None
    return _Grid(
        thetas,
        phis,
        theta_step,
        step2,
        (bounds.elevation_min, bounds.elevation_max),
        (bounds.azimuth_min, bounds.azimuth_max),
        None,
        period2,
        oversample,
        1,
    )


def _freq_grid(bounds: SearchBounds, ambiguity: float) -> _Grid:
    range_oversample = max(1, imaging_config.RANGE_OVERSAMPLE)
    theta_oversample = max(1, imaging_config.ELEVATION_OVERSAMPLE)
    theta_step = bounds.angle_step / theta_oversample
    thetas = _closed_axis(bounds.elevation_min, bounds.elevation_max, theta_step)
    if bounds.range_max - bounds.range_min > ambiguity:
        ranges, step1 = _periodic_axis(bounds.range_min, ambiguity, bounds.range_step, range_oversample)
        period1 = ambiguity
    else:
        step1 = bounds.range_step / range_oversample
        ranges = _closed_axis(bounds.range_min, bounds.range_max, step1)
        period1 = None
    return _Grid(
        ranges,
        thetas,
        step1,
        theta_step,
        (bounds.range_min, bounds.range_max),
        (bounds.elevation_min, bounds.elevation_max),
        period1,
        None,
        range_oversample,
        theta_oversample,
    )


def _nominal(spectrum: MusicSpectrum, grid: _Grid) -> MusicSpectrum:
    """按名义步长抽取的谱，用于报告与写文件。"""
    return MusicSpectrum(
        axis1=spectrum.axis1[:: grid.stride1],
        axis2=spectrum.axis2[:: grid.stride2],
        values=spectrum.values[:: grid.stride1, :: grid.stride2],
        saturated=spectrum.saturated,
        periodic1=spectrum.periodic1,
        periodic2=spectrum.periodic2,
    )


def _fine_axis(center: float, step: float, factor: int, limits: tuple[float, float], periodic: bool) -> np.ndarray:
    axis = center + step * np.arange(-factor, factor + 1) / factor
    if periodic:
        return axis
    kept = axis[(axis >= limits[0]) & (axis <= limits[1])]
    return kept if kept.size else np.array([min(max(center, limits[0]), limits[1])])


def _edge_mask(
    axis: np.ndarray, center: float, half: float, limits: tuple[float, float], periodic: bool
) -> np.ndarray:
    """窗口内可以作为局部极大的点：窗口边缘只有落在搜索边界上时才算。"""
    mask = np.ones(axis.size, dtype=bool)
    if periodic or center - half >= limits[0]:
        mask[0] = False
    if periodic or center + half <= limits[1]:
        mask[-1] = False
    return mask


def _builder(cfg: OamSystemConfig, domain: Domain, index: int, lagged: bool = True) -> Builder:
    family_of = mode_steering_family if domain == "mode" else freq_steering_family
    return partial(family_of, cfg, index, lagged=lagged)


def _subspace(cube: EchoCube, domain: Domain, index: int, n_sources: int, sample: int) -> _Subspace:
    cov = sample_covariance(cube, domain, index, sample)
    eigenvalues, qn = _split_subspace(cov, n_sources)
    noise_level = max(float(np.mean(eigenvalues[n_sources:])), _TINY)
    return _Subspace(index, qn, float(np.mean(eigenvalues[:n_sources])) / noise_level)


def _parallel(fn: Callable[[Any], Any], items: Iterable[Any], max_workers: int) -> list[Any]:
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(contextvars.copy_context().run, fn, item) for item in items]
        return [f.result() for f in futures]


def _accumulate_null(
    cfg: OamSystemConfig,
    domain: Domain,
    grid: _Grid,
    accumulator: _NullAccumulator,
    reference: int,
    subspace: _Subspace,
) -> MusicSpectrum | None:
    null = _null_fraction(subspace.noise, _builder(cfg, domain, subspace.index)(grid.axis1, grid.axis2))
    accumulator.add(null)
    if subspace.index != reference:
        return None
    return _nominal(_spectrum_from_null(null, grid.axis1, grid.axis2, grid.period1, grid.period2), grid)


def _joint_scan(
    cfg: OamSystemConfig,
    domain: Domain,
    subspaces: list[_Subspace],
    grid: _Grid,
    reference: int,
    max_workers: int,
) -> tuple[MusicSpectrum, MusicSpectrum]:
    """各下标零陷深度的平均构成联合谱；同时返回参考下标在名义网格上的谱。"""
    accumulator = _NullAccumulator((grid.axis1.size, grid.axis2.size))
    scan = partial(_accumulate_null, cfg, domain, grid, accumulator, reference)
    spectra = _parallel(scan, subspaces, max_workers)
    reference_spectrum = next(s for s in spectra if s is not None)
    joint = _spectrum_from_null(accumulator.mean(), grid.axis1, grid.axis2, grid.period1, grid.period2)
    return joint, reference_spectrum


def _mean_null(
    cfg: OamSystemConfig, domain: Domain, subspaces: list[_Subspace], axis1: np.ndarray, axis2: np.ndarray
) -> np.ndarray:
    total = np.zeros((axis1.size, axis2.size))
    for s in subspaces:
        total += _null_fraction(s.noise, _builder(cfg, domain, s.index, lagged=False)(axis1, axis2))
    return total / len(subspaces)


def _refine_anchor(
    cfg: OamSystemConfig, domain: Domain, subspaces: list[_Subspace], grid: _Grid, factor: int, peak: Peak
) -> Peak:
    axis1 = _fine_axis(peak.axis1, grid.step1, factor, grid.bounds1, grid.period1 is not None)
    axis2 = _fine_axis(peak.axis2, grid.step2, factor, grid.bounds2, grid.period2 is not None)
    values = _spectrum_values(_mean_null(cfg, domain, subspaces, axis1, axis2))
    i, j = np.unravel_index(int(np.argmax(values)), values.shape)
    d1 = _quadratic_offset(values[:, j], int(i), False)
    d2 = _quadratic_offset(values[i, :], int(j), False)
    return Peak(
        axis1=_wrap(float(axis1[i]) + d1 * _axis_step(axis1, None), float(grid.axis1[0]), grid.period1),
        axis2=_wrap(float(axis2[j]) + d2 * _axis_step(axis2, None), float(grid.axis2[0]), grid.period2),
        value=float(values[i, j]),
    )


def _same_cell(a: Peak, b: Peak, grid: _Grid) -> bool:
    d1 = a.axis1 - b.axis1
    d2 = a.axis2 - b.axis2
    if grid.period1 is not None:
        d1 = (d1 + 0.5 * grid.period1) % grid.period1 - 0.5 * grid.period1
    if grid.period2 is not None:
        d2 = (d2 + 0.5 * grid.period2) % grid.period2 - 0.5 * grid.period2
    return abs(d1) < 0.5 * grid.step1 and abs(d2) < 0.5 * grid.step2


def _anchors(
    cfg: OamSystemConfig,
    domain: Domain,
    subspaces: list[_Subspace],
    joint: MusicSpectrum,
    grid: _Grid,
    n_sources: int,
    factor: int,
    max_workers: int,
) -> list[Peak]:
    """联合谱的候选峰细化后取最大的QP个互不重合的峰。"""
    coarse = peak_search(joint, max(1, imaging_config.CANDIDATES_PER_SOURCE) * n_sources)
    refine = partial(_refine_anchor, cfg, domain, subspaces, grid, factor)
    refined = sorted(_parallel(refine, coarse.peaks, max_workers), key=lambda p: -p.value)
    anchors: list[Peak] = []
    for peak in refined:
        if any(_same_cell(peak, a, grid) for a in anchors):
            continue
        anchors.append(peak)
        if len(anchors) == n_sources:
            break
    return anchors


def _local_peak(
    cfg: OamSystemConfig, domain: Domain, subspace: _Subspace, grid: _Grid, factor: int, anchor: Peak
) -> Peak | None:
    """单个下标在锚点±一个名义步长内、离锚点最近的严格局部极大。"""
    half1 = grid.step1 * grid.stride1
    half2 = grid.step2 * grid.stride2
    periodic1, periodic2 = grid.period1 is not None, grid.period2 is not None
    axis1 = _fine_axis(anchor.axis1, half1, factor, grid.bounds1, periodic1)
    axis2 = _fine_axis(anchor.axis2, half2, factor, grid.bounds2, periodic2)
    family = _builder(cfg, domain, subspace.index, lagged=False)(axis1, axis2)
    values = _spectrum_values(_null_fraction(subspace.noise, family))

    mask = _strict_local_maxima(values, False, False)
    mask &= _edge_mask(axis1, anchor.axis1, half1, grid.bounds1, periodic1)[:, None]
    mask &= _edge_mask(axis2, anchor.axis2, half2, grid.bounds2, periodic2)[None, :]
    candidates = np.argwhere(mask)
    if candidates.size == 0:
        return None
    offsets = np.column_stack(
        [(axis1[candidates[:, 0]] - anchor.axis1) / half1, (axis2[candidates[:, 1]] - anchor.axis2) / half2]
    )
    i, j = candidates[int(np.argmin(np.hypot(offsets[:, 0], offsets[:, 1])))]
    d1 = _quadratic_offset(values[:, j], int(i), False)
    d2 = _quadratic_offset(values[i, :], int(j), False)
    return Peak(
        axis1=_wrap(float(axis1[i]) + d1 * _axis_step(axis1, None), float(grid.axis1[0]), grid.period1),
        axis2=_wrap(float(axis2[j]) + d2 * _axis_step(axis2, None), float(grid.axis2[0]), grid.period2),
        value=float(values[i, j]),
    )


def _domain_groups(
    cfg: OamSystemConfig,
    domain: Domain,
    subspace: _Subspace,
    grid: _Grid,
    factor: int,
    anchors: list[Peak],
    n_sources: int,
) -> tuple[np.ndarray, DomainPeaks]:
    group = np.full((len(anchors), 2), np.nan)
    peaks = []
    for a, anchor in enumerate(anchors):
        peak = _local_peak(cfg, domain, subspace, grid, factor, anchor)
        if peak is not None:
            group[a] = (peak.axis1, peak.axis2)
            peaks.append(peak)
    result = DomainPeaks(
        domain=domain,
        index=subspace.index,
        peaks=tuple(peaks),
        shortfall=len(peaks) < n_sources,
        signal_to_noise=subspace.signal_to_noise,
    )
    return group, result


def _scan_domain(
    cube: EchoCube,
    cfg: OamSystemConfig,
    domain: Domain,
    n_sources: int,
    grid: _Grid,
    bounds: SearchBounds,
    sample: int,
    max_workers: int,
) -> tuple[list[Peak], np.ndarray, list[DomainPeaks], MusicSpectrum, MusicSpectrum, int]:
    """一个域的联合谱、锚点与逐下标分组；分组形状 (下标数, 锚点数, 2)。"""
    count = cfg.n_subcarriers if domain == "mode" else cfg.n_modes
    subspaces = [_subspace(cube, domain, index, n_sources, sample) for index in range(count)]
    reference = max(subspaces, key=lambda s: s.signal_to_noise).index

    joint, reference_spectrum = _joint_scan(cfg, domain, subspaces, grid, reference, max_workers)
    if joint.saturated:
        logger.debug("music_spectrum_saturated", domain=domain)
    anchors = _anchors(cfg, domain, subspaces, joint, grid, n_sources, bounds.refine_factor, max_workers)

    group_of = partial(
        _domain_groups, cfg, domain, grid=grid, factor=bounds.refine_factor, anchors=anchors, n_sources=n_sources
    )
    outputs = _parallel(group_of, subspaces, max_workers)
    groups = np.stack([g for g, _ in outputs]) if anchors else np.zeros((count, 0, 2))
    results = [r for _, r in outputs]
    return anchors, groups, results, reference_spectrum, _nominal(joint, grid), reference


def _joint_signal_basis(cube: EchoCube, n_sources: int, sample: int) -> np.ndarray:
    """U·W 维快拍协方差的前QP个特征向量，u 为慢变下标。"""
    n_modes, n_sub, _, n_snap = cube.shape
    vectors = cube.data[:, :, sample, :].reshape(n_modes * n_sub, n_snap)
    cov = vectors @ vectors.conj().T / n_snap
    _, basis = hermitian_evd(0.5 * (cov + cov.conj().T))
    return basis[:, :n_sources]


def _circular_mean(values: np.ndarray, period: float) -> float:
    angles = TWO_PI * values / period
    return float(np.angle(np.mean(np.exp(1j * angles))) / TWO_PI * period) % period


def _wrap_azimuth(phi: float) -> float:
    wrapped = phi % TWO_PI
    return 0.0 if wrapped >= TWO_PI else wrapped


def _present(values: np.ndarray) -> np.ndarray:
    return values[~np.isnan(values)]


def _worst_pairing(scores: np.ndarray, pairs: np.ndarray) -> float | None:
    if pairs.size == 0 or np.any(pairs < 0):
        return None
    return float(np.max(scores[np.arange(pairs.size), pairs]))


def _nearest_cue(cues: tuple[tuple[float, float, float], ...], theta: float, phi: float) -> float:
    def angular(cue: tuple[float, float, float]) -> float:
        dphi = (phi - cue[2] + math.pi) % TWO_PI - math.pi
        return math.hypot(theta - cue[1], dphi * math.sin(cue[1]))

    return min(cues, key=angular)[0]


def estimate_positions(
    cube: EchoCube,
    cfg: OamSystemConfig,
    n_sources: int,
    bounds: SearchBounds | None = None,
    sample: int = 0,
    max_workers: int | None = None,
) -> ImagingReport:
    """两域MUSIC融合的三维位置估计。

    每个域的QP个锚点取自联合谱，分组是各下标在锚点附近的局部谱峰（窗口边缘的
    极大记为缺失）。每个频率域锚点配一个模态域锚点：先一对一贪心，剩下的取代价
    最小者，因为同一目标的散射点在模态域可能不可分。估计与频率域锚点一一对应：
    φ̂ 为模态域分组的圆周平均，r̂ 为频率域分组在模糊周期内的圆周平均再按最近的
    线索解模糊，θ̂ 为两组共最多 U+W 个俯仰估计的平均；分组全部缺失时用锚点本身。

    Args:
        cube: 回波立方体（通常只有一个慢时间样本）
        cfg: 系统配置
        n_sources: 散射点总数 QP
        bounds: 搜索范围，缺省为 r ∈ [20R, 300 m]、θ ∈ [5°, 90°]、φ ∈ [0, 2π)
        sample: 使用的慢时间样本
        max_workers: 线程数，缺省为 settings.MAX_WORKERS

    Returns:
        ImagingReport，估计按频率域锚点的联合谱值降序

    Raises:
        ImagingError: QP 不小于 U 或 W，或立方体为空
    """
    if n_sources < 1 or n_sources >= cfg.n_modes or n_sources >= cfg.n_subcarriers:
        raise ImagingError(
            "散射点数必须小于模态数和子载波数",
            n_sources=n_sources,
            modes=cfg.n_modes,
            subcarriers=cfg.n_subcarriers,
        )
    bounds = bounds or SearchBounds(range_min=20 * cfg.radius)
    workers = max_workers or settings.MAX_WORKERS
    ambiguity = range_ambiguity(cfg)
    mode_grid = _mode_grid(bounds)
    freq_grid = _freq_grid(bounds, ambiguity)
    folded = freq_grid.period1 is not None

    with track_stage("imaging_mode_domain"):
        mode_anchors, mode_groups, mode_results, mode_ref_spec, mode_joint, ref_w = _scan_domain(
            cube, cfg, "mode", n_sources, mode_grid, bounds, sample, workers
        )
    with track_stage("imaging_freq_domain"):
        freq_anchors, freq_groups, freq_results, freq_ref_spec, freq_joint, ref_u = _scan_domain(
            cube, cfg, "frequency", n_sources, freq_grid, bounds, sample, workers
        )

    shortfalls = [(r.domain, r.index) for r in mode_results + freq_results if r.shortfall]
    for domain, _ in shortfalls:
        music_peak_shortfall_total.labels(domain=domain).inc()
    if len(mode_anchors) < n_sources:
        shortfalls.append(("mode_anchors", len(mode_anchors)))
    if len(freq_anchors) < n_sources:
        shortfalls.append(("frequency_anchors", len(freq_anchors)))

    mode_points = np.array([[p.axis1, p.axis2] for p in mode_anchors], dtype=np.float64).reshape(-1, 2)
    freq_points = np.array([[p.axis1, p.axis2] for p in freq_anchors], dtype=np.float64).reshape(-1, 2)
    with track_stage("imaging_pairing"):
        scores = pairing_scores(cfg, _joint_signal_basis(cube, n_sources, sample), mode_points, freq_points)
        pairs = _pair_anchors(scores)

    if folded and not bounds.range_cues:
        logger.warning("range_unwrap_without_cues", ambiguity_m=ambiguity, window_start=bounds.range_min)

    estimates = []
    for q, p in enumerate(pairs):
        if p < 0:
            shortfalls.append(("association", q))
            continue
        ranges = _present(freq_groups[:, q, 0])
        phis = _present(mode_groups[:, p, 1])
        thetas = np.concatenate([_present(mode_groups[:, p, 0]), _present(freq_groups[:, q, 1])])
        theta_hat = float(np.mean(thetas)) if thetas.size else 0.5 * (mode_points[p, 0] + freq_points[q, 1])
        phi_hat = _circular_mean(phis if phis.size else mode_points[p, 1:], TWO_PI)
        range_samples = ranges if ranges.size else freq_points[q, :1]
        if folded:
            r_hat = bounds.range_min + _circular_mean(range_samples - bounds.range_min, ambiguity)
            if bounds.range_cues:
                r_hat = unwrap_range(r_hat, _nearest_cue(bounds.range_cues, theta_hat, phi_hat), ambiguity)
        else:
            r_hat = float(np.mean(range_samples))
        estimates.append(
            PositionEstimate(
                range_m=r_hat,
                elevation=min(max(theta_hat, 0.0), math.pi),
                azimuth=_wrap_azimuth(phi_hat),
                mode_sources=int(phis.size),
                freq_sources=int(ranges.size),
            )
        )

    logger.info(
        "imaging_completed",
        estimates=len(estimates),
        shortfalls=len(shortfalls),
        reference_subcarrier=ref_w,
        reference_mode=ref_u,
        range_folded=folded,
        worst_pairing=_worst_pairing(scores, pairs),
    )
    return ImagingReport(
        estimates=tuple(estimates),
        domain_peaks=tuple(mode_results + freq_results),
        reference_mode_index=ref_w,
        reference_freq_index=ref_u,
        mode_spectrum=mode_ref_spec,
        freq_spectrum=freq_ref_spec,
        joint_mode_spectrum=mode_joint,
        joint_freq_spectrum=freq_joint,
        shortfalls=tuple(shortfalls),
        range_folded=folded,
    )
