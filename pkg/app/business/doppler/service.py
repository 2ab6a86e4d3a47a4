"""慢时间STFT、脊线提取、线性多普勒消除与转速估计。"""

import contextvars
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import signal as sp_signal

from app.business.doppler.schemas import (
    DopplerTrack,
    SpinEstimate,
    StftParams,
    TargetSpinReport,
)
from app.business.forward_model.schemas import EchoCube
from app.business.scene.schemas import TargetState
from app.business.scene.service import (
    azimuth_rate_doppler,
    range_rate_doppler,
    rotational_doppler,
)
from app.core.config import settings
from app.core.errors import DopplerError
from app.core.logging import logger
from app.core.metrics import track_stage
from app.core.numerics import (
    Spectrogram,
    bessel_j,
    stft,
)

PEAK_RATIO = 0.8
MIN_TRACK_COVERAGE = 0.5
SLOPE_SMOOTHING = 0.5
MAX_EXTRAPOLATION_FRAMES = 8


def focus_target(
    cube: EchoCube,
    u: int,
    range_m: float,
    radius: float | None = None,
    elevation: float | None = None,
) -> np.ndarray:
    """把模态u的各子载波慢时间序列按目标位置聚焦。

    只给距离时做相位聚焦 (1/W)Σ_w e^{−i2k_w r}·E'(u, w)；同时给出阵列半径与俯仰角时
    用模态域导向矢量 b_w = e^{i2k_w r}·J_ℓ(x_w)·J_0(x_w) 做匹配滤波 Σ_w b_w^*·E'(u, w)/‖b‖²。

    Returns:
        N_t×L 的复数组，每列对应一个快拍

    Raises:
        DopplerError: 模态下标越界、距离非正，或导向矢量在该方向为零
    """
    if not 0 <= u < cube.shape[0]:
        raise DopplerError("模态下标越界", index=u, size=cube.shape[0])
    if range_m <= 0:
        raise DopplerError("聚焦距离必须为正", range_m=range_m)
    k = cube.wavenumbers
    steering = np.exp(2j * k * range_m)
    if elevation is None:
        return np.einsum("w,wnl->nl", np.conj(steering), cube.data[u]) / k.size
    if radius is None or radius <= 0:
        raise DopplerError("按方向聚焦需要正的阵列半径", radius=radius)
    x = k * radius * math.sin(elevation)
    steering = steering * bessel_j(int(cube.modes[u]), x) * bessel_j(0, x)
    energy = float(np.sum(np.abs(steering) ** 2))
    if energy <= 0.0:
        raise DopplerError("聚焦方向上的导向矢量为零", mode=int(cube.modes[u]), elevation=elevation)
    return np.einsum("w,wnl->nl", np.conj(steering), cube.data[u]) / energy


def _mean_spectrogram(series: np.ndarray, sample_rate: float, params: StftParams) -> Spectrogram:
    """各列STFT幅度的平均。"""
    frames = [
        stft(
            series[:, col],
            sample_rate,
            window_len=params.window_len,
            hop=params.hop,
            window=params.window,
            pad_factor=params.pad_factor,
        )
        for col in range(series.shape[1])
    ]
    return Spectrogram(
        magnitudes=np.mean([f.magnitudes for f in frames], axis=0),
        time_axis=frames[0].time_axis,
        freq_axis=frames[0].freq_axis,
    )


def _frame_ridges(column: np.ndarray, threshold: float, bin_width: float, limit: int) -> list[tuple[float, float]]:
    """一帧中超过门限的局部极大，按幅度降序，频率经对数抛物线插值。"""
    peaks, props = sp_signal.find_peaks(column, height=threshold)
    order = np.argsort(-props["peak_heights"], kind="stable")[:limit]
    ridges = []
    for idx in peaks[order]:
        offset = 0.0
        if 0 < idx < column.size - 1 and column[idx - 1] > 0 and column[idx + 1] > 0:
            lm, l0, lp = np.log(column[idx - 1 : idx + 2])
            curvature = lm - 2 * l0 + lp
            if curvature < 0:
                offset = float(np.clip(0.5 * (lm - lp) / curvature, -0.5, 0.5))
        ridges.append((idx + offset, float(column[idx])))
    return [(pos * bin_width, mag) for pos, mag in ridges]


def link_ridges(
    spectrogram: Spectrogram, max_tracks: int, rel_threshold: float, max_jump_hz: float
) -> list[tuple[np.ndarray, np.ndarray]]:
    """按频率连续性把逐帧脊点连成至多max_tracks条脊线。

    每条脊线按平滑后的斜率外推到当前帧，脊点贪心分配给外推频率最近的已有脊线，
    剩余脊点开启新脊线。两条脊线交叉或合并时，斜率使各自沿原方向延续。
    有效帧不足一半的脊线被丢弃，缺失帧线性插值。

    Returns:
        (frequencies, magnitudes) 列表，按平均幅度降序
    """
    mags = spectrogram.magnitudes
    n_frames = spectrogram.time_bins
    threshold = rel_threshold * float(mags.max(initial=0.0))
    if threshold <= 0.0:
        return []
    origin = float(spectrogram.freq_axis[0])
    width = spectrogram.bin_width

    freqs = np.full((max_tracks, n_frames), np.nan)
    amps = np.full((max_tracks, n_frames), np.nan)
    last = np.full(max_tracks, np.nan)
    last_frame = np.zeros(max_tracks, dtype=np.int64)
    slope = np.zeros(max_tracks)
    for t in range(n_frames):
        ridges = [(origin + f, m) for f, m in _frame_ridges(mags[:, t], threshold, width, max_tracks)]
        if not ridges:
            continue
        gap = np.minimum(t - last_frame, MAX_EXTRAPOLATION_FRAMES)
        predicted = last + slope * gap
        pairs = sorted(
            (abs(predicted[i] - f), i, j)
            for i in range(max_tracks)
            if not np.isnan(last[i])
            for j, (f, _) in enumerate(ridges)
            if abs(predicted[i] - f) <= max_jump_hz
        )
        used_tracks: set[int] = set()
        used_ridges: set[int] = set()
        for _, i, j in pairs:
            if i in used_tracks or j in used_ridges:
                continue
            used_tracks.add(i)
            used_ridges.add(j)
            freqs[i, t], amps[i, t] = ridges[j]
            step = (freqs[i, t] - last[i]) / (t - last_frame[i])
            slope[i] = SLOPE_SMOOTHING * step + (1.0 - SLOPE_SMOOTHING) * slope[i]
        idle = [i for i in range(max_tracks) if np.isnan(last[i])]
        for j, ridge in enumerate(ridges):
            if j in used_ridges or not idle:
                continue
            i = idle.pop(0)
            freqs[i, t], amps[i, t] = ridge
        valid = ~np.isnan(freqs[:, t])
        last[valid] = freqs[valid, t]
        last_frame[valid] = t

    tracks = []
    frame_index = np.arange(n_frames)
    for i in range(max_tracks):
        valid = ~np.isnan(freqs[i])
        if valid.sum() < max(2, MIN_TRACK_COVERAGE * n_frames):
            continue
        tracks.append(
            (
                np.interp(frame_index, frame_index[valid], freqs[i, valid]),
                np.interp(frame_index, frame_index[valid], amps[i, valid]),
            )
        )
    tracks.sort(key=lambda tr: -float(np.mean(tr[1])))
    return tracks


def _tracks_from_series(
    series: np.ndarray,
    sample_rate: float,
    mode: int,
    subcarrier: int | None,
    params: StftParams,
    max_tracks: int,
) -> tuple[list[DopplerTrack], Spectrogram]:
    if series.shape[0] < 2 * params.window_len:
        raise DopplerError(
            "慢时间序列不足两个窗长", samples=int(series.shape[0]), window_len=params.window_len
        )
    spectrogram = _mean_spectrogram(series, sample_rate, params)
    max_jump = params.max_jump_hz or sample_rate / 16.0
    linked = link_ridges(spectrogram, max_tracks, params.rel_threshold, max_jump)
    if not linked:
        raise DopplerError("没有超过门限的时频脊线", mode=mode, subcarrier=subcarrier)
    tracks = [
        DopplerTrack(
            times=spectrogram.time_axis,
            frequencies=f,
            magnitudes=m,
            mode=mode,
            subcarrier=subcarrier,
        )
        for f, m in linked
    ]
    return tracks, spectrogram


def _slow_time(
    cube: EchoCube,
    u: int,
    w: int | None,
    focus_range: float | None,
    radius: float | None = None,
    elevation: float | None = None,
) -> np.ndarray:
    """STFT的输入列：单个子载波的各快拍、聚焦序列，或全部 (子载波, 快拍) 组合。"""
    if not 0 <= u < cube.shape[0]:
        raise DopplerError("模态下标越界", index=u, size=cube.shape[0])
    if w is not None:
        if not 0 <= w < cube.shape[1]:
            raise DopplerError("子载波下标越界", u=u, w=w)
        return cube.data[u, w]
    if focus_range is not None:
        return focus_target(cube, u, focus_range, radius, elevation)
    return np.moveaxis(cube.data[u], 0, 1).reshape(cube.shape[2], -1)


def mode_spectrogram(
    cube: EchoCube,
    u: int,
    w: int | None = None,
    focus_range: float | None = None,
    params: StftParams | None = None,
    radius: float | None = None,
    elevation: float | None = None,
) -> Spectrogram:
    """模态u的慢时间STFT幅度。

    给出w时为该子载波各快拍的平均；否则给出 focus_range 时为聚焦序列，
    都不给时为全部子载波与快拍的非相干平均。
    """
    params = params or StftParams()
    return _mean_spectrogram(_slow_time(cube, u, w, focus_range, radius, elevation), cube.sample_rate, params)


def extract_tracks(
    cube: EchoCube,
    u: int,
    w: int | None,
    params: StftParams | None = None,
    max_tracks: int = 3,
    focus_range: float | None = None,
) -> list[DopplerTrack]:
    """(u, w) 慢时间序列的时频脊线。

    w 为 None 时对按 focus_range 聚焦后的序列处理，未给距离时对全部子载波非相干平均。

    Raises:
        DopplerError: 序列短于两个窗长或没有超过门限的脊点
    """
    params = params or StftParams()
    series = _slow_time(cube, u, w, focus_range)
    tracks, _ = _tracks_from_series(series, cube.sample_rate, int(cube.modes[u]), w, params, max_tracks)
    return tracks


def rotational_component(track_l: DopplerTrack, track_0: DopplerTrack) -> DopplerTrack:
    """逐点差分 f_D(ℓ) − f_D(0)，消去与模态无关的线性多普勒。

    Raises:
        DopplerError: 时间轴或子载波不一致，或输入模态为0
    """
    if track_l.mode == 0:
        raise DopplerError("被差分的脊线模态不能为0")
    if track_0.mode != 0:
        raise DopplerError("参考脊线必须来自模态0", mode=track_0.mode)
    if track_l.subcarrier != track_0.subcarrier:
        raise DopplerError("两条脊线的子载波不一致", left=track_l.subcarrier, right=track_0.subcarrier)
    if track_l.times.shape != track_0.times.shape or not np.allclose(track_l.times, track_0.times):
        raise DopplerError("两条脊线的时间轴不一致")
    return DopplerTrack(
        times=track_l.times,
        frequencies=track_l.frequencies - track_0.frequencies,
        magnitudes=np.minimum(track_l.magnitudes, track_0.magnitudes),
        mode=track_l.mode,
        subcarrier=track_l.subcarrier,
    )


def _parabolic_lag(ac: np.ndarray, idx: int) -> float:
    if idx <= 0 or idx >= ac.size - 1:
        return float(idx)
    curvature = ac[idx - 1] - 2 * ac[idx] + ac[idx + 1]
    if curvature >= 0:
        return float(idx)
    return idx + float(np.clip(0.5 * (ac[idx - 1] - ac[idx + 1]) / curvature, -0.5, 0.5))


def estimate_period(values: np.ndarray, dt: float) -> float | None:
    """自相关主峰给出的周期（秒）。

    先取首个过零点之后、不小于最高峰0.8倍的第一个局部极大作为粗周期，
    再对各整数倍周期附近的峰做抛物线细化，用过原点的最小二乘拟合出周期。
    序列不足两个周期、没有周期性或过零点之后的峰全为负时返回None。
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 4 or dt <= 0:
        return None
    x = x - x.mean()
    if not np.any(np.abs(x) > 0):
        return None
    full = sp_signal.correlate(x, x, mode="full")[n - 1 :]
    ac = full / (n - np.arange(n))
    ac = ac / ac[0]

    max_lag = n // 2
    below = np.flatnonzero(ac[: max_lag + 1] <= 0.0)
    if below.size == 0:
        return None
    start = int(below[0])
    peaks, _ = sp_signal.find_peaks(ac[start : max_lag + 1])
    if peaks.size == 0:
        return None
    peaks = peaks + start
    best = float(ac[peaks].max())
    if best <= 0.0:
        return None
    strong = np.flatnonzero(ac[peaks] >= PEAK_RATIO * best)
    first = int(peaks[strong[0]])
    coarse = _parabolic_lag(ac, first)

    orders, lags = [], []
    for k in range(1, int(max_lag / coarse) + 1):
        centre = k * coarse
        lo = max(1, int(math.floor(centre - 0.25 * coarse)))
        hi = min(max_lag, int(math.ceil(centre + 0.25 * coarse)))
        if hi <= lo:
            break
        idx = lo + int(np.argmax(ac[lo : hi + 1]))
        orders.append(k)
        lags.append(_parabolic_lag(ac, idx))
    orders_arr = np.asarray(orders, dtype=np.float64)
    period_lags = float(np.dot(orders_arr, lags) / np.dot(orders_arr, orders_arr)) if orders else coarse

    period = period_lags * dt
    if 2 * period > n * dt:
        return None
    return period


def estimate_spin(components: list[DopplerTrack], resolution: float = 0.0) -> SpinEstimate:
    """由各非零模态的旋转分量脊线估计转速，Ω̂ 为各模态 2π/T_u 的平均。

    所有分量的起伏都不超过 resolution（通常为一个STFT频率单元）时判定为静止。

    Raises:
        DopplerError: 没有非零模态分量，或所有分量都短于两个周期
    """
    nonzero = [c for c in components if c.mode != 0]
    if not nonzero:
        raise DopplerError("没有非零模态的旋转分量")
    if max(c.spread for c in nonzero) <= resolution:
        return SpinEstimate(spin_rate=0.0, static=True)

    per_mode: dict[int, float] = {}
    periods: dict[int, float] = {}
    excluded: list[int] = []
    for comp in nonzero:
        dt = float(np.mean(np.diff(comp.times))) if comp.times.size > 1 else 0.0
        period = estimate_period(comp.frequencies, dt)
        if period is None:
            excluded.append(comp.mode)
            continue
        periods[comp.mode] = period
        per_mode[comp.mode] = 2 * math.pi / period

    if not per_mode:
        raise DopplerError("所有模态的脊线都不足两个旋转周期", excluded_modes=excluded)
    if excluded:
        logger.warning("spin_modes_excluded", excluded_modes=excluded)
    return SpinEstimate(
        spin_rate=sum(per_mode.values()) / len(per_mode),
        per_mode=per_mode,
        periods=periods,
        excluded_modes=tuple(excluded),
    )


def theoretical_tracks(
    target: TargetState, modes: list[int] | np.ndarray, times: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """顶点散射点方位变化引起的理论旋转多普勒曲线。

    Returns:
        (closed_form, kinematic)，形状均为 (len(modes), len(times))；
        前者为闭式规律，后者为运动学轨迹的 (ℓ/2π)·dφ/dt
    """
    vertex = target.vertex
    times = np.asarray(times, dtype=np.float64)
    closed = np.stack([np.atleast_1d(rotational_doppler(target, vertex, int(m), times)) for m in modes])
    kinematic = np.stack([np.atleast_1d(azimuth_rate_doppler(target, vertex, int(m), times)) for m in modes])
    return closed, kinematic


def micro_doppler_theory(
    target: TargetState, modes: list[int] | np.ndarray, wavenumber: float, times: np.ndarray
) -> np.ndarray:
    """顶点散射点的完整理论多普勒 (k/π)·dr/dt + (ℓ/2π)·dφ/dt，形状 (len(modes), len(times))。"""
    vertex = target.vertex
    times = np.asarray(times, dtype=np.float64)
    radial = np.atleast_1d(range_rate_doppler(target, vertex, wavenumber, times))
    return np.stack([radial + np.atleast_1d(azimuth_rate_doppler(target, vertex, int(m), times)) for m in modes])


def _mode_tracks(
    cube: EchoCube,
    u: int,
    focus_range: float | None,
    radius: float | None,
    elevation: float | None,
    params: StftParams,
    max_tracks: int,
) -> tuple[list[DopplerTrack], Spectrogram]:
    series = _slow_time(cube, u, None, focus_range, radius, elevation)
    return _tracks_from_series(series, cube.sample_rate, int(cube.modes[u]), None, params, max_tracks)


def _median_gap(track: DopplerTrack, other: DopplerTrack) -> float:
    return float(np.median(np.abs(track.frequencies - other.frequencies)))


def detect_spin(
    cube: EchoCube,
    focus_range: float | None = None,
    params: StftParams | None = None,
    max_tracks: int = 3,
    target_index: int = 0,
    max_workers: int | None = None,
    radius: float | None = None,
    focus_elevation: float | None = None,
) -> TargetSpinReport:
    """单个目标的转速检测。

    每个模态的时频图来自全部子载波的非相干平均，给出 focus_range 时改为聚焦序列。
    模态0中起伏最小的脊线作为线性多普勒参考，每个非零模态取起伏最大的脊线与参考差分，
    再逐模态估计周期并平均。另外把每个非零模态中与模态0最强起伏脊线最接近的脊线
    与之差分，得到同一散射点只含方位项的分量。

    Raises:
        DopplerError: 模态集合不含0、无可用脊线或观测不足两个周期
    """
    params = params or StftParams()
    modes = [int(m) for m in cube.modes]
    if 0 not in modes:
        raise DopplerError("转速检测需要模态0作为线性多普勒参考", modes=modes)

    with track_stage("doppler_tracks"):
        with ThreadPoolExecutor(max_workers=max_workers or settings.MAX_WORKERS) as pool:
            futures = [
                pool.submit(
                    contextvars.copy_context().run,
                    _mode_tracks,
                    cube,
                    u,
                    focus_range,
                    radius,
                    focus_elevation,
                    params,
                    max_tracks,
                )
                for u in range(len(modes))
            ]
            results = [f.result() for f in futures]

    resolution = results[0][1].bin_width
    zero_tracks = results[modes.index(0)][0]
    reference = min(zero_tracks, key=lambda tr: tr.spread)
    anchor = max(zero_tracks, key=lambda tr: tr.spread)
    components = []
    azimuthal = []
    for (tracks, _), mode in zip(results, modes):
        if mode == 0:
            continue
        components.append(rotational_component(max(tracks, key=lambda tr: tr.spread), reference))
        azimuthal.append(rotational_component(min(tracks, key=lambda tr: _median_gap(tr, anchor)), anchor))
    estimate = estimate_spin(components, resolution=resolution)
    logger.info(
        "spin_detected",
        target_index=target_index,
        focus_range=focus_range,
        spin_rate=estimate.spin_rate,
        static=estimate.static,
        modes_used=len(estimate.per_mode),
    )
    return TargetSpinReport(
        target_index=target_index,
        focus_range=focus_range,
        estimate=estimate,
        components=tuple(components),
        reference=reference,
        azimuthal_components=tuple(azimuthal),
        resolution=resolution,
    )
