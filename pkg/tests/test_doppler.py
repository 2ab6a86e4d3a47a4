"""时频脊线提取与转速估计的测试。"""

import math

import numpy as np
import pytest

from app.business.doppler.schemas import (
    DopplerTrack,
    SpinEstimate,
    StftParams,
)
from app.business.doppler.service import (
    detect_spin,
    estimate_period,
    estimate_spin,
    extract_tracks,
    focus_target,
    mode_spectrogram,
    rotational_component,
)
from app.business.experiments.presets import (
    load_preset,
    three_cone_scene,
)
from app.business.experiments.schemas import ScenarioConfig
from app.business.experiments.service import detect_target_spins
from app.business.forward_model.schemas import EchoCube
from app.core.errors import DopplerError
from app.core.numerics import bessel_j
from app.utils.rng import derive_seed

FS = 4000.0
DURATION = 2.0
SPIN = 8 * math.pi


def _times(fs: float = FS, duration: float = DURATION) -> np.ndarray:
    return np.arange(int(round(fs * duration))) / fs


def _fm_tone(offset_hz: float, deviation_hz: float, times: np.ndarray) -> np.ndarray:
    """瞬时频率为 offset + deviation·cos(Ωt) 的复信号。"""
    phase = offset_hz * times + deviation_hz / SPIN * np.sin(SPIN * times)
    return np.exp(2j * np.pi * phase)


def _cube(series_by_mode: dict[int, np.ndarray], times: np.ndarray, fs: float = FS) -> EchoCube:
    modes = np.array(sorted(series_by_mode), dtype=np.int64)
    data = np.stack([series_by_mode[int(m)] for m in modes])[:, None, :, None]
    return EchoCube(
        data=data,
        modes=modes,
        wavenumbers=np.array([209.0]),
        sample_rate=fs,
        times=times,
        rcs_draws=np.ones((1, 1), dtype=complex),
        symbols=np.zeros((modes.size, 1, 1), dtype=np.int64),
    )


def _track(mode: int, frequencies: np.ndarray, dt: float = 0.004) -> DopplerTrack:
    times = np.arange(frequencies.size) * dt
    return DopplerTrack(times=times, frequencies=frequencies, magnitudes=np.ones_like(frequencies), mode=mode)


def test_estimate_period_sinusoid():
    """正弦序列的周期误差在1%以内。"""
    t = np.arange(500) * 0.004
    period = estimate_period(np.sin(2 * np.pi * t / 0.25 + 0.3), 0.004)
    assert period == pytest.approx(0.25, rel=0.01)


def test_estimate_period_requires_two_periods():
    """不足两个周期或没有起伏时返回None。"""
    t = np.arange(500) * 0.004
    assert estimate_period(np.sin(2 * np.pi * t / 1.5), 0.004) is None
    assert estimate_period(np.full(500, 3.0), 0.004) is None
    assert estimate_period(np.zeros(3), 0.004) is None


def test_estimate_spin_from_components():
    """各非零模态的旋转分量给出 Ω̂ = 2π/T 的平均。"""
    t = np.arange(500) * 0.004
    components = [_track(ell, ell * 40.0 * np.cos(SPIN * t + 0.4)) for ell in (-1, 2)]
    estimate = estimate_spin(components, resolution=7.8125)
    assert not estimate.static
    assert set(estimate.per_mode) == {-1, 2}
    assert estimate.spin_rate == pytest.approx(SPIN, rel=0.01)
    assert estimate.periods[2] == pytest.approx(0.25, rel=0.01)


def test_estimate_spin_static_and_errors():
    """起伏不超过分辨率时判定静止；没有非零模态时报错。"""
    flat = [_track(1, np.full(200, 12.0)), _track(-1, np.full(200, -3.0))]
    estimate = estimate_spin(flat, resolution=7.8125)
    assert estimate.static
    assert estimate.spin_rate == 0.0
    with pytest.raises(DopplerError):
        estimate_spin([_track(0, np.zeros(10))])


def test_estimate_spin_excludes_short_modes():
    """观测不足两个周期的模态被排除，全部不足时报错。"""
    t = np.arange(500) * 0.004
    slow = _track(1, 30.0 * np.cos(2 * np.pi * t / 1.5))
    fast = _track(2, 60.0 * np.cos(SPIN * t))
    estimate = estimate_spin([slow, fast], resolution=1.0)
    assert estimate.excluded_modes == (1,)
    assert estimate.spin_rate == pytest.approx(SPIN, rel=0.01)
    with pytest.raises(DopplerError):
        estimate_spin([slow], resolution=1.0)


def test_rotational_component_differences():
    """差分消去共同的线性多普勒。"""
    t = np.arange(100) * 0.004
    base = np.full(100, 50.0)
    diff = rotational_component(_track(2, base + np.sin(t)), _track(0, base))
    np.testing.assert_allclose(diff.frequencies, np.sin(t))
    assert diff.mode == 2


def test_rotational_component_errors():
    """参考不是模态0、被差分的是模态0或时间轴不一致时报错。"""
    a = _track(1, np.zeros(10))
    zero = _track(0, np.zeros(10))
    with pytest.raises(DopplerError):
        rotational_component(zero, zero)
    with pytest.raises(DopplerError):
        rotational_component(a, a)
    with pytest.raises(DopplerError):
        rotational_component(a, _track(0, np.zeros(10), dt=0.005))


def test_track_and_estimate_validation():
    """脊线时间严格递增；Ω̂ 必须等于各模态估计的平均。"""
    with pytest.raises(ValueError):
        DopplerTrack(times=np.array([0.0, 0.0]), frequencies=np.zeros(2), magnitudes=np.zeros(2), mode=1)
    with pytest.raises(ValueError):
        SpinEstimate(spin_rate=3.0, per_mode={1: 1.0, 2: 2.0})
    with pytest.raises(ValueError):
        SpinEstimate(spin_rate=1.0)
    with pytest.raises(ValueError):
        StftParams(window_len=64, hop=128)


def test_focus_target_coherent_sum():
    """按距离聚焦是 e^{−i2k_w r} 加权的子载波平均。"""
    times = _times(fs=100.0, duration=0.1)
    k = np.array([209.0, 210.0, 211.0])
    data = np.exp(2j * k * 37.5)[None, :, None, None] * np.ones((1, 3, times.size, 2))
    cube = EchoCube(
        data=data,
        modes=np.array([0]),
        wavenumbers=k,
        sample_rate=100.0,
        times=times,
        rcs_draws=np.ones((1, 2), dtype=complex),
        symbols=np.zeros((1, 3, 2), dtype=np.int64),
    )
    focused = focus_target(cube, 0, 37.5)
    assert focused.shape == (times.size, 2)
    np.testing.assert_allclose(focused, 1.0)
    assert np.all(np.abs(focus_target(cube, 0, 37.5 + math.pi / 2)) < 0.5)
    with pytest.raises(DopplerError):
        focus_target(cube, 1, 37.5)
    with pytest.raises(DopplerError):
        focus_target(cube, 0, 0.0)


def test_extract_tracks_follows_fm_ridge():
    """调频信号的主脊线呈周期为 2π/Ω 的起伏。"""
    times = _times()
    cube = _cube({1: _fm_tone(0.0, 200.0, times)}, times)
    tracks = extract_tracks(cube, 0, 0)
    assert tracks[0].mode == 1
    assert tracks[0].subcarrier == 0
    dt = float(np.mean(np.diff(tracks[0].times)))
    assert estimate_period(tracks[0].frequencies, dt) == pytest.approx(0.25, rel=0.02)


def test_extract_tracks_short_series():
    """慢时间序列不足两个窗长时报错。"""
    times = _times(duration=0.05)
    cube = _cube({1: _fm_tone(0.0, 100.0, times)}, times)
    with pytest.raises(DopplerError):
        extract_tracks(cube, 0, 0)


def test_mode_spectrogram_shape():
    """时频图频率轴覆盖 (−fs/2, fs/2]。"""
    times = _times()
    cube = _cube({0: _fm_tone(100.0, 0.0, times)}, times)
    params = StftParams()
    spec = mode_spectrogram(cube, 0, w=0, params=params)
    assert spec.freq_bins == params.window_len * params.pad_factor
    assert spec.freq_axis[-1] == FS / 2
    peak = spec.freq_axis[np.argmax(spec.magnitudes[:, 10])]
    assert abs(peak - 100.0) <= spec.bin_width


def test_detect_spin_removes_linear_doppler():
    """模态0的平稳脊线作为参考，非零模态的起伏给出转速。"""
    times = _times()
    series = {ell: _fm_tone(150.0, ell * 60.0, times) for ell in (-2, -1, 1, 2)}
    series[0] = _fm_tone(150.0, 0.0, times)
    report = detect_spin(_cube(series, times), focus_range=37.5, max_workers=2)
    assert np.allclose(report.reference.frequencies, 150.0, atol=8.0)
    assert [c.mode for c in report.components] == [-2, -1, 1, 2]
    assert not report.estimate.static
    assert report.estimate.spin_rate == pytest.approx(SPIN, rel=0.03)


def test_detect_spin_static_target():
    """所有模态都是同一单音时判定静止。"""
    times = _times()
    series = {ell: _fm_tone(-120.0, 0.0, times) for ell in (-1, 0, 1)}
    report = detect_spin(_cube(series, times), focus_range=10.0)
    assert report.estimate.static
    assert report.estimate.spin_rate == 0.0


def test_detect_spin_requires_mode_zero():
    """模态集合不含0时报错。"""
    times = _times()
    series = {ell: _fm_tone(0.0, 50.0, times) for ell in (1, 2)}
    with pytest.raises(DopplerError):
        detect_spin(_cube(series, times), focus_range=10.0)


def test_estimate_period_negative_peaks_only():
    """过零点之后的自相关峰全为负时返回None。"""
    i = np.arange(40)
    ramp_with_ripple = (i - 19.5) + 4.0 * (-1.0) ** i
    assert estimate_period(ramp_with_ripple, 0.004) is None


def test_focus_target_matched_filter():
    """给出阵列半径与俯仰角时按联合导向矢量匹配滤波，恢复复幅度。"""
    times = _times(fs=100.0, duration=0.1)
    k = np.array([209.0, 210.0, 211.0, 212.0])
    radius, elevation, range_m = 0.9, 0.5, 42.0
    x = k * radius * math.sin(elevation)
    steering = np.exp(2j * k * range_m) * bessel_j(2, x) * bessel_j(0, x)
    amplitude = np.array([0.3 - 0.4j, 1.5 + 0.2j])
    data = steering[:, None, None] * amplitude[None, None, :] * np.ones((1, times.size, 1))
    cube = EchoCube(
        data=data[None],
        modes=np.array([2]),
        wavenumbers=k,
        sample_rate=100.0,
        times=times,
        rcs_draws=np.ones((1, 2), dtype=complex),
        symbols=np.zeros((1, 4, 2), dtype=np.int64),
    )
    focused = focus_target(cube, 0, range_m, radius=radius, elevation=elevation)
    np.testing.assert_allclose(focused, np.broadcast_to(amplitude, (times.size, 2)), atol=1e-12)
    with pytest.raises(DopplerError):
        focus_target(cube, 0, range_m, elevation=elevation)
    with pytest.raises(DopplerError):
        focus_target(cube, 0, range_m, radius=radius, elevation=0.0)


def test_mode_spectrogram_incoherent_average():
    """不给子载波与聚焦距离时为全部子载波时频图的平均。"""
    times = _times()
    tones = [_fm_tone(100.0, 0.0, times) * scale for scale in (1.0, 0.5j, -2.0)]
    data = np.stack(tones)[None, :, :, None]
    cube = EchoCube(
        data=data,
        modes=np.array([0]),
        wavenumbers=np.array([209.0, 210.0, 211.0]),
        sample_rate=FS,
        times=times,
        rcs_draws=np.ones((1, 1), dtype=complex),
        symbols=np.zeros((1, 3, 1), dtype=np.int64),
    )
    merged = mode_spectrogram(cube, 0)
    per_subcarrier = [mode_spectrogram(cube, 0, w=w).magnitudes for w in range(3)]
    np.testing.assert_allclose(merged.magnitudes, np.mean(per_subcarrier, axis=0))
    peak = merged.freq_axis[np.argmax(merged.magnitudes[:, 20])]
    assert abs(peak - 100.0) <= merged.bin_width


def test_extract_tracks_keep_identity_through_crossings():
    """调频脊线反复穿过单音脊线时，两条脊线各自沿原方向延续。"""
    times = _times()
    series = _fm_tone(0.0, 150.0, times) + _fm_tone(0.0, 0.0, times)
    tracks = extract_tracks(_cube({1: series}, times), 0, 0, max_tracks=2)
    assert len(tracks) == 2
    flat = min(tracks, key=lambda tr: tr.spread)
    swinging = max(tracks, key=lambda tr: tr.spread)
    assert flat.spread < 2 * 7.8125
    dt = float(np.mean(np.diff(swinging.times)))
    assert estimate_period(swinging.frequencies, dt) == pytest.approx(0.25, rel=0.02)


def _spin_medians(config, snr_db: float, trials: int) -> np.ndarray:
    cfg = config.system_config(snr_db)
    targets = config.target_states()
    rates = np.full((trials, len(targets)), np.nan)
    for trial in range(trials):
        outcomes = detect_target_spins(config, cfg, targets, derive_seed(11, "spin", int(snr_db), trial))
        for q, (_, report) in enumerate(outcomes):
            if not isinstance(report, DopplerError):
                rates[trial, q] = report.estimate.spin_rate
    assert np.all(np.sum(np.isfinite(rates), axis=0) >= trials // 2)
    return np.nanmedian(rates, axis=0)


@pytest.mark.slow
@pytest.mark.parametrize("snr_db, tolerance", [(20.0, 0.01), (5.0, 0.05)])
def test_three_cone_spin_rates(snr_db, tolerance):
    """内置三锥体场景20次试验的转速中位数：20 dB 误差1%以内，5 dB 误差5%以内。"""
    config = load_preset("paper-sec5")
    truth = np.array([t.spin_rate for t in config.target_states()])
    median = _spin_medians(config, snr_db, trials=20)
    np.testing.assert_array_less(np.abs(median - truth) / truth, tolerance)


@pytest.mark.slow
def test_azimuthal_components_scale_with_mode():
    """15 dB 单锥体：模态ℓ的方位分量与 ℓ 倍的模态1分量相差不超过一个STFT频率单元。"""
    data = three_cone_scene()
    data["system"]["modes"] = [-2, -1, 0, 1, 2]
    data["targets"] = data["targets"][:1]
    data["snr_db"] = [15.0]
    config = ScenarioConfig.model_validate(data)
    cfg = config.system_config(15.0)
    [(_, report)] = detect_target_spins(config, cfg, config.target_states(), seed=3)
    assert not isinstance(report, DopplerError)
    by_mode = {c.mode: c.frequencies for c in report.azimuthal_components}
    assert sorted(by_mode) == [-2, -1, 1, 2]
    for ell in (-2, -1, 2):
        deviation = np.median(np.abs(by_mode[ell] - ell * by_mode[1]))
        assert deviation <= report.resolution, ell
