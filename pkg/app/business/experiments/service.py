"""实验编排：加载场景、运行命令、写出结果文件与报告。

每个命令由一个处理函数实现，处理函数返回 (结果字典, 写出的文件)；
run 负责上下文绑定、计时、report.json 与指标文件。
"""

import contextvars
import json
import math
import time
from concurrent.futures import (
    ThreadPoolExecutor,
    as_completed,
)
from pathlib import Path
from typing import (
    Any,
    Callable,
    NamedTuple,
)

import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from app.business.analysis.schemas import (
    FisherMatrix,
    parameter_names,
)
from app.business.analysis.service import (
    average_rate,
    combine_fisher,
    fisher_blocks,
    pcrb,
    rate_report,
    rate_terms,
    sinr_from_terms,
    snapshot_fisher,
)
from app.business.doppler.schemas import TargetSpinReport
from app.business.doppler.service import (
    detect_spin,
    micro_doppler_theory,
    mode_spectrogram,
    theoretical_tracks,
)
from app.business.experiments.schemas import (
    Command,
    ExperimentReport,
    ScenarioConfig,
    snr_to_noise_variance,
)
from app.business.forward_model.schemas import (
    CommLink,
    EchoCube,
    OamSystemConfig,
)
from app.business.forward_model.service import (
    comm_received,
    echo_cube,
    zero_forcing_detect,
)
from app.business.imaging.schemas import ImagingReport
from app.business.imaging.service import (
    estimate_positions,
    match_points,
)
from app.business.optimizer.service import optimize_weights
from app.business.scene.schemas import TargetState
from app.business.scene.service import scatterer_position
from app.core.config import settings
from app.core.errors import (
    ConfigParseError,
    ConfigValidationError,
    DopplerError,
    OamLabError,
    SingularFisherError,
)
from app.core.logging import (
    logger,
    run_log,
    scoped_context,
)
from app.core.metrics import (
    track_stage,
    trials_total,
    write_metrics,
)
from app.core.numerics import Spectrogram
from app.utils.io import (
    write_csv,
    write_json,
)
from app.utils.rng import derive_seed

Handler = Callable[[ScenarioConfig, Path], tuple[dict[str, Any], list[Path]]]
SWEEP_COLUMNS = ("snr_db", "parameter", "mse", "pcrb", "pcrb_model", "ratio", "trials_used")


def _validation_details(exc: ValidationError) -> list[dict[str, Any]]:
    return [{"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]} for err in exc.errors()]


def validate_config(data: dict[str, Any]) -> ScenarioConfig:
    """校验场景字典。

    Raises:
        ConfigValidationError: 违反某个不变量，details 中列出位置与原因
    """
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError("场景校验失败", errors=_validation_details(e)) from e


def load_config(path: Path | str) -> ScenarioConfig:
    """读取并校验JSON场景文件。

    Raises:
        ConfigParseError: 文件不存在或不是合法JSON，details 中带行列号
        ConfigValidationError: 违反某个不变量
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigParseError(f"无法读取场景文件: {path}", path=str(path), reason=str(e)) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(
            f"场景文件不是合法JSON: {e.msg}", path=str(path), line=e.lineno, column=e.colno
        ) from e
    if not isinstance(data, dict):
        raise ConfigParseError("场景文件顶层必须是对象", path=str(path), line=1, column=1)
    config = validate_config(data)
    logger.info("config_loaded", path=str(path), targets=len(config.targets), modes=len(config.system.modes))
    return config


def _samples(config: ScenarioConfig) -> int:
    return max(1, int(round(config.duration * config.sample_rate)))


def fisher_times(config: ScenarioConfig) -> np.ndarray:
    """Fisher信息累加的慢时间时刻：回波立方体的采样时刻按 fisher_stride 抽取。"""
    return (np.arange(_samples(config)) / config.sample_rate)[:: config.fisher_stride]


def centroid_truth(targets: list[TargetState], t: float = 0.0) -> np.ndarray:
    """Q×3 的质心真值 (r, θ, φ)。"""
    return np.asarray(
        [[float(v) for v in scatterer_position(target, target.centroid, t)] for target in targets], dtype=np.float64
    )


def _match_estimates(config: ScenarioConfig, report: ImagingReport, truth: np.ndarray) -> np.ndarray:
    points = np.asarray([[e.range_m, e.elevation, e.azimuth] for e in report.estimates], dtype=np.float64)
    angle = math.radians(config.search.angle_step_deg)
    scales = (config.search.range_step, angle, angle)
    return match_points(truth, points.reshape(-1, 3), scales=scales, periods=(None, None, 2 * math.pi))


def _wrapped_error(estimate: np.ndarray, truth: np.ndarray) -> np.ndarray:
    err = estimate - truth
    err[..., 2] = (err[..., 2] + math.pi) % (2 * math.pi) - math.pi
    return err


def _comm_link(config: ScenarioConfig, cfg: OamSystemConfig, targets: list[TargetState]) -> CommLink:
    centroid = tuple(centroid_truth(targets)[config.comm.target_index])
    return comm_received(cfg, centroid, config.comm.csi_error, derive_seed(config.seed, "comm"))


def _spectrogram_rows(spec: Spectrogram) -> list[tuple[float, float, float]]:
    rows = []
    for t_idx, t in enumerate(spec.time_axis):
        column = spec.magnitudes[:, t_idx]
        rows.extend((float(t), float(f), float(m)) for f, m in zip(spec.freq_axis, column))
    return rows


def _write_spectrogram(path: Path, spec: Spectrogram) -> Path:
    return write_csv(path, ["time_s", "frequency_hz", "magnitude"], _spectrogram_rows(spec))


def run_synth(config: ScenarioConfig, out: Path) -> tuple[dict[str, Any], list[Path]]:
    """合成慢时间回波立方体，写出第一个快拍。"""
    cfg = config.system_config()
    cube = echo_cube(
        cfg,
        config.target_states(),
        config.duration,
        config.sample_rate,
        config.spin_snapshots,
        derive_seed(config.seed, "synth"),
        rcs_model="fixed",
    )
    first = cube.data[..., 0]
    rows = (
        (int(cfg.modes[u]), w, float(cube.times[n]), float(first[u, w, n].real), float(first[u, w, n].imag))
        for u in range(cfg.n_modes)
        for w in range(cfg.n_subcarriers)
        for n in range(cube.times.size)
    )
    path = write_csv(out / "echo.csv", ["mode", "subcarrier", "time_s", "real", "imag"], rows)
    power = np.mean(np.abs(cube.data) ** 2, axis=(1, 2, 3))
    results = {
        "shape": list(cube.shape),
        "snr_db": config.main_snr_db,
        "noise_variance": cfg.noise_variance,
        "mean_power_per_mode": {int(m): float(p) for m, p in zip(cfg.modes, power)},
    }
    return results, [path]


def run_image(config: ScenarioConfig, out: Path) -> tuple[dict[str, Any], list[Path]]:
    """两域MUSIC成像，质心估计与真值配对。"""
    cfg = config.system_config()
    targets = config.target_states()
    cube = echo_cube(cfg, targets, 0.0, config.sample_rate, config.snapshots, derive_seed(config.seed, "image"))
    bounds = config.search_bounds()
    report = estimate_positions(cube, cfg, config.n_sources, bounds)
    truth = centroid_truth(targets)
    matches = _match_estimates(config, report, truth)
    matched_target = {int(idx): q for q, idx in enumerate(matches) if idx >= 0}

    files = [
        write_csv(
            out / "estimates.csv",
            ["index", "range_m", "elevation_deg", "azimuth_deg", "mode_sources", "freq_sources", "target"],
            [
                (
                    i,
                    e.range_m,
                    math.degrees(e.elevation),
                    math.degrees(e.azimuth),
                    e.mode_sources,
                    e.freq_sources,
                    matched_target.get(i),
                )
                for i, e in enumerate(report.estimates)
            ],
        ),
        write_csv(
            out / "peaks.csv",
            ["domain", "index", "rank", "axis1", "axis2", "value"],
            [
                (
                    d.domain,
                    d.index,
                    rank,
                    math.degrees(p.axis1) if d.domain == "mode" else p.axis1,
                    math.degrees(p.axis2),
                    p.value,
                )
                for d in report.domain_peaks
                for rank, p in enumerate(d.peaks)
            ],
        ),
    ]
    mode_spec, freq_spec = report.mode_spectrum, report.freq_spectrum
    files.append(
        write_csv(
            out / "spectrum_w.csv",
            ["elevation_deg", "azimuth_deg", "value"],
            (
                (math.degrees(a1), math.degrees(a2), float(mode_spec.values[i, j]))
                for i, a1 in enumerate(mode_spec.axis1)
                for j, a2 in enumerate(mode_spec.axis2)
            ),
        )
    )
    files.append(
        write_csv(
            out / "spectrum_u.csv",
            ["range_m", "elevation_deg", "value"],
            (
                (float(a1), math.degrees(a2), float(freq_spec.values[i, j]))
                for i, a1 in enumerate(freq_spec.axis1)
                for j, a2 in enumerate(freq_spec.axis2)
            ),
        )
    )

    centroids = []
    for q, idx in enumerate(matches):
        entry: dict[str, Any] = {"target": q, "truth": truth[q].tolist(), "matched": bool(idx >= 0)}
        if idx >= 0:
            e = report.estimates[int(idx)]
            err = _wrapped_error(np.asarray([e.range_m, e.elevation, e.azimuth]), truth[q])
            entry.update(
                {
                    "range_error_m": float(err[0]),
                    "elevation_error_deg": math.degrees(err[1]),
                    "azimuth_error_deg": math.degrees(err[2]),
                }
            )
        centroids.append(entry)
    results = {
        "snr_db": config.main_snr_db,
        "estimates": [e.model_dump() for e in report.estimates],
        "centroids": centroids,
        "shortfalls": [list(s) for s in report.shortfalls],
        "reference_subcarrier": report.reference_mode_index,
        "reference_mode": report.reference_freq_index,
        "range_folded": report.range_folded,
        "range_cues": [[c[0], math.degrees(c[1]), math.degrees(c[2])] for c in bounds.range_cues],
    }
    return results, files


def _spin_cube(config: ScenarioConfig, cfg: OamSystemConfig, targets: list[TargetState], seed: int) -> EchoCube:
    return echo_cube(
        cfg, targets, config.duration, config.sample_rate, config.spin_snapshots, seed, rcs_model="fixed"
    )


def detect_target_spins(
    config: ScenarioConfig,
    cfg: OamSystemConfig,
    targets: list[TargetState],
    seed: int,
    max_workers: int | None = None,
) -> list[tuple[EchoCube, TargetSpinReport | DopplerError]]:
    """逐目标检测转速。

    spin_isolation 时每个目标单独仿真一个慢时间立方体，在全部子载波上非相干平均；
    否则共用一个立方体，按目标的距离与俯仰做匹配滤波聚焦。
    失败的目标返回对应的 DopplerError。

    Returns:
        每个目标的 (立方体, 检测报告或错误)
    """
    shared = None if config.spin_isolation else _spin_cube(config, cfg, targets, seed)
    outcomes: list[tuple[EchoCube, TargetSpinReport | DopplerError]] = []
    for q, target in enumerate(targets):
        if shared is None:
            cube = _spin_cube(config, cfg, [target], derive_seed(seed, "target", q))
            focus: dict[str, Any] = {}
        else:
            cube = shared
            focus = {"focus_range": target.range_m, "radius": cfg.radius, "focus_elevation": target.elevation}
        try:
            report = detect_spin(
                cube,
                params=config.stft,
                max_tracks=len(target.scatterers),
                target_index=q,
                max_workers=max_workers,
                **focus,
            )
        except DopplerError as e:
            logger.warning("spin_detection_failed", target_index=q, error=e.message, details=e.details)
            outcomes.append((cube, e))
            continue
        outcomes.append((cube, report))
    return outcomes


def run_spin(config: ScenarioConfig, out: Path) -> tuple[dict[str, Any], list[Path]]:
    """逐目标检测转速，并写出时频图、脊线与理论曲线。"""
    cfg = config.system_config()
    targets = config.target_states()
    outcomes = detect_target_spins(config, cfg, targets, derive_seed(config.seed, "spin"))
    modes = list(cfg.modes)
    wavenumber = float(np.mean(cfg.wavenumber_array))

    files: list[Path] = []
    track_rows: list[tuple] = []
    theory_rows: list[tuple] = []
    per_target = []
    for q, (target, (cube, report)) in enumerate(zip(targets, outcomes)):
        focus = (
            {}
            if config.spin_isolation
            else {"focus_range": target.range_m, "radius": cfg.radius, "elevation": target.elevation}
        )
        w = config.spectrogram_subcarrier
        for mode in config.spectrogram_modes:
            u = modes.index(mode)
            # 共用立方体时单子载波时频图只写一次
            if config.spin_isolation or q == 0:
                name = f"spectrogram_{u}_{w}_target{q}.csv" if config.spin_isolation else f"spectrogram_{u}_{w}.csv"
                files.append(_write_spectrogram(out / name, mode_spectrogram(cube, u, w=w, params=config.stft)))
            merged = mode_spectrogram(cube, u, params=config.stft, **focus)
            files.append(_write_spectrogram(out / f"spectrogram_{u}_target{q}.csv", merged))

        entry: dict[str, Any] = {"target": q, "truth": target.spin_rate}
        if isinstance(report, DopplerError):
            entry.update({"error": report.message, "details": report.details})
            per_target.append(entry)
            continue
        kinds = [("reference", report.reference)]
        kinds += [("rotational", c) for c in report.components]
        kinds += [("azimuthal", c) for c in report.azimuthal_components]
        for kind, comp in kinds:
            track_rows.extend(
                (q, comp.mode, kind, float(t), float(f), float(m))
                for t, f, m in zip(comp.times, comp.frequencies, comp.magnitudes)
            )
        comp_modes = [c.mode for c in report.components]
        times = report.reference.times
        closed, kinematic = theoretical_tracks(target, comp_modes, times)
        full = micro_doppler_theory(target, comp_modes, wavenumber, times)
        for i, (comp, azim) in enumerate(zip(report.components, report.azimuthal_components)):
            theory_rows.extend(
                (
                    q,
                    comp.mode,
                    float(t),
                    float(closed[i, n]),
                    float(kinematic[i, n]),
                    float(full[i, n]),
                    float(azim.frequencies[n]),
                    float(comp.frequencies[n]),
                )
                for n, t in enumerate(times)
            )
        est = report.estimate
        entry.update(
            {
                "spin_rate": est.spin_rate,
                "spin_rate_over_pi": est.spin_rate / math.pi,
                "relative_error": (
                    abs(est.spin_rate - target.spin_rate) / target.spin_rate if target.spin_rate else None
                ),
                "static": est.static,
                "per_mode": est.per_mode,
                "periods": est.periods,
                "excluded_modes": list(est.excluded_modes),
                "stft_bin_hz": report.resolution,
            }
        )
        per_target.append(entry)
    files.append(
        write_csv(out / "tracks.csv", ["target", "mode", "kind", "time_s", "frequency_hz", "magnitude"], track_rows)
    )
    files.append(
        write_csv(
            out / "doppler_theory.csv",
            [
                "target",
                "mode",
                "time_s",
                "closed_form_hz",
                "kinematic_hz",
                "micro_doppler_hz",
                "measured_azimuthal_hz",
                "measured_hz",
            ],
            theory_rows,
        )
    )
    return {"snr_db": config.main_snr_db, "targets": per_target}, files


def _pcrb_by_snr(
    config: ScenarioConfig, blocks: np.ndarray, cfg: OamSystemConfig, names: list[str]
) -> dict[float, np.ndarray]:
    bounds = {}
    for snr in sorted(set(config.snr_db)):
        try:
            bounds[snr] = pcrb(combine_fisher(blocks, cfg.weights, snr_to_noise_variance(snr)), names)
        except SingularFisherError as e:
            logger.warning("pcrb_singular", snr_db=snr, details=e.details)
            bounds[snr] = np.full(len(names), np.nan)
    return bounds


def run_pcrb(config: ScenarioConfig, out: Path) -> tuple[dict[str, Any], list[Path]]:
    """关键参数的PCRB，以及随SNR变化的PCRB与平均速率表。"""
    cfg = config.system_config()
    targets = config.target_states()
    names = parameter_names(len(targets))
    times = fisher_times(config)
    with track_stage("fisher_blocks"):
        blocks = fisher_blocks(cfg, targets, times)

    fisher = FisherMatrix(matrix=combine_fisher(blocks, cfg.weights, cfg.noise_variance), names=tuple(names))
    bound = pcrb(fisher)

    interference, noise = rate_terms(cfg, *_link_matrices(config, cfg, targets))
    table = []
    for snr, values in _pcrb_by_snr(config, blocks, cfg, names).items():
        nv = snr_to_noise_variance(snr)
        rate = average_rate(sinr_from_terms(interference, noise, cfg.weights, nv))
        table.append((snr, nv, *values.tolist(), float(np.sum(values)), rate))

    files = [
        write_json(
            out / "pcrb.json",
            {
                "snr_db": config.main_snr_db,
                "noise_variance": cfg.noise_variance,
                "fisher_samples": int(times.size),
                "weights": list(cfg.weights.amplitudes),
                "pcrb": dict(zip(names, bound.tolist())),
                "sum_pcrb": float(np.sum(bound)),
                "fisher": fisher.matrix,
            },
        ),
        write_csv(out / "pcrb_sweep.csv", ["snr_db", "noise_variance", *names, "sum_pcrb", "average_rate"], table),
    ]
    results = {
        "snr_db": config.main_snr_db,
        "pcrb": dict(zip(names, bound.tolist())),
        "sum_pcrb": float(np.sum(bound)),
    }
    return results, files


def _link_matrices(
    config: ScenarioConfig, cfg: OamSystemConfig, targets: list[TargetState]
) -> tuple[np.ndarray, np.ndarray]:
    link = _comm_link(config, cfg, targets)
    return link.channel, link.estimate


def run_rate(config: ScenarioConfig, out: Path) -> tuple[dict[str, Any], list[Path]]:
    """通信目标处的SINR与平均速率，并对一帧符号做迫零检测。"""
    cfg = config.system_config(config.comm_snr_db)
    targets = config.target_states()
    link = _comm_link(config, cfg, targets)
    report = rate_report(cfg, link.channel, link.estimate)

    detected = zero_forcing_detect(cfg, link) / cfg.weight_array[:, None]
    step = 2 * math.pi / cfg.psk_order
    decisions = np.mod(np.round(np.angle(detected) / step).astype(np.int64), cfg.psk_order)
    symbol_error_rate = float(np.mean(decisions != link.symbols))

    payload = {
        "snr_db": config.comm_snr_db,
        "csi_error": config.comm.csi_error,
        "target_index": config.comm.target_index,
        "weights": list(cfg.weights.amplitudes),
        "average_rate": report.average_rate,
        "rate_min": config.comm.rate_min,
        "meets_rate_min": report.average_rate >= config.comm.rate_min,
        "symbol_error_rate": symbol_error_rate,
        "modes": list(cfg.modes),
        "sinr": report.sinr,
    }
    path = write_json(out / "rate.json", payload)
    results = {k: payload[k] for k in ("snr_db", "average_rate", "meets_rate_min", "symbol_error_rate")}
    return results, [path]


def run_optimize(config: ScenarioConfig, out: Path) -> tuple[dict[str, Any], list[Path]]:
    """速率约束下的权重优化，写出全部候选与最优解。"""
    cfg = config.system_config(config.comm_snr_db)
    result = optimize_weights(
        cfg,
        config.target_states(),
        config.comm.target_index,
        config.comm.rate_min,
        config.comm.grid_n,
        fisher_times(config),
        csi_error=config.comm.csi_error,
        seed=derive_seed(config.seed, "comm"),
        mode=config.comm.mode,
    )
    amp_names = [f"A[{m}]" for m in cfg.modes]
    files = [
        write_csv(
            out / "optimize.csv",
            ["index", *amp_names, "objective", "rate", "feasible"],
            [(c.index, *c.amplitudes, c.objective, c.rate, c.feasible) for c in result.candidates],
        ),
        write_json(out / "optimize.json", result.model_dump(exclude={"candidates"})),
    ]
    results = {
        "snr_db": config.comm_snr_db,
        "mode": result.mode,
        "objective": result.objective,
        "rate": result.rate,
        "rate_min": result.rate_min,
        "baseline_objective": result.baseline_objective,
        "baseline_rate": result.baseline_rate,
        "evaluated": result.evaluated,
        "weights": dict(zip(amp_names, result.weights.amplitudes)),
    }
    return results, files


class TrialOutcome(NamedTuple):
    """一次蒙特卡洛试验：每个目标的 (r̂, θ̂, φ̂, Ω̂)，缺失为NaN。"""

    snr_index: int
    trial: int
    estimates: np.ndarray


def _run_trial(config: ScenarioConfig, snr_index: int, trial: int, targets: list[TargetState]) -> TrialOutcome:
    snr = config.snr_db[snr_index]
    cfg = config.system_config(snr)
    seed = derive_seed(config.seed, "sweep", snr_index, trial)
    truth = centroid_truth(targets)
    estimates = np.full((len(targets), 4), np.nan)

    with scoped_context(trial=trial, snr_db=snr):
        try:
            cube = echo_cube(cfg, targets, 0.0, config.sample_rate, config.snapshots, derive_seed(seed, "image"))
            bounds = config.search_bounds(cue_seed=derive_seed(seed, "cues"))
            report = estimate_positions(cube, cfg, config.n_sources, bounds, max_workers=1)
            for q, idx in enumerate(_match_estimates(config, report, truth)):
                if idx >= 0:
                    e = report.estimates[int(idx)]
                    estimates[q, :3] = (e.range_m, e.elevation, e.azimuth)
        except OamLabError as e:
            logger.warning("trial_imaging_failed", error=e.message, details=e.details)

        try:
            outcomes = detect_target_spins(config, cfg, targets, derive_seed(seed, "spin"), max_workers=1)
        except OamLabError as e:
            logger.warning("trial_spin_failed", error=e.message, details=e.details)
            outcomes = []
        for q, (_, spin) in enumerate(outcomes):
            if not isinstance(spin, OamLabError):
                estimates[q, 3] = spin.estimate.spin_rate
    trials_total.labels(command="sweep").inc()
    return TrialOutcome(snr_index=snr_index, trial=trial, estimates=estimates)


def _matched_bounds(
    config: ScenarioConfig,
    targets: list[TargetState],
    names: list[str],
    model_bounds: dict[float, np.ndarray],
) -> dict[float, np.ndarray]:
    """与扫描中估计器所见观测一致的界。

    位置项来自 t = 0 时刻L个起伏快拍的信息矩阵（snapshot_fisher）；转速项来自慢时间模型，
    换算到圆复噪声的 2/ξ² 信息系数并乘以转速立方体的快拍数。
    """
    bounds = {}
    for snr in sorted(set(config.snr_db)):
        cfg = config.system_config(snr)
        values = np.full(len(names), np.nan)
        try:
            position = pcrb(snapshot_fisher(cfg, targets, config.snapshots))
            for q in range(len(targets)):
                values[4 * q : 4 * q + 3] = position[3 * q : 3 * q + 3]
        except SingularFisherError as e:
            logger.warning("snapshot_pcrb_singular", snr_db=snr, details=e.details)
        values[3::4] = model_bounds[snr][3::4] / (2.0 * config.spin_snapshots)
        bounds[snr] = values
    return bounds


def run_sweep(config: ScenarioConfig, out: Path) -> tuple[dict[str, Any], list[Path]]:
    """按SNR列表做蒙特卡洛试验，输出每个关键参数的MSE、匹配观测的PCRB与模型PCRB。"""
    targets = config.target_states()
    names = parameter_names(len(targets))
    truth = np.column_stack([centroid_truth(targets), [t.spin_rate for t in targets]])

    base = config.system_config()
    with track_stage("fisher_blocks"):
        blocks = fisher_blocks(base, targets, fisher_times(config))
    model_bounds = _pcrb_by_snr(config, blocks, base, names)
    bounds = _matched_bounds(config, targets, names, model_bounds)

    jobs = [(i, trial) for i in range(len(config.snr_db)) for trial in range(config.trials)]
    outcomes: dict[tuple[int, int], TrialOutcome] = {}
    with track_stage("sweep_trials"):
        with ThreadPoolExecutor(max_workers=settings.MAX_WORKERS) as pool:
            futures = [
                pool.submit(contextvars.copy_context().run, _run_trial, config, i, trial, targets) for i, trial in jobs
            ]
            for future in tqdm(as_completed(futures), total=len(futures), desc="sweep"):
                outcome = future.result()
                outcomes[(outcome.snr_index, outcome.trial)] = outcome

    table_rows = []
    estimate_rows = []
    table = []
    for i, snr in enumerate(config.snr_db):
        stacked = np.stack([outcomes[(i, trial)].estimates for trial in range(config.trials)])
        position_errors = _wrapped_error(stacked[..., :3], truth[:, :3])
        errors = np.concatenate([position_errors, stacked[..., 3:] - truth[:, 3:]], axis=-1)
        flat = errors.reshape(config.trials, -1)
        used = np.sum(~np.isnan(flat), axis=0)
        with np.errstate(invalid="ignore"):
            mse = np.where(used > 0, np.nansum(flat**2, axis=0) / np.maximum(used, 1), np.nan)
        for name, m, b, b_model, n in zip(names, mse, bounds[snr], model_bounds[snr], used):
            ratio = m / b if np.isfinite(m) and np.isfinite(b) and b > 0 else math.nan
            table_rows.append((snr, name, float(m), float(b), float(b_model), ratio, int(n)))
            table.append(dict(zip(SWEEP_COLUMNS, table_rows[-1])))
        for trial in range(config.trials):
            for q in range(len(targets)):
                r, theta, phi, spin = stacked[trial, q]
                estimate_rows.append((snr, trial, q, r, math.degrees(theta), math.degrees(phi), spin))

    files = [
        write_csv(out / "sweep.csv", SWEEP_COLUMNS, table_rows),
        write_csv(
            out / "estimates.csv",
            ["snr_db", "trial", "target", "range_m", "elevation_deg", "azimuth_deg", "spin_rate"],
            estimate_rows,
        ),
    ]
    logger.info("sweep_completed", trials=config.trials, snr_points=len(config.snr_db))
    return {"trials": config.trials, "table": table}, files


COMMAND_HANDLERS: dict[str, Handler] = {
    "synth": run_synth,
    "image": run_image,
    "spin": run_spin,
    "pcrb": run_pcrb,
    "rate": run_rate,
    "optimize": run_optimize,
    "sweep": run_sweep,
}


def apply_overrides(config: ScenarioConfig, **overrides: Any) -> ScenarioConfig:
    """应用命令行覆盖项。

    Raises:
        ConfigValidationError: 覆盖后的场景违反某个不变量
    """
    try:
        return config.with_overrides(**overrides)
    except ValidationError as e:
        raise ConfigValidationError("覆盖参数后场景校验失败", errors=_validation_details(e)) from e


def resolve_output_dir(config: ScenarioConfig, out: Path | str | None = None) -> Path:
    """结果目录：命令行 > 场景文件 > settings.OUTPUT_DIR。"""
    if out is not None:
        return Path(out)
    if config.output_dir is not None:
        return Path(config.output_dir)
    return settings.OUTPUT_DIR


def run(
    command: Command,
    config: ScenarioConfig,
    overrides: dict[str, Any] | None = None,
    out: Path | str | None = None,
) -> ExperimentReport:
    """运行一个命令并写出 report.json。

    Args:
        command: synth、image、spin、pcrb、rate、optimize 或 sweep
        config: 场景
        overrides: 命令行覆盖项（snr_db、trials、seed、rate_min、grid_n）
        out: 结果目录

    Returns:
        ExperimentReport

    Raises:
        ValueError: 未知命令
        OamLabError: 各模块的错误原样传出
    """
    if command not in COMMAND_HANDLERS:
        raise ValueError(f"未知命令: {command}")
    config = apply_overrides(config, **(overrides or {}))
    out_dir = resolve_output_dir(config, out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with scoped_context(command=command, seed=config.seed), run_log(out_dir) as log_path:
        logger.info("run_started", output_dir=str(out_dir))
        start = time.perf_counter()
        with track_stage(f"command_{command}"):
            results, files = COMMAND_HANDLERS[command](config, out_dir)
        elapsed = time.perf_counter() - start
        if log_path is not None:
            files.append(log_path)

        report = ExperimentReport(
            command=command,
            version=settings.VERSION,
            seed=config.seed,
            wall_clock_s=elapsed,
            config=config.model_dump(mode="json"),
            results=results,
            files=[p.name for p in files] + ["report.json"],
            side_information=config.side_information(command),
            output_dir=out_dir,
        )
        write_json(out_dir / "report.json", report.model_dump(exclude={"output_dir"}))
        metrics_path = write_metrics(out_dir)
        logger.info("run_completed", wall_clock_s=elapsed, files=len(report.files), metrics=str(metrics_path))
    return report
