"""内置场景。"""

import math

from app.business.experiments.schemas import ScenarioConfig

FIRST_WAVENUMBER = 209.0
ARRAY_RADIUS_WAVELENGTHS = 30


def _cone(range_m: float, elevation_deg: float, azimuth_deg: float, spin_rate: float) -> dict:
    # 质心、锥顶、一个弹体散射点；目标不平动
    return {
        "range_m": range_m,
        "elevation_deg": elevation_deg,
        "azimuth_deg": azimuth_deg,
        "speed": 0.0,
        "spin_rate": spin_rate,
        "half_cone_angle_deg": 30.0,
        "scatterers": [
            {"role": "centroid"},
            {"role": "vertex", "rotation_radius": 0.5, "initial_phase_deg": 0.0, "rcs_amplitude": 1.0},
            {"role": "body", "rotation_radius": 0.4, "initial_phase_deg": 150.0, "rcs_amplitude": 0.8},
        ],
    }


def three_cone_scene() -> dict:
    """17阵元UCA、16个模态与16个子载波、三个自旋锥体目标。"""
    return {
        "system": {
            "n_tx": 17,
            "n_rx": 17,
            "radius": ARRAY_RADIUS_WAVELENGTHS * 2 * math.pi / FIRST_WAVENUMBER,
            "modes": list(range(-8, 8)),
            "wavenumbers": [FIRST_WAVENUMBER + w for w in range(16)],
            "psk_order": 4,
        },
        "targets": [
            _cone(82.5, 20.0, 70.0, 8 * math.pi),
            _cone(170.0, 80.0, 20.0, 10 * math.pi),
            _cone(165.0, 75.0, 25.0, 11.5 * math.pi),
        ],
        "snr_db": [5.0, 10.0, 15.0, 20.0],
        "snapshots": 200,
        "sample_rate": 4000.0,
        "duration": 2.0,
        "trials": 50,
        "spectrogram_modes": [-1, 2],
        "comm": {"target_index": 0, "csi_error": 0.05, "rate_min": 6.0, "grid_n": 10, "snr_db": 15.0},
    }


PRESETS = {"paper-sec5": three_cone_scene}


def load_preset(name: str) -> ScenarioConfig:
    """按名称构造内置场景。

    Raises:
        KeyError: 未知的场景名
    """
    if name not in PRESETS:
        raise KeyError(f"未知的内置场景: {name}，可选 {sorted(PRESETS)}")
    return ScenarioConfig.model_validate(PRESETS[name]())
