"""转速检测：慢时间STFT脊线、线性多普勒消除与周期估计。"""

from app.business.doppler.schemas import (
    DopplerTrack,
    SpinEstimate,
    StftParams,
    TargetSpinReport,
)
from app.business.doppler.service import (
    detect_spin,
    estimate_period,
    estimate_spin,
    extract_tracks,
    focus_target,
    link_ridges,
    micro_doppler_theory,
    mode_spectrogram,
    rotational_component,
    theoretical_tracks,
)

__all__ = [
    "DopplerTrack",
    "SpinEstimate",
    "StftParams",
    "TargetSpinReport",
    "detect_spin",
    "estimate_period",
    "estimate_spin",
    "extract_tracks",
    "focus_target",
    "link_ridges",
    "micro_doppler_theory",
    "mode_spectrogram",
    "rotational_component",
    "theoretical_tracks",
]
