"""MUSIC成像：模态域 (θ, φ) 与频率域 (r, θ) 谱峰搜索及三维位置融合。"""

from app.business.imaging.schemas import (
    DomainPeaks,
    ImagingReport,
    MusicSpectrum,
    Peak,
    PeakSearchResult,
    PositionEstimate,
    SearchBounds,
    SteeringFamily,
)
from app.business.imaging.service import (
    associate_peaks,
    estimate_positions,
    freq_steering_family,
    match_points,
    mode_steering_family,
    music_spectrum,
    noise_subspace,
    peak_search,
    range_ambiguity,
    sample_covariance,
    steering_freq_domain,
    steering_mode_domain,
    unwrap_range,
)

__all__ = [
    "DomainPeaks",
    "ImagingReport",
    "MusicSpectrum",
    "Peak",
    "PeakSearchResult",
    "PositionEstimate",
    "SearchBounds",
    "SteeringFamily",
    "associate_peaks",
    "estimate_positions",
    "freq_steering_family",
    "match_points",
    "mode_steering_family",
    "music_spectrum",
    "noise_subspace",
    "peak_search",
    "range_ambiguity",
    "sample_covariance",
    "steering_freq_domain",
    "steering_mode_domain",
    "unwrap_range",
]
