"""目标场景：几何、运动学与多普勒闭式规律。"""

from app.business.scene.schemas import (
    ScattererRole,
    ScattererState,
    TargetState,
)
from app.business.scene.service import (
    azimuth_rate_doppler,
    centroid_position,
    linear_doppler,
    range_rate_doppler,
    rotation_gain,
    rotation_matrix,
    rotation_phase_offset,
    rotational_doppler,
    scatterer_cartesian,
    scatterer_position,
    scatterer_velocity,
)

__all__ = [
    "ScattererRole",
    "ScattererState",
    "TargetState",
    "azimuth_rate_doppler",
    "centroid_position",
    "linear_doppler",
    "range_rate_doppler",
    "rotation_gain",
    "rotation_matrix",
    "rotation_phase_offset",
    "rotational_doppler",
    "scatterer_cartesian",
    "scatterer_position",
    "scatterer_velocity",
]
