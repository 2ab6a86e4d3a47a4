"""正向模型：OAM-PSK发射信号、远场回波、慢时间立方体与通信链路。"""

from app.business.forward_model.schemas import (
    CommLink,
    EchoCube,
    OamSystemConfig,
    WeightVector,
)
from app.business.forward_model.service import (
    channel_matrix,
    comm_received,
    compensate,
    echo_cube,
    echo_matrix,
    element_signal,
    element_sum_field,
    equivalent_channel,
    mode_matrix,
    transmit_field,
    zero_forcing_detect,
    zero_forcing_matrices,
)

__all__ = [
    "CommLink",
    "EchoCube",
    "OamSystemConfig",
    "WeightVector",
    "channel_matrix",
    "comm_received",
    "compensate",
    "echo_cube",
    "echo_matrix",
    "element_signal",
    "element_sum_field",
    "equivalent_channel",
    "mode_matrix",
    "transmit_field",
    "zero_forcing_detect",
    "zero_forcing_matrices",
]
