"""实验编排：场景文件、内置场景与各命令的运行。"""

from app.business.experiments.presets import (
    PRESETS,
    load_preset,
)
from app.business.experiments.schemas import (
    COMMANDS,
    CommSpec,
    ExperimentReport,
    ScenarioConfig,
    SearchSpec,
    SystemSpec,
    TargetSpec,
    snr_to_noise_variance,
)
from app.business.experiments.service import (
    apply_overrides,
    centroid_truth,
    detect_target_spins,
    fisher_times,
    load_config,
    run,
    validate_config,
)

__all__ = [
    "COMMANDS",
    "CommSpec",
    "ExperimentReport",
    "PRESETS",
    "ScenarioConfig",
    "SearchSpec",
    "SystemSpec",
    "TargetSpec",
    "apply_overrides",
    "centroid_truth",
    "detect_target_spins",
    "fisher_times",
    "load_config",
    "load_preset",
    "run",
    "snr_to_noise_variance",
    "validate_config",
]
