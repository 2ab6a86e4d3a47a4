"""性能分析：Fisher信息、PCRB、SINR与平均速率。"""

from app.business.analysis.schemas import (
    FisherMatrix,
    RateReport,
    parameter_names,
)
from app.business.analysis.service import (
    average_rate,
    combine_fisher,
    fisher_blocks,
    fisher_matrix,
    key_parameters,
    partial_p,
    pcrb,
    rate_report,
    rate_terms,
    signal_model,
    snapshot_fisher,
    sinr,
    sinr_from_terms,
)

__all__ = [
    "FisherMatrix",
    "RateReport",
    "average_rate",
    "combine_fisher",
    "fisher_blocks",
    "fisher_matrix",
    "key_parameters",
    "parameter_names",
    "partial_p",
    "pcrb",
    "rate_report",
    "rate_terms",
    "signal_model",
    "snapshot_fisher",
    "sinr",
    "sinr_from_terms",
]
