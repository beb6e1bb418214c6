from .field import NORM_TOL, PriorParams, ProbabilityField
from .kernel import predict_kernel, velocity_transition
from .pde import (PdeOperator, PdeOptions, StabilityReport, get_operator, predict_pde, predict_pde_step,
                  stability_max_dt, stability_report)

__all__ = [
    "NORM_TOL", "PriorParams", "ProbabilityField", "predict_kernel", "velocity_transition",
    "PdeOperator", "PdeOptions", "StabilityReport", "get_operator", "predict_pde", "predict_pde_step",
    "stability_max_dt", "stability_report",
]
