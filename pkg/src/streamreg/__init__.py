"""One-pass nonparametric regression under memory constraints."""

from .basis import BasisSpec, PenaltySpec
from .density import DensityState
from .engine import OnePassRegressor, batch_fit
from .scheduler import SchedulerConfig
from .tuning import TuningGrid, cv_select, rho_at

__all__ = [
    "BasisSpec",
    "PenaltySpec",
    "DensityState",
    "OnePassRegressor",
    "batch_fit",
    "SchedulerConfig",
    "TuningGrid",
    "cv_select",
    "rho_at",
]
