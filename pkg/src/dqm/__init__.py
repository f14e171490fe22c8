"""Strategic deadline queue with spillover: costs, equilibria and learning dynamics."""

from dqm.kernels import BACKEND
from dqm.model import ArrivalGroupStats, MixedProfile, ModelError, ModelParams, PenaltySchedule, State

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ArrivalGroupStats",
    "MixedProfile",
    "ModelError",
    "ModelParams",
    "PenaltySchedule",
    "State",
]
