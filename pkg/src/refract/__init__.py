"""Optimal two-sided reflection barriers for ergodic singular control of 1-D diffusions."""

from .diffusion import DiffusionModel, RewardModel, ScaleSpeedCache, pi, scale_density, scale_measure, speed_density, speed_measure
from .errors import RefractError
from .models import brownian, gbm, make_model, make_reward, verhulst_pearl
from .shape import ShapeReport, check_assumptions, find_peaks_and_b0

__all__ = [
    "DiffusionModel",
    "RewardModel",
    "ScaleSpeedCache",
    "RefractError",
    "ShapeReport",
    "brownian",
    "check_assumptions",
    "find_peaks_and_b0",
    "gbm",
    "make_model",
    "make_reward",
    "pi",
    "scale_density",
    "scale_measure",
    "speed_density",
    "speed_measure",
    "verhulst_pearl",
]
