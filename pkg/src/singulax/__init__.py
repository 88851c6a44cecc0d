"""Online minimax state estimation for linear descriptor systems."""

from .errors import (ConfigError, DimensionMismatch, InconsistentStep, InfeasibleData,
                     NotPsd, NotSymmetric, RankDeficient, SingularInnovation,
                     SingulaxError, ZeroDirection)
from .model import (DescriptorSystem, Trajectory, make_system, paper_example_system,
                    random_system, scalar_system, simulate)
from .observer import ObserverState, iterate, run
from .psdlinalg import PinvResult, pinv_psd

__all__ = [
    "ConfigError", "DimensionMismatch", "InconsistentStep", "InfeasibleData", "NotPsd",
    "NotSymmetric", "RankDeficient", "SingularInnovation", "SingulaxError", "ZeroDirection",
    "DescriptorSystem", "Trajectory", "make_system", "paper_example_system",
    "random_system", "scalar_system", "simulate", "ObserverState", "iterate", "run",
    "PinvResult", "pinv_psd",
]
