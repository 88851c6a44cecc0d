"""Exception hierarchy.

Every error carries a short machine-readable ``code`` that the command line
prints as a prefix (``E_DIM: ...``).
"""

from __future__ import annotations


class SingulaxError(Exception):
    code = "E_GENERIC"


class DimensionMismatch(SingulaxError, ValueError):
    code = "E_DIM"


class NotSymmetric(SingulaxError, ValueError):
    code = "E_SYM"


class NotPsd(SingulaxError, ValueError):
    code = "E_PSD"


class ZeroDirection(SingulaxError, ValueError):
    code = "E_DIRECTION"


class InconsistentStep(SingulaxError, ValueError):
    """The descriptor step has no solution: ``C x + f`` leaves range(F)."""

    code = "E_STEP"

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class InfeasibleData(SingulaxError, ValueError):
    """Measurements cannot be produced by any admissible uncertainty."""

    code = "E_INFEASIBLE"


class RankDeficient(SingulaxError, ValueError):
    code = "E_RANK"

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class SingularInnovation(SingulaxError, ValueError):
    code = "E_INNOVATION"


class ConfigError(SingulaxError, ValueError):
    code = "E_CONFIG"
