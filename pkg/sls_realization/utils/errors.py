"""
Exceptions raised by the realization stages.

Every error derives from `SlsError`, so callers can catch the whole family at once. The CLI maps
`FormatError` to exit code 2 and every other `SlsError` to exit code 3.
"""

from __future__ import annotations

from typing import Any, Optional


class SlsError(Exception):
    pass


class SizingError(SlsError, ValueError):
    pass


class WindowError(SlsError, IndexError):
    pass


class RankDeficiencyError(SlsError):
    pass


class StationarityError(SlsError):
    pass


class ClusteringError(SlsError):
    pass


class DetectionError(SlsError):
    pass


class AmbiguityError(DetectionError):
    pass


class ConflictError(DetectionError):
    def __init__(self, k: int, first: Any, second: Any):
        self.k = k
        self.first = first
        self.second = second
        super().__init__(
            f"Conflicting labels at k={k}: {first} versus {second}"
        )


class ConnectivityError(SlsError):
    pass


class ConditioningError(SlsError):
    pass


class MetricError(SlsError, ValueError):
    pass


class ResamplingError(SlsError):
    pass


class FormatError(SlsError, ValueError):
    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ):
        self.path = path
        self.line = line
        self.field = field
        location = []
        if path is not None:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(prefix + message)


class StageError(SlsError):
    def __init__(self, stage: Any, cause: BaseException, report: Any = None):
        self.stage = stage
        self.cause = cause
        self.report = report
        super().__init__(f"[{stage.to_str()}] {cause}")


def check_horizon(n: int, n_steps: int):
    """
    Args:
        n: State dimension.
        n_steps: Horizon N.

    Raises:
        SizingError: If N is too short to host the Hankel anchor window [2n+1, N-4n].
    """

    minimal = 6 * n + 2
    if n_steps < minimal:
        raise SizingError(
            f"Horizon N={n_steps} is too short for n={n}: the anchor window [2n+1, N-4n] "
            f"is empty, N must be at least {minimal}"
        )
