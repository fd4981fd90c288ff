from __future__ import annotations

import enum
from typing import List


@enum.unique
class Stage(enum.Enum):
    """
    Stage of the realization pipeline, in execution order.
    """

    REALIZE = enum.auto()
    CLUSTER = enum.auto()
    DETECT = enum.auto()
    ALIGN = enum.auto()

    def from_str(name: str) -> Stage:
        """
        Args:
            name: The name of the stage.
                    Possible known options = [
                        "realize",
                        "cluster",
                        "detect",
                        "align",
                    ]

        Returns:
            The pipeline stage.
        """

        name = name.strip().lower()
        if name == "realize":
            return Stage.REALIZE
        elif name == "cluster":
            return Stage.CLUSTER
        elif name == "detect":
            return Stage.DETECT
        elif name == "align":
            return Stage.ALIGN
        else:
            raise ValueError(f"Unknown stage: {name}")

    def to_str(self) -> str:
        """
        Returns:
            The name of the stage.
        """

        return self.name.lower()

    @property
    def order(self) -> int:
        return self.value

    @staticmethod
    def stages_until(last: Stage) -> List[Stage]:
        """
        Returns:
            Every stage up to and including `last`, in execution order.
        """

        return [stage for stage in Stage if stage.order <= last.order]


@enum.unique
class NoiseMode(enum.Enum):
    """
    Perturbation model applied to Markov parameters.
    """

    NONE = enum.auto()
    AMPLITUDE = enum.auto()
    SNR = enum.auto()

    def from_str(name: str) -> NoiseMode:
        """
        Args:
            name: The name of the noise mode.
                    Possible known options = [
                        "none",
                        "amplitude",
                        "snr",
                    ]

        Returns:
            The noise mode.
        """

        name = name.strip().lower()
        if name in ("none", "exact", "noiseless"):
            return NoiseMode.NONE
        elif name in ("amplitude", "bound", "bounded"):
            return NoiseMode.AMPLITUDE
        elif name == "snr":
            return NoiseMode.SNR
        else:
            raise ValueError(f"Unknown noise mode: {name}")

    def to_str(self) -> str:
        return self.name.lower()

    def is_none(self) -> bool:
        return self == NoiseMode.NONE

    def is_amplitude(self) -> bool:
        return self == NoiseMode.AMPLITUDE


@enum.unique
class Detector(enum.Enum):
    """
    Switch detector, in the order its assignments are merged.
    """

    MARKOV = enum.auto()
    CORRECTION = enum.auto()
    SIGNATURE = enum.auto()

    def from_str(name: str) -> Detector:
        name = name.strip().lower()
        if name in ("markov", "matching"):
            return Detector.MARKOV
        elif name in ("correction", "corrections"):
            return Detector.CORRECTION
        elif name in ("signature", "short"):
            return Detector.SIGNATURE
        else:
            raise ValueError(f"Unknown detector: {name}")

    def to_str(self) -> str:
        return self.name.lower()

    @property
    def priority(self) -> int:
        return self.value


@enum.unique
class Direction(enum.Enum):
    FORWARD = enum.auto()
    BACKWARD = enum.auto()

    def from_str(name: str) -> Direction:
        name = name.strip().lower()
        if name == "forward":
            return Direction.FORWARD
        elif name == "backward":
            return Direction.BACKWARD
        else:
            raise ValueError(f"Unknown direction: {name}")

    def to_str(self) -> str:
        return self.name.lower()

    def is_forward(self) -> bool:
        return self == Direction.FORWARD


@enum.unique
class SegmentClass(enum.Enum):
    """
    Dwell-time class of a segment, relative to the state dimension n.
    """

    LONG = enum.auto()
    SHORT = enum.auto()
    VERY_SHORT = enum.auto()
    INFEASIBLE = enum.auto()

    def from_dwell(dwell: int, n: int) -> SegmentClass:
        """
        Args:
            dwell: Length of the segment.
            n: State dimension.

        Returns:
            LONG for dwell ≥ 6n+1, SHORT for 4n+2 ≤ dwell < 6n+1, VERY_SHORT for
            2n+1 ≤ dwell < 4n+2 and INFEASIBLE otherwise.
        """

        if dwell >= 6 * n + 1:
            return SegmentClass.LONG
        elif dwell >= 4 * n + 2:
            return SegmentClass.SHORT
        elif dwell >= 2 * n + 1:
            return SegmentClass.VERY_SHORT
        else:
            return SegmentClass.INFEASIBLE

    def from_str(name: str) -> SegmentClass:
        name = name.strip().lower().replace("-", "_")
        for segment_class in SegmentClass:
            if segment_class.name.lower() == name:
                return segment_class
        raise ValueError(f"Unknown segment class: {name}")

    def to_str(self) -> str:
        return self.name.lower().replace("_", "-")
