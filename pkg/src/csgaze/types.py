"""Domain types shared across the package.

Coordinates are normalized to ``[0, 1]`` everywhere; conversion to pixels
happens only when cropping or rendering.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


class ValidationError(ValueError):
    """A record violates a field invariant."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class GazeClass(enum.IntEnum):
    """Static dyadic gaze patterns, integer-encoded in a fixed order."""

    SHARE = 0
    MUTUAL = 1
    SINGLE = 2
    MISS = 3
    VOID = 4

    @property
    def tag(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_tag(cls, tag: str) -> "GazeClass":
        try:
            return cls[tag.strip().upper()]
        except KeyError:
            raise ValidationError("label", f"unknown gaze class {tag!r}") from None


class PairClass(enum.IntEnum):
    """Pairwise social gaze labels used by the VSGaze-style taxonomy."""

    LAH = 0
    LAEO = 1
    SA = 2


@dataclass(frozen=True)
class PairLabel:
    lah_p_to_a: bool
    lah_a_to_p: bool
    laeo: bool
    sa: bool

    def __post_init__(self):
        if self.laeo and not (self.lah_p_to_a and self.lah_a_to_p):
            raise ValidationError("laeo", "requires both looking-at-head flags")
        if self.sa and self.laeo:
            raise ValidationError("sa", "cannot co-occur with laeo")


@dataclass(frozen=True)
class HeadBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValidationError(name, f"not a finite number: {v!r}")
            if not 0.0 <= v <= 1.0:
                raise ValidationError(name, f"{v} outside [0, 1]")
        if not self.x_min < self.x_max:
            raise ValidationError("x_min", f"x_min={self.x_min} >= x_max={self.x_max}")
        if not self.y_min < self.y_max:
            raise ValidationError("y_min", f"y_min={self.y_min} >= y_max={self.y_max}")

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "HeadBox":
        if len(values) != 4:
            raise ValidationError("box", f"expected 4 values, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_tuple(self) -> tuple:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def contains(self, x: float, y: float) -> bool:
        """Closed-box membership."""
        return bool(self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max)


Label = Union[GazeClass, bool]


@dataclass(frozen=True)
class DyadSample:
    """One image with a principal and an associate head box.

    ``label`` is a :class:`GazeClass` for the multiclass task or a bool for
    binary LAEO. ``image_ref`` is a path or an in-memory raster.
    """

    sample_id: str
    image_ref: object
    principal: HeadBox
    associate: HeadBox
    label: Optional[Label] = None
    context_text: Optional[str] = None

    def __post_init__(self):
        if self.principal == self.associate:
            raise ValidationError("associate", "identical to principal box")


def _check_point(name: str, point) -> tuple:
    if len(point) != 2:
        raise ValidationError(name, f"expected 2 values, got {len(point)}")
    gx, gy = float(point[0]), float(point[1])
    if not (math.isfinite(gx) and math.isfinite(gy)):
        raise ValidationError(name, "not finite")
    if not (0.0 <= gx <= 1.0 and 0.0 <= gy <= 1.0):
        raise ValidationError(name, f"({gx}, {gy}) outside the unit square")
    return (gx, gy)


@dataclass(frozen=True)
class GazeFollowSample:
    sample_id: str
    image_ref: object
    head: HeadBox
    gaze_point: tuple

    def __post_init__(self):
        object.__setattr__(self, "gaze_point", _check_point("gaze_point", self.gaze_point))


HEATMAP_SIZE = 64


@dataclass(frozen=True)
class HeatmapTarget:
    grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.shape != (HEATMAP_SIZE, HEATMAP_SIZE):
            raise ValidationError("grid", f"shape {g.shape} != (64, 64)")
        if g.min() < 0 or g.max() > 1:
            raise ValidationError("grid", "values outside [0, 1]")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    @property
    def peak_cell(self) -> tuple:
        """``(col, row)`` of the maximum, i.e. ``(x_index, y_index)``."""
        row, col = np.unravel_index(int(np.argmax(self.grid)), self.grid.shape)
        return (int(col), int(row))


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    logits: np.ndarray = field(repr=False)
    probabilities: np.ndarray = field(repr=False)
    predicted: int = -1

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or len(p) != len(np.asarray(self.logits)):
            raise ValidationError("probabilities", "shape does not match logits")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise ValidationError("probabilities", f"not on the simplex (sum={p.sum()})")
        if self.predicted != int(np.argmax(p)):
            raise ValidationError("predicted", "must equal argmax(probabilities)")

    @classmethod
    def from_logits(cls, sample_id: str, logits) -> "PredictionRecord":
        z = np.asarray(logits, dtype=np.float64)
        p = np.exp(z - z.max())
        p /= p.sum()
        return cls(sample_id, z, p, int(np.argmax(p)))
