"""Grid-aligned scalar volumes and label maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch


class TissueClass(Enum):
    BACKGROUND = -1
    NORMAL = 0
    AT_RISK = 1
    INFARCTED = 2

    @property
    def label(self) -> str:
        return {
            TissueClass.BACKGROUND: "background",
            TissueClass.NORMAL: "normal",
            TissueClass.AT_RISK: "at_risk",
            TissueClass.INFARCTED: "infarcted",
        }[self]


@dataclass
class ParametricVolume:
    """A named 2-D scalar grid with physical pixel spacing (mm/pixel)."""

    name: str
    width: int
    height: int
    spacing: tuple[float, float]
    values: np.ndarray  # shape (height, width), float64, row-major

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"volume '{self.name}': values shape {self.values.shape} "
                f"!= (height={self.height}, width={self.width})"
            )
        if self.spacing[0] <= 0 or self.spacing[1] <= 0:
            raise ValueError(f"volume '{self.name}': spacing must be positive")

    @classmethod
    def from_array(cls, name, values, spacing=(1.0, 1.0)):
        values = np.asarray(values, dtype=np.float64)
        h, w = values.shape
        return cls(name=name, width=w, height=h, spacing=tuple(spacing), values=values)


@dataclass
class AcquisitionSeries:
    """Ordered stack of frames with one control value per frame.

    Control values are b-values (s/mm^2) for a diffusion series or echo
    times (ms) for a multi-echo series, and must be strictly increasing.
    """

    frames: list[ParametricVolume]
    control_values: list[float]

    def __post_init__(self):
        if len(self.frames) != len(self.control_values):
            raise ValueError("one control value per frame required")
        if len(self.frames) < 2:
            raise ValueError("at least two frames required")
        first = self.frames[0]
        for f in self.frames[1:]:
            if (f.width, f.height) != (first.width, first.height):
                raise DimensionMismatch("all frames must share dimensions")
            if f.spacing != first.spacing:
                raise DimensionMismatch("all frames must share pixel spacing")
        cv = np.asarray(self.control_values, dtype=float)
        if not np.all(np.diff(cv) > 0):
            raise ValueError("control values must be strictly increasing")

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def spacing(self) -> tuple[float, float]:
        return self.frames[0].spacing

    def signal_stack(self) -> np.ndarray:
        """Frames stacked to shape (n_frames, height*width)."""
        return np.stack([f.values.ravel() for f in self.frames], axis=0)


@dataclass
class LabelMap:
    """Per-voxel integer labels plus a tissue-class assignment.

    label -1 means background / unmasked; tissue_class is BACKGROUND exactly
    on those voxels.
    """

    width: int
    height: int
    spacing: tuple[float, float]
    labels: np.ndarray  # shape (height, width), int64, -1 = background
    tissue_class: np.ndarray = field(default=None)  # same shape, int8 TissueClass values

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.height, self.width):
            raise DimensionMismatch("labels shape does not match width/height")
        if self.tissue_class is None:
            tc = np.full(self.labels.shape, TissueClass.NORMAL.value, dtype=np.int8)
            tc[self.labels < 0] = TissueClass.BACKGROUND.value
            self.tissue_class = tc
        else:
            self.tissue_class = np.ascontiguousarray(self.tissue_class, dtype=np.int8)
            if self.tissue_class.shape != self.labels.shape:
                raise DimensionMismatch("tissue_class shape does not match labels")
        bg = self.labels < 0
        if not np.array_equal(bg, self.tissue_class == TissueClass.BACKGROUND.value):
            raise ValueError("tissue_class must be BACKGROUND exactly where label is -1")

    @classmethod
    def from_mask(cls, mask, spacing=(1.0, 1.0)):
        """Binary mask (nonzero = inside) to a LabelMap with labels {1, -1}."""
        mask = np.asarray(mask)
        labels = np.where(mask != 0, 1, -1).astype(np.int64)
        h, w = labels.shape
        return cls(width=w, height=h, spacing=tuple(spacing), labels=labels)

    def inside(self) -> np.ndarray:
        """Boolean grid of voxels that carry a label."""
        return self.labels >= 0

    def class_mask(self, tissue: TissueClass) -> np.ndarray:
        return self.tissue_class == tissue.value
