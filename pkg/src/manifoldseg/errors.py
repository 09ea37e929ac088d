"""Exception types raised across the package."""

from __future__ import annotations


class ManifoldSegError(Exception):
    """Base class for all package errors."""


# --- parameter-map fitting ---

class NonPositiveSignal(ManifoldSegError):
    """Signal contains a value <= 0, so the log transform is undefined."""


class DegenerateFit(ManifoldSegError):
    """All control values are equal; the decay slope is not identifiable."""


class DimensionMismatch(ManifoldSegError):
    """Volumes or masks do not share the same grid dimensions."""


# --- graph / embedding ---

class KTooLarge(ManifoldSegError):
    """Requested neighbor count k >= number of points."""


class DisconnectedGraph(ManifoldSegError):
    """The neighbor graph has more than one connected component.

    Carries the component sizes so callers can decide whether to raise k,
    bridge the components, or keep only the largest one.
    """

    def __init__(self, component_sizes):
        self.component_sizes = list(component_sizes)
        sizes = ", ".join(str(s) for s in self.component_sizes)
        super().__init__(
            f"neighbor graph is disconnected ({len(self.component_sizes)} "
            f"components with sizes [{sizes}])"
        )


class SigmaNonPositive(ManifoldSegError):
    """Diffusion kernel width must be positive."""


class EmptyLandmarks(ManifoldSegError):
    """Out-of-sample extension requires a nonempty landmark set."""


# --- clustering ---

class MismatchedRunSizes(ManifoldSegError):
    """Ensemble runs do not agree on the number of points."""


class NoClusters(ManifoldSegError):
    """Tissue classification needs at least one cluster."""


# --- pipeline / phantom ---

class EmptyMask(ManifoldSegError):
    """Mask excludes every voxel."""


class OverlappingRegions(ManifoldSegError):
    """Phantom regions must be disjoint."""


class ZeroVariance(ManifoldSegError):
    """A correlation input has zero variance; r is undefined."""


# --- manifest parsing ---

class ManifestError(ManifoldSegError):
    """Base class for study-manifest problems."""


class ManifestSyntaxError(ManifestError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingChannel(ManifestError):
    """A required input channel is absent from the manifest."""


class OutOfRangeParam(ManifestError):
    """A pipeline parameter lies outside its documented range."""
