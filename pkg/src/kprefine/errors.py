"""Exception hierarchy for the kprefine package."""


class KprefineError(Exception):
    """Base class for all package-specific errors."""


class SingularTransform(KprefineError):
    """Affine linear part (or homography) is not invertible."""


class InvalidConfig(KprefineError):
    """A configuration value violates its documented constraints."""


class UnsupportedDetector(KprefineError):
    """Detector kind is not one of the built-in choices."""


class ParseError(KprefineError):
    """A keypoint or homography file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}:"
        if line is not None:
            prefix += f"{line}:"
        super().__init__(f"{prefix} {message}" if prefix else message)


class MissingField(ParseError):
    """A keypoint record lacks a required field."""


class MixedWarpIds(KprefineError):
    """NMS input spans more than one source warp."""


class EmptyPointSet(KprefineError):
    """An operation requiring at least one point received none."""


class EmptySeeds(KprefineError):
    """Mixture fit started with no seed positions."""


class AllComponentsDropped(KprefineError):
    """Every mixture component died during fitting."""


class DegenerateComponent(KprefineError):
    """A component received zero responsibility mass."""


class EmptyOverlap(KprefineError):
    """No keypoints fall in the overlap region of an image pair."""


class InvalidSpec(KprefineError):
    """Synthetic cluster specification is inconsistent."""


class PipelineStageError(KprefineError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
