"""Exception hierarchy shared by every stage of the node."""

from __future__ import annotations


class RnodeError(Exception):
    """Base class for all errors raised by this package."""


# trace ------------------------------------------------------------------

class TraceError(RnodeError):
    pass


class MalformedRecord(TraceError):
    def __init__(self, line_no: int, reason: str = "") -> None:
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"malformed record at line {line_no}: {reason}" if reason else f"malformed record at line {line_no}")


class NonMonotonicTime(TraceError):
    def __init__(self, frame_index: int, reason: str = "") -> None:
        self.frame_index = frame_index
        super().__init__(f"non-monotonic frame/time at frame {frame_index}{': ' + reason if reason else ''}")


class BBoxOutOfBounds(TraceError):
    def __init__(self, frame_index: int, bbox=None) -> None:
        self.frame_index = frame_index
        self.bbox = bbox
        super().__init__(f"bbox {bbox} out of frame bounds at frame {frame_index}")


class IoFailure(TraceError):
    pass


class InfeasibleScript(TraceError):
    pass


# tracker ----------------------------------------------------------------

class ClassMismatch(RnodeError):
    pass


class OutOfOrderFrame(RnodeError):
    pass


# roi --------------------------------------------------------------------

class DegenerateInput(RnodeError):
    pass


class EmptyWindow(RnodeError):
    pass


class NoStaticFeatures(RnodeError):
    pass


class AmbiguousLaneAxis(RnodeError):
    pass


# plate / v2x ------------------------------------------------------------

class WeakSalt(RnodeError):
    pass


class MissingGeoConfig(RnodeError):
    pass


class TransportDown(RnodeError):
    pass


class EmptySamples(RnodeError):
    pass


# pipeline ---------------------------------------------------------------

class StageError(RnodeError):
    """Wraps a module error with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
