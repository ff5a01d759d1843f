"""Exception and warning types shared across the package.

Errors that name a contract violation are raised; recoverable anomalies
(shortfalls, separation, discarded guesses) are warnings so batch runs
keep going.
"""

from __future__ import annotations


class VisilError(Exception):
    """Base class for all package errors."""


# ---------------------------------------------------------------------------
# core
# ---------------------------------------------------------------------------


class CostUnavailable(VisilError):
    """Token cost cannot be determined (full-video summary without usage
    metadata or a frame inventory)."""


class ParseError(VisilError):
    """A persisted record line is malformed or violates a record invariant."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# masking
# ---------------------------------------------------------------------------


class KeywordParseError(VisilError):
    """Keyword extraction output is not a JSON array of strings."""


class NothingToMask(VisilError):
    """No keyword could be matched in the caption; no slots produced."""


# ---------------------------------------------------------------------------
# backend
# ---------------------------------------------------------------------------


class BackendUnavailable(VisilError):
    """Transport failed after all retries."""


class BackendRefusal(BackendUnavailable):
    """The model refused to answer after all retries; the caller should
    mark the affected cell missing instead of aborting the run."""


class FixtureMiss(VisilError):
    """Replay mode found no fixture for the request."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no fixture recorded for request hash {key}")


class UnknownFact(VisilError):
    """A keyword is not part of the synthetic world's fact vocabulary."""


class RoleSeparationError(VisilError):
    """Evaluator model coincides with a generator model and no override
    was given."""


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


class DomainError(VisilError):
    """Numeric input outside the operation's domain (e.g. probability <= 0)."""


class IdentityMismatch(VisilError):
    """Video and summary contexts refer to different videos."""


# ---------------------------------------------------------------------------
# selection / stats
# ---------------------------------------------------------------------------


class EmptyInput(VisilError):
    """An operation that needs at least one element got none."""


class DegenerateInput(VisilError):
    """Statistical input carries no usable variation (constant vector,
    single-class labels, too few samples)."""


class EvaluatorMismatch(VisilError):
    """Records from different evaluator models were pooled without force;
    scores are not comparable across models."""


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------


class TimecodeParseError(VisilError):
    """Timecode text does not match HH:MM:SS:FF with in-range fields."""


class InvalidFrameField(VisilError):
    """Timecode frame field is >= the frame rate."""


class KeyframeParseError(VisilError):
    """Keyframe-selection response is not a parseable JSON array of
    timestamp/description objects."""


class CaptionUnavailable(VisilError):
    """Captioning failed for a video after retries; skip the video."""


# ---------------------------------------------------------------------------
# warnings
# ---------------------------------------------------------------------------


class VisilWarning(UserWarning):
    """Base class for recoverable anomalies."""


class EmptyRecovery(VisilWarning):
    """A scoring response contained zero parseable guesses; all slot
    probabilities were floored."""


class DistractorShortfall(VisilWarning):
    """Fewer distractors parsed than requested; the parsed ones are kept."""


class SeparationWarning(VisilWarning):
    """Logistic fit detected (quasi-)separation; coefficients diverged."""
