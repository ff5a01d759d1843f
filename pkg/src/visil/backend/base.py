"""Model-backend contract and the generator/evaluator separation policy."""

from __future__ import annotations

import abc
from dataclasses import dataclass

from ..core import MediaContext
from ..errors import RoleSeparationError
from ..masking import MaskedCaption


@dataclass(frozen=True)
class GenerateResult:
    """A text response plus usage metadata when the backend reports it."""

    text: str
    prompt_tokens: int | None = None


@dataclass(frozen=True)
class KeywordScores:
    """Per-slot natural-log probabilities, one per non-excluded keyword slot.

    empty_recovery marks a response with zero parseable guesses, in which
    case every slot was floored.
    """

    logps: tuple[float, ...]
    prompt_tokens: int | None = None
    empty_recovery: bool = False

    def __post_init__(self):
        object.__setattr__(self, "logps", tuple(self.logps))


class Backend(abc.ABC):
    """Uniform contract over remote, replayed, and synthetic models.

    Implementations must be safely shareable across concurrent tasks.
    Replay and synthetic backends give bit-identical output for identical
    (context, prompt/masked caption, seed).
    """

    @property
    @abc.abstractmethod
    def model_id(self) -> str: ...

    @abc.abstractmethod
    def generate_text(self, context: MediaContext, prompt: str, seed: int) -> GenerateResult:
        ...

    @abc.abstractmethod
    def score_keywords(self, context: MediaContext, masked: MaskedCaption,
                       seed: int) -> KeywordScores:
        ...


@dataclass(frozen=True)
class ModelRoles:
    """Which model plays which part of the pipeline.

    The evaluator must differ from the caption and summary generators so
    that hallucinated generations are not scored by the model that produced
    them; set allow_evaluator_overlap to override deliberately.
    """

    captioner: str
    keyword_extractor: str
    summarizer: str
    evaluator: str
    answerer: str
    allow_evaluator_overlap: bool = False

    def __post_init__(self):
        if self.allow_evaluator_overlap:
            return
        if self.evaluator == self.captioner:
            raise RoleSeparationError(
                f"evaluator {self.evaluator!r} must differ from the captioner "
                "(set allow_evaluator_overlap to override)")
        if self.evaluator == self.summarizer:
            raise RoleSeparationError(
                f"evaluator {self.evaluator!r} must differ from the summarizer "
                "(set allow_evaluator_overlap to override)")
