"""Closed-form synthetic backend over a toy fact world.

Each toy video is a set of single-word facts. A keyword is recovered with
probability p_hit when the context carries the corresponding fact and
p_miss otherwise, so every score has an analytic value: the total
information loss of a summary is |uncovered keywords| * ln(p_hit/p_miss).
Deterministic and seed-independent throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from ..core import ImagePart, MediaContext, TextPart, VideoPart
from ..errors import UnknownFact
from ..masking import MaskedCaption
from .base import Backend, GenerateResult, KeywordScores


@dataclass(frozen=True)
class ToyWorld:
    facts_per_video: int
    p_hit: float = 0.9
    p_miss: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.facts_per_video < 1:
            raise ValueError("facts_per_video must be positive")
        if not (0.0 < self.p_miss < self.p_hit <= 1.0):
            raise ValueError("need 0 < p_miss < p_hit <= 1")


def synthetic_score_keywords(
    world: ToyWorld,
    context_facts: set[str],
    masked: MaskedCaption,
    vocabulary: set[str] | None = None,
) -> list[float]:
    """ln(p_hit) per keyword covered by the context, ln(p_miss) otherwise.

    When a vocabulary is given, keywords outside it are rejected: scoring
    a token the world has never defined is a setup bug, not a miss.
    """
    logps = []
    for kw in masked.keywords:
        if vocabulary is not None and kw not in vocabulary:
            raise UnknownFact(f"keyword {kw!r} is not a fact of this world")
        p = world.p_hit if kw in context_facts else world.p_miss
        logps.append(math.log(p))
    return logps


def _timecode(seconds: float, fps: float) -> str:
    total = int(seconds)
    frames = min(int(round((seconds - total) * fps)), max(int(math.ceil(fps)) - 1, 0))
    h, rem = divmod(total, 3600)
    m, s = divmod(rem, 60)
    return f"{h:02d}:{m:02d}:{s:02d}:{frames:02d}"


class SyntheticBackend(Backend):
    """Answers every pipeline prompt from registered video facts.

    Videos (and optionally individual frames) are registered with their
    fact lists; a context's facts are the union over its parts, where text
    contributes only words that exist in the world vocabulary. Words
    outside the vocabulary are ignored, so padding a summary with
    ungrounded tokens never changes a score.
    """

    def __init__(self, world: ToyWorld, model_id: str = "synthetic"):
        self.world = world
        self._model_id = model_id
        self._video_facts: dict[str, tuple[str, ...]] = {}
        self._frame_facts: dict[str, tuple[str, ...]] = {}

    @property
    def model_id(self) -> str:
        return self._model_id

    def register_video(self, video_id: str, facts: list[str] | tuple[str, ...]) -> None:
        self._video_facts[video_id] = tuple(facts)

    def register_frame(self, frame_ref: str, facts: list[str] | tuple[str, ...]) -> None:
        self._frame_facts[frame_ref] = tuple(facts)

    def video_facts(self, video_id: str) -> tuple[str, ...]:
        try:
            return self._video_facts[video_id]
        except KeyError:
            raise UnknownFact(f"video {video_id!r} is not registered") from None

    @property
    def vocabulary(self) -> set[str]:
        vocab: set[str] = set()
        for facts in self._video_facts.values():
            vocab.update(facts)
        for facts in self._frame_facts.values():
            vocab.update(facts)
        return vocab

    def facts_in_context(self, context: MediaContext) -> set[str]:
        vocab = self.vocabulary
        facts: set[str] = set()
        for part in context.parts:
            if isinstance(part, VideoPart):
                facts.update(self.video_facts(part.video.id))
            elif isinstance(part, ImagePart):
                facts.update(self._frame_facts.get(part.frame, ()))
            elif isinstance(part, TextPart):
                facts.update(w for w in part.text.lower().split() if w in vocab)
        return facts

    def score_keywords(self, context: MediaContext, masked: MaskedCaption,
                       seed: int) -> KeywordScores:
        logps = synthetic_score_keywords(
            self.world, self.facts_in_context(context), masked,
            vocabulary=self.vocabulary)
        return KeywordScores(logps=tuple(logps))

    # -- scripted generation ------------------------------------------------

    def generate_text(self, context: MediaContext, prompt: str, seed: int) -> GenerateResult:
        if "descriptive paragraph for the provided video file" in prompt:
            return GenerateResult(" ".join(self._context_video_facts(context)))
        if "Extract up to 20 keywords" in prompt:
            words = []
            for w in context.text.split():
                if w not in words:
                    words.append(w)
            return GenerateResult(json.dumps(words[:20]))
        if "SMPTE timecode" in prompt:
            return GenerateResult(self._keyframe_response(context))
        if "visual narrative analyst" in prompt:
            return GenerateResult(self._summary_response(context))
        if "Respond only with the letter" in prompt:
            return GenerateResult(self._vqa_response(context, prompt))
        if "distractor summaries" in prompt:
            return GenerateResult(self._distractor_response(context))
        if "correctly corresponds" in prompt:
            return GenerateResult(self._correspondence_response(context))
        if "recover masked words" in prompt:
            return GenerateResult(" ".join(sorted(self.facts_in_context(context))[:20]))
        raise ValueError("synthetic backend has no script for this prompt")

    def _context_video_facts(self, context: MediaContext) -> tuple[str, ...]:
        for part in context.parts:
            if isinstance(part, VideoPart):
                return self.video_facts(part.video.id)
        raise UnknownFact("context carries no video part")

    def _keyframe_response(self, context: MediaContext) -> str:
        video = next(p.video for p in context.parts if isinstance(p, VideoPart))
        duration = video.duration_s or 1.0
        items = [
            {"timestamp": _timecode(duration * frac, video.fps),
             "description": f"moment at {int(frac * 100)} percent of the clip"}
            for frac in (0.25, 0.5, 0.75)
        ]
        return json.dumps(items)

    def _summary_response(self, context: MediaContext) -> str:
        n_images = len(context.image_refs)
        facts = " ".join(self._context_video_facts(context))
        if n_images == 0:
            return facts
        anchors = " ".join(f"[KEYFRAME{i + 1}]" for i in range(n_images))
        return f"{anchors} {facts}"

    def _vqa_response(self, context: MediaContext, prompt: str) -> str:
        # Pick the option sharing the most facts with the context.
        facts = self.facts_in_context(context)
        options: list[tuple[str, str]] = []
        in_options = False
        for line in prompt.splitlines():
            if line.startswith("Options:"):
                in_options = True
                line = line[len("Options:"):].strip()
                if not line:
                    continue
            if in_options and len(line) > 2 and line[1] == "." and line[0].isupper():
                options.append((line[0], line[2:].strip()))
        if not options:
            return "A"
        best = max(options,
                   key=lambda o: sum(1 for w in o[1].lower().split() if w in facts))
        return best[0]

    def _distractor_response(self, context: MediaContext) -> str:
        words = context.text.split()
        out = []
        for i in range(1, 4):
            variant = words[:-1] + [f"altered{i}"] if words else [f"altered{i}"]
            out.append(" ".join(variant))
        return json.dumps(out)

    def _correspondence_response(self, context: MediaContext) -> str:
        video_facts: set[str] = set()
        summary_facts: set[str] = set()
        vocab = self.vocabulary
        for part in context.parts:
            if isinstance(part, VideoPart):
                video_facts.update(self.video_facts(part.video.id))
            elif isinstance(part, ImagePart):
                summary_facts.update(self._frame_facts.get(part.frame, ()))
            elif isinstance(part, TextPart):
                summary_facts.update(
                    w for w in part.text.lower().split() if w in vocab)
        verdict = "Yes" if summary_facts <= video_facts else "No"
        return f"{verdict}. Confidence: 5"
