"""Remote model backend speaking a chat-completions-style JSON schema.

Requests carry multimodal content parts plus a log-probabilities option;
keyword scoring reads the probability the model assigned to each expected
keyword at its slot position, falling back to top-k alternatives and then
to the configured probability floor. The exact request/response shapes are
documented in the README and pinned bit-exactly by the fixture files.
"""

from __future__ import annotations

import math
import re
import warnings
from typing import Callable

from ..core import ImagePart, MediaContext, SummaryFormat, TextPart, VideoPart
from ..errors import BackendRefusal, EmptyRecovery, VisilWarning
from ..masking import MaskedCaption
from ..prompts import mask_recovery_prompt
from .base import Backend, GenerateResult, KeywordScores
from .transport import Transport

DEFAULT_TOP_K = 20
DEFAULT_EPSILON_FLOOR = 1e-6
DEFAULT_MAX_TOKENS = 1024
REFUSAL_RETRIES = 3


def content_parts(context: MediaContext) -> list[dict]:
    parts: list[dict] = []
    for part in context.parts:
        if isinstance(part, TextPart):
            parts.append({"type": "text", "text": part.text})
        elif isinstance(part, ImagePart):
            parts.append({"type": "image_url", "image_url": {"url": part.frame}})
        elif isinstance(part, VideoPart):
            url = part.video.video_path or part.video.frame_dir
            parts.append({"type": "video_url", "video_url": {"url": url}})
    return parts


def context_summary_format(context: MediaContext) -> SummaryFormat:
    """Map a context's parts onto the summary modality it represents."""
    if context.video_ids:
        return SummaryFormat.FULL_VIDEO
    n = len(context.image_refs)
    if n == 0:
        return SummaryFormat.TEXT_ONLY
    if n == 1:
        return SummaryFormat.ONE_IMAGE
    if n == 3:
        return SummaryFormat.THREE_IMAGE
    raise ValueError(f"no summary modality uses {n} images")


def _normalize(token: str) -> str:
    return re.sub(r"^\W+|\W+$", "", token.strip().lower())


class ApiBackend(Backend):
    """Backend over a live or replayed chat-completions transport."""

    def __init__(
        self,
        model_id: str,
        transport: Transport,
        temperature: float = 0.0,
        top_k: int = DEFAULT_TOP_K,
        epsilon_floor: float = DEFAULT_EPSILON_FLOOR,
        max_tokens: int = DEFAULT_MAX_TOKENS,
        refusal_retries: int = REFUSAL_RETRIES,
        forced_scorer: Callable[[MediaContext, str, str], float] | None = None,
    ):
        self._model_id = model_id
        self.transport = transport
        self.temperature = temperature
        self.top_k = top_k
        self.epsilon_floor = epsilon_floor
        self.max_tokens = max_tokens
        self.refusal_retries = refusal_retries
        # Optional hook for endpoints that can score a supplied completion;
        # returns the summed log-probability of the forced keyword tokens.
        self.forced_scorer = forced_scorer

    @property
    def model_id(self) -> str:
        return self._model_id

    def build_payload(self, context: MediaContext, prompt: str, seed: int,
                      want_logprobs: bool = False) -> dict:
        payload = {
            "model": self._model_id,
            "messages": [
                {"role": "user",
                 "content": content_parts(context) + [{"type": "text", "text": prompt}]},
            ],
            "temperature": self.temperature,
            "seed": seed,
            "max_tokens": self.max_tokens,
        }
        if want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = self.top_k
        return payload

    def _send(self, payload: dict) -> dict:
        for _ in range(self.refusal_retries):
            data = self.transport.send(payload)
            if not _is_refusal(data):
                return data
        raise BackendRefusal(
            f"model {self._model_id!r} refused after {self.refusal_retries} attempts")

    def generate_text(self, context: MediaContext, prompt: str, seed: int) -> GenerateResult:
        data = self._send(self.build_payload(context, prompt, seed))
        message = data["choices"][0]["message"]
        return GenerateResult(
            text=message.get("content") or "",
            prompt_tokens=data.get("usage", {}).get("prompt_tokens"),
        )

    def score_keywords(self, context: MediaContext, masked: MaskedCaption,
                       seed: int) -> KeywordScores:
        prompt = mask_recovery_prompt(
            context_summary_format(context), context.text, masked.masked_text)
        data = self._send(self.build_payload(context, prompt, seed, want_logprobs=True))

        choice = data["choices"][0]
        content = choice["message"].get("content") or ""
        token_entries = (choice.get("logprobs") or {}).get("content") or []
        words = _group_tokens_into_words(content, token_entries)

        floor = math.log(self.epsilon_floor)
        keywords = masked.keywords
        if not words:
            warnings.warn(
                f"no parseable guesses for {len(keywords)} slots; flooring all",
                EmptyRecovery)
            return KeywordScores(
                logps=tuple(floor for _ in keywords),
                prompt_tokens=data.get("usage", {}).get("prompt_tokens"),
                empty_recovery=True,
            )
        if len(words) > len(keywords):
            warnings.warn(
                f"discarding {len(words) - len(keywords)} surplus guesses", VisilWarning)

        logps = []
        for i, keyword in enumerate(keywords):
            if i >= len(words):
                logps.append(floor)
                continue
            word_text, entries = words[i]
            if _normalize(word_text) == keyword:
                lp = sum(e.get("logprob", 0.0) for e in entries)
            else:
                lp = self._alternative_logprob(entries, keyword, context, prompt)
            logps.append(min(max(lp, floor), 0.0))
        return KeywordScores(
            logps=tuple(logps),
            prompt_tokens=data.get("usage", {}).get("prompt_tokens"),
        )

    def _alternative_logprob(self, entries: list[dict], keyword: str,
                             context: MediaContext, prompt: str) -> float:
        for alt in (entries[0].get("top_logprobs") or []) if entries else []:
            if _normalize(alt.get("token", "")) == keyword:
                return alt["logprob"]
        if self.forced_scorer is not None:
            return self.forced_scorer(context, prompt, keyword)
        return math.log(self.epsilon_floor)


def _is_refusal(data: dict) -> bool:
    try:
        choice = data["choices"][0]
    except (KeyError, IndexError, TypeError):
        return True  # malformed response; treat like a refusal and retry
    if choice.get("finish_reason") in ("content_filter", "refusal"):
        return True
    message = choice.get("message", {})
    return bool(message.get("refusal"))


def _group_tokens_into_words(content: str, token_entries: list[dict]) -> list[tuple[str, list[dict]]]:
    """Group the response's logprob tokens into whitespace-separated words.

    Token char offsets are reconstructed by concatenation; a word owns
    every token overlapping its span (a leading-space token belongs to the
    word it introduces). Without logprob entries, words carry no tokens.
    """
    spans = [(m.group(), m.start(), m.end())
             for m in re.finditer(r"\S+", content)]
    if not token_entries:
        return [(text, []) for text, _, _ in spans]

    token_spans = []
    pos = 0
    for entry in token_entries:
        tok = entry.get("token", "")
        token_spans.append((pos, pos + len(tok), entry))
        pos += len(tok)

    words = []
    for text, start, end in spans:
        owned = [e for (ts, te, e) in token_spans if ts < end and te > start]
        words.append((text, owned))
    return words
