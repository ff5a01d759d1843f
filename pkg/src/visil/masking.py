"""Keyword-list parsing, masked-caption construction, and guess alignment.

Masking replaces each matched keyword in the caption with the literal
sentinel "[MASK]". Matching is case-insensitive, whole-word, and strictly
sequential: keyword i is looked up at or after the end of keyword i-1's
match, so the keyword order mirrors the caption order. Keywords that
cannot be matched are excluded from scoring on both the video and the
summary side, keeping the two factor sets identical.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass

from .core import EXCLUDED_KEYWORD, MAX_KEYWORDS
from .errors import KeywordParseError, NothingToMask, VisilWarning

MASK = "[MASK]"

REASON_NOT_FOUND = "not_found"


@dataclass(frozen=True)
class Slot:
    keyword: str
    start: int  # character span in the original caption, end exclusive
    end: int


@dataclass(frozen=True)
class MaskedCaption:
    original_text: str
    masked_text: str
    slots: tuple[Slot, ...]
    excluded: tuple[tuple[str, str], ...] = ()  # (keyword, reason)

    @property
    def keywords(self) -> tuple[str, ...]:
        return tuple(s.keyword for s in self.slots)

    @property
    def n_slots(self) -> int:
        return len(self.slots)


def parse_keywords(raw: str) -> list[str]:
    """Parse keyword-extraction output (a JSON array of strings) into a
    clean keyword list: lowercase, single words only, no duplicates, the
    word "video" dropped, at most 20 entries, order preserved."""
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise KeywordParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise KeywordParseError("expected a JSON array of strings")

    keywords: list[str] = []
    seen: set[str] = set()
    for entry in data:
        word = entry.lower()
        if not word or any(c.isspace() for c in word):
            warnings.warn(f"dropping non-single-word keyword {entry!r}", VisilWarning)
            continue
        if word == EXCLUDED_KEYWORD:
            continue
        if word in seen:
            continue
        seen.add(word)
        keywords.append(word)
        if len(keywords) == MAX_KEYWORDS:
            break
    return keywords


def _find_whole_word(text: str, word: str, start: int) -> re.Match | None:
    # \b misbehaves when the keyword starts/ends with a non-word char,
    # so use explicit word-character lookarounds.
    pattern = re.compile(r"(?<!\w)" + re.escape(word) + r"(?!\w)", re.IGNORECASE)
    return pattern.search(text, start)


def build_masked_caption(caption: str, keywords: list[str]) -> MaskedCaption:
    """Mask each keyword's first whole-word occurrence at or after the end
    of the previous keyword's match. Unmatched keywords are excluded."""
    slots: list[Slot] = []
    excluded: list[tuple[str, str]] = []
    cursor = 0
    for kw in keywords:
        m = _find_whole_word(caption, kw, cursor)
        if m is None:
            excluded.append((kw, REASON_NOT_FOUND))
            continue
        slots.append(Slot(kw, m.start(), m.end()))
        cursor = m.end()
    if not slots:
        raise NothingToMask(f"no keyword of {keywords!r} occurs in the caption")

    pieces = []
    prev = 0
    for slot in slots:
        pieces.append(caption[prev:slot.start])
        pieces.append(MASK)
        prev = slot.end
    pieces.append(caption[prev:])
    return MaskedCaption(
        original_text=caption,
        masked_text="".join(pieces),
        slots=tuple(slots),
        excluded=tuple(excluded),
    )


def align_guesses(response: str, slots: tuple[Slot, ...] | list[Slot]) -> list[tuple[int, str | None]]:
    """Pair the i-th whitespace-separated guess with slot i.

    Surplus guesses are discarded with a warning; missing guesses pair
    with None so scoring can floor them. Total function: never raises.
    """
    guesses = response.split()
    if len(guesses) > len(slots):
        warnings.warn(
            f"discarding {len(guesses) - len(slots)} surplus guesses", VisilWarning)
    out: list[tuple[int, str | None]] = []
    for i in range(len(slots)):
        out.append((i, guesses[i] if i < len(guesses) else None))
    return out
