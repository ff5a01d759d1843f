"""Prompt assets and their per-call instantiation.

The .txt files in this package are the canonical prompt texts and are
covered by golden-file tests; edit them only together with the goldens.
Placeholders in braces are filled at call time.
"""

from __future__ import annotations

from importlib import resources
from string import ascii_uppercase

from ..core import SummaryFormat

PROMPT_NAMES = (
    "captioning",
    "keywords",
    "keyframes",
    "summary",
    "distractor",
    "correspondence",
    "mask_recovery",
    "vqa",
)

MASK_SENTINEL = "[MASK]"


def load_prompt(name: str) -> str:
    if name not in PROMPT_NAMES:
        raise KeyError(f"unknown prompt {name!r}")
    return (resources.files(__package__) / f"{name}.txt").read_text(encoding="utf-8")


# The modality-specific input line of the mask-recovery prompt. The
# {summary} placeholder is filled with the summary text; the full-video
# variant has no summary text.
_RECOVERY_INPUT_LINE = {
    SummaryFormat.FULL_VIDEO: "Given the video frames",
    SummaryFormat.THREE_IMAGE: (
        "Given the three keyframe images [KEYFRAME1], [KEYFRAME2], and "
        "[KEYFRAME3] extracted from a video in the correct sequential order "
        "and a textual TLDR describing a video: {summary}."
    ),
    SummaryFormat.ONE_IMAGE: (
        "Given the single keyframe image [KEYFRAME1] extracted from a video "
        "and a textual TLDR describing a video: {summary}."
    ),
    SummaryFormat.TEXT_ONLY: (
        "Given a textual TLDR describing a video: {summary}."
    ),
}

_RECOVERY_TASK = (
    "Task\n"
    "Guess all [MASK] words originally representing any words describing the "
    "video, e.g., first_guess second_guess. Return only the answers, without "
    "any explanation. Do not use quotes or commas; separate tokens with a "
    "single space."
)


def mask_recovery_prompt(fmt: SummaryFormat, summary_text: str, masked_caption: str) -> str:
    """Instantiate the mask-recovery prompt for one summary modality."""
    input_line = _RECOVERY_INPUT_LINE[fmt].format(summary=summary_text)
    return (
        "You are asked to recover masked words that describe the content of "
        "a video.\n\n"
        f"{input_line}\n\n"
        "Additionally, you are given the masked caption of the video: "
        f"{masked_caption}.\n\n"
        f"{_RECOVERY_TASK}"
    )


_VQA_INPUT_FORMAT = {
    SummaryFormat.TEXT_ONLY: "a textual description of the video",
    SummaryFormat.ONE_IMAGE: (
        "a keyframe image extracted from the video and a textual description "
        "of the video"),
    SummaryFormat.THREE_IMAGE: (
        "three keyframe images extracted from the video and a textual "
        "description of the video"),
    SummaryFormat.FULL_VIDEO: "the video",
}


def format_options(options: list[str] | tuple[str, ...]) -> str:
    return "\n".join(f"{ascii_uppercase[i]}. {opt}" for i, opt in enumerate(options))


def vqa_prompt(fmt: SummaryFormat, summary_text: str, question: str,
               options: list[str] | tuple[str, ...]) -> str:
    return load_prompt("vqa").format(
        input_format=_VQA_INPUT_FORMAT[fmt],
        summary=summary_text,
        question=question,
        options=format_options(options),
    )


def distractor_prompt(total: int = 3, fmt: str = "JSON array of strings") -> str:
    return load_prompt("distractor").format(total_distractor_num=total, format=fmt)
