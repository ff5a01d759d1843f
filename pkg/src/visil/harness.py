"""Pipeline orchestration: captioning, keyword extraction, keyframe
selection, summary construction, VQA, the correspondence test with
distractors, and the synthetic desk-scale experiment generator.

Frame extraction is delegated: a keyframe resolves to
frame_dir/frame_{index:06d}.png, and an external extractor command is
invoked only when that file is absent and a command template is
configured.
"""

from __future__ import annotations

import json
import math
import re
import string
import subprocess
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend.base import Backend
from .backend.synthetic import SyntheticBackend, ToyWorld
from .core import (
    CaptionRecord,
    ImagePart,
    MediaContext,
    SummaryFormat,
    SummaryRecord,
    TextPart,
    VideoPart,
    VideoRef,
    estimate_token_cost,
)
from .errors import (
    BackendUnavailable,
    CaptionUnavailable,
    CostUnavailable,
    DistractorShortfall,
    InvalidFrameField,
    KeyframeParseError,
    TimecodeParseError,
    VisilWarning,
)
from .masking import build_masked_caption, parse_keywords
from .prompts import load_prompt, vqa_prompt, distractor_prompt
from .scoring import ScoringConfig, visil_score


# ---------------------------------------------------------------------------
# timecodes
# ---------------------------------------------------------------------------

_TIMECODE_RE = re.compile(r"^(\d{2}):(\d{2}):(\d{2}):(\d{2})$")


@dataclass(frozen=True)
class Timecode:
    """SMPTE-style HH:MM:SS:FF position; FF is a frame number within the
    second, validated against the frame rate at resolution time."""

    hours: int
    minutes: int
    seconds: int
    frames: int

    def __post_init__(self):
        if min(self.hours, self.minutes, self.seconds, self.frames) < 0:
            raise TimecodeParseError("timecode fields must be non-negative")
        if self.minutes >= 60 or self.seconds >= 60:
            raise TimecodeParseError("minutes and seconds must be < 60")

    @classmethod
    def from_text(cls, tc: str) -> "Timecode":
        m = _TIMECODE_RE.match(tc.strip())
        if m is None:
            raise TimecodeParseError(f"not an HH:MM:SS:FF timecode: {tc!r}")
        return cls(*(int(g) for g in m.groups()))

    def frame_index(self, fps: float) -> int:
        if fps <= 0:
            raise ValueError("fps must be positive")
        if self.frames >= math.ceil(fps):
            raise InvalidFrameField(
                f"frame field {self.frames} out of range at {fps} fps")
        whole_seconds = 3600 * self.hours + 60 * self.minutes + self.seconds
        return round(fps * whole_seconds) + self.frames


def parse_timecode(tc: str, fps: float) -> int:
    """Frame index of an HH:MM:SS:FF timecode at the given frame rate."""
    return Timecode.from_text(tc).frame_index(fps)


# ---------------------------------------------------------------------------
# items
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VqaItem:
    video_id: str
    question: str
    options: tuple[str, ...]
    answer_index: int

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if not (2 <= len(self.options) <= 4):
            raise ValueError("need 2-4 options")
        if not (0 <= self.answer_index < len(self.options)):
            raise ValueError("answer_index outside options")


LABEL_GROUND_TRUTH = "ground_truth"
LABEL_TEXT_CONFUSED = "text_confused"
LABEL_VISUAL_CONFUSED = "visual_confused"


@dataclass(frozen=True)
class CorrespondenceItem:
    video_id: str
    summary: SummaryRecord
    label: str
    source_summary_id: str  # the ground-truth summary this item perturbs

    def __post_init__(self):
        if self.label not in (LABEL_GROUND_TRUTH, LABEL_TEXT_CONFUSED,
                              LABEL_VISUAL_CONFUSED):
            raise ValueError(f"bad label {self.label!r}")


# ---------------------------------------------------------------------------
# contexts and frames
# ---------------------------------------------------------------------------


def video_context(video: VideoRef) -> MediaContext:
    return MediaContext((VideoPart(video),))


def summary_context(summary: SummaryRecord, video: VideoRef | None = None) -> MediaContext:
    """The context a consumer of the summary sees: keyframes first, then
    text. A full-video summary is the video itself."""
    if summary.format is SummaryFormat.FULL_VIDEO:
        if video is None:
            raise ValueError("full-video summary needs its VideoRef")
        return video_context(video)
    parts: list = [ImagePart(f) for f in summary.keyframes]
    parts.append(TextPart(summary.text))
    return MediaContext(tuple(parts))


def resolve_frame(video: VideoRef, index: int,
                  extractor_template: str | None = None) -> str:
    """Path of a pre-extracted frame, running the extractor if needed."""
    if video.frame_dir is None:
        raise ValueError(f"video {video.id!r} has no frame_dir for image summaries")
    path = Path(video.frame_dir) / f"frame_{index:06d}.png"
    if not path.is_file() and extractor_template:
        cmd = extractor_template.format(
            video=video.video_path or "", index=index, out=str(path))
        subprocess.run(cmd, shell=True, check=False)
    return str(path)


def extract_json_array(text: str) -> str:
    """Models often wrap JSON in code fences or prose; cut to the array."""
    start = text.find("[")
    end = text.rfind("]")
    if start == -1 or end == -1 or end < start:
        return text
    return text[start:end + 1]


# ---------------------------------------------------------------------------
# captioning
# ---------------------------------------------------------------------------


def run_captioning(
    backend: Backend,
    video: VideoRef,
    keyword_backend: Backend | None = None,
    seed: int = 0,
) -> CaptionRecord:
    """Caption a video, then extract masked-scoring keywords from the
    caption. A refusal after retries skips the video (CaptionUnavailable)
    rather than failing the run."""
    kw_backend = keyword_backend or backend
    try:
        caption = backend.generate_text(
            video_context(video), load_prompt("captioning"), seed).text
        raw = kw_backend.generate_text(
            MediaContext((TextPart(caption),)), load_prompt("keywords"), seed).text
    except BackendUnavailable as exc:
        raise CaptionUnavailable(f"video {video.id!r}: {exc}") from exc
    keywords = parse_keywords(extract_json_array(raw))
    return CaptionRecord(
        video_id=video.id,
        text=caption,
        generator_model=backend.model_id,
        keywords=tuple(keywords),
    )


# ---------------------------------------------------------------------------
# summary construction
# ---------------------------------------------------------------------------

_PLACEHOLDER = "[KEYFRAME{}]"


def _parse_keyframe_response(raw: str) -> list[dict]:
    try:
        data = json.loads(extract_json_array(raw))
    except json.JSONDecodeError as exc:
        raise KeyframeParseError(f"not valid JSON: {exc}") from exc
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not all(
            isinstance(o, dict) and "timestamp" in o for o in data):
        raise KeyframeParseError("expected objects with a timestamp key")
    return data


def select_keyframes(
    backend: Backend,
    video: VideoRef,
    want: int,
    seed: int = 0,
    extractor_template: str | None = None,
) -> list[str]:
    """Ask the model for significant keyframes and resolve them to frame
    references. Returns up to `want` references in response order."""
    raw = backend.generate_text(
        video_context(video), load_prompt("keyframes"), seed).text
    entries = _parse_keyframe_response(raw)
    frames = []
    for entry in entries[:want]:
        index = parse_timecode(entry["timestamp"], video.fps)
        frames.append(resolve_frame(video, index, extractor_template))
    return frames


def build_summaries(
    backend: Backend,
    video: VideoRef,
    caption: CaptionRecord,
    formats: list[SummaryFormat] | set[SummaryFormat],
    seed: int = 0,
    image_token_cost: int = 258,
    extractor_template: str | None = None,
) -> list[SummaryRecord]:
    """Construct one summary per requested format.

    Image formats first pick keyframes, then generate text conditioned on
    them so the summary stays visually grounded; the text must reference
    the keyframes via [KEYFRAME1..n] placeholders (mismatch is a warning,
    the summary is retained). A refusal skips that format's cell.
    """
    order = [f for f in (SummaryFormat.TEXT_ONLY, SummaryFormat.ONE_IMAGE,
                         SummaryFormat.THREE_IMAGE, SummaryFormat.FULL_VIDEO)
             if f in set(formats)]
    out = []
    for fmt in order:
        try:
            record = _build_one_summary(
                backend, video, fmt, seed, image_token_cost, extractor_template)
        except BackendUnavailable as exc:
            warnings.warn(
                f"skipping {fmt.value} for video {video.id!r}: {exc}", VisilWarning)
            continue
        out.append(record)
    return out


def _build_one_summary(backend, video, fmt, seed, image_token_cost,
                       extractor_template) -> SummaryRecord:
    summary_id = f"{video.id}-{fmt.value}"

    if fmt is SummaryFormat.FULL_VIDEO:
        frame_count = round(video.fps * video.duration_s)
        if frame_count <= 0:
            raise CostUnavailable(
                f"video {video.id!r}: full-video cost needs a duration")
        record = SummaryRecord(
            summary_id=summary_id, video_id=video.id, format=fmt,
            token_cost=0)
        cost = estimate_token_cost(record, image_token_cost,
                                   frame_count=frame_count)
        return SummaryRecord(
            summary_id=summary_id, video_id=video.id, format=fmt,
            token_cost=cost)

    keyframes: list[str] = []
    if fmt in (SummaryFormat.ONE_IMAGE, SummaryFormat.THREE_IMAGE):
        keyframes = select_keyframes(
            backend, video, fmt.keyframe_count, seed, extractor_template)
        if len(keyframes) < fmt.keyframe_count:
            warnings.warn(
                f"video {video.id!r}: {len(keyframes)} keyframes parsed, "
                f"{fmt.keyframe_count} requested; degrading format", VisilWarning)
            if not keyframes:
                fmt = SummaryFormat.TEXT_ONLY
            else:
                fmt = SummaryFormat.ONE_IMAGE
                keyframes = keyframes[:1]
            summary_id = f"{video.id}-{fmt.value}"

    parts: list = [VideoPart(video)]
    parts.extend(ImagePart(f) for f in keyframes)
    text = backend.generate_text(
        MediaContext(tuple(parts)), load_prompt("summary"), seed).text.strip()

    missing = [i + 1 for i in range(len(keyframes))
               if _PLACEHOLDER.format(i + 1) not in text]
    if keyframes and missing:
        warnings.warn(
            f"summary {summary_id!r} does not reference keyframe "
            f"placeholders {missing}", VisilWarning)

    record = SummaryRecord(
        summary_id=summary_id, video_id=video.id, format=fmt,
        keyframes=tuple(keyframes), text=text, token_cost=0)
    return SummaryRecord(
        summary_id=summary_id, video_id=video.id, format=fmt,
        keyframes=tuple(keyframes), text=text,
        token_cost=estimate_token_cost(record, image_token_cost))


# ---------------------------------------------------------------------------
# VQA
# ---------------------------------------------------------------------------

_LETTERS = "ABCD"


def parse_vqa_letter(response: str, n_options: int) -> str | None:
    """Strict single-letter parse after stripping whitespace/punctuation."""
    s = response.strip().strip(string.punctuation + string.whitespace)
    if len(s) == 1 and s.upper() in _LETTERS[:n_options]:
        return s.upper()
    return None


def run_vqa(
    backend: Backend,
    item: VqaItem,
    summary: SummaryRecord,
    video: VideoRef | None = None,
    seed: int = 0,
) -> dict:
    """Answer one question given only the summary. An unparseable answer
    counts as incorrect and is flagged, never fatal."""
    prompt = vqa_prompt(summary.format, summary.text, item.question, item.options)
    raw = backend.generate_text(summary_context(summary, video), prompt, seed).text
    letter = parse_vqa_letter(raw, len(item.options))
    return {
        "video_id": item.video_id,
        "summary_id": summary.summary_id,
        "correct": letter == _LETTERS[item.answer_index],
        "raw_answer": raw,
        "anomaly": letter is None,
    }


# ---------------------------------------------------------------------------
# correspondence test
# ---------------------------------------------------------------------------


def make_distractors(
    backend: Backend,
    summary: SummaryRecord,
    other_summaries: list[SummaryRecord] | None = None,
    seed: int = 0,
) -> list[CorrespondenceItem]:
    """Ground truth plus adversarial variants of one summary.

    Text confusion asks the model for 3 minimally perturbed summaries and
    keeps the keyframes; visual confusion keeps the text and swaps in the
    same-position keyframes of the next video in the batch rotation
    (the first entry of other_summaries that has keyframes).
    """
    items = [CorrespondenceItem(summary.video_id, summary,
                                LABEL_GROUND_TRUTH, summary.summary_id)]

    raw = backend.generate_text(
        MediaContext((TextPart(summary.text),)), distractor_prompt(), seed).text
    try:
        variants = json.loads(extract_json_array(raw))
    except json.JSONDecodeError:
        variants = []
    variants = [v for v in variants if isinstance(v, str)] if isinstance(variants, list) else []
    if len(variants) < 3:
        warnings.warn(
            f"summary {summary.summary_id!r}: parsed {len(variants)} of 3 "
            "distractors", DistractorShortfall)
    for i, text in enumerate(variants[:3]):
        items.append(CorrespondenceItem(
            summary.video_id,
            SummaryRecord(
                summary_id=f"{summary.summary_id}-textconf{i}",
                video_id=summary.video_id, format=summary.format,
                keyframes=summary.keyframes, text=text,
                token_cost=summary.token_cost),
            LABEL_TEXT_CONFUSED, summary.summary_id))

    if summary.keyframes:
        donor = next((s for s in (other_summaries or []) if s.keyframes), None)
        if donor is None:
            warnings.warn(
                f"summary {summary.summary_id!r}: no other video with "
                "keyframes; skipping visual confusion", VisilWarning)
        else:
            swapped = tuple(donor.keyframes[i % len(donor.keyframes)]
                            for i in range(len(summary.keyframes)))
            items.append(CorrespondenceItem(
                summary.video_id,
                SummaryRecord(
                    summary_id=f"{summary.summary_id}-visconf",
                    video_id=summary.video_id, format=summary.format,
                    keyframes=swapped, text=summary.text,
                    token_cost=summary.token_cost),
                LABEL_VISUAL_CONFUSED, summary.summary_id))
    return items


_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_CONFIDENCE_RE = re.compile(r"\b([1-5])\b")


def run_correspondence(
    backend: Backend,
    video: VideoRef,
    items: list[CorrespondenceItem],
    seed: int = 0,
) -> tuple[list[dict], dict[tuple[str, str], float]]:
    """Judge whether each (possibly perturbed) summary matches its video.

    Returns per-item results and accuracy per (label, format) cell. An
    unparseable judgment is an anomaly counted incorrect.
    """
    prompt = load_prompt("correspondence")
    results = []
    for item in items:
        parts = (VideoPart(video),) + summary_context(item.summary, video).parts
        raw = backend.generate_text(MediaContext(parts), prompt, seed).text
        verdict = _YES_NO_RE.search(raw)
        confidence = _CONFIDENCE_RE.search(raw)
        judged_match = verdict is not None and verdict.group(1).lower() == "yes"
        expected = item.label == LABEL_GROUND_TRUTH
        results.append({
            "video_id": item.video_id,
            "summary_id": item.summary.summary_id,
            "label": item.label,
            "format": item.summary.format.value,
            "judged_match": judged_match,
            "confidence": int(confidence.group(1)) if confidence else None,
            "correct": (judged_match == expected) and verdict is not None,
            "anomaly": verdict is None,
        })

    cells: dict[tuple[str, str], list[bool]] = {}
    for r in results:
        cells.setdefault((r["label"], r["format"]), []).append(r["correct"])
    accuracy = {cell: sum(v) / len(v) for cell, v in cells.items()}
    return results, accuracy


# ---------------------------------------------------------------------------
# synthetic experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthResult:
    records: tuple  # ScoreRecords
    correctness: dict  # (video_id, summary_id) -> 0/1
    summaries: tuple[SummaryRecord, ...]


_DEFAULT_COVERAGE = {
    SummaryFormat.TEXT_ONLY: 0.2,
    SummaryFormat.ONE_IMAGE: 0.5,
    SummaryFormat.THREE_IMAGE: 0.8,
    SummaryFormat.FULL_VIDEO: 1.0,
}


def synthetic_experiment(
    world: ToyWorld,
    n_videos: int,
    formats: list[SummaryFormat] | None = None,
    coverage_by_format: dict[SummaryFormat, float] | None = None,
    seed: int = 0,
) -> SynthResult:
    """Desk-scale paired experiment: toy videos, summaries covering a
    seeded random fraction of each video's facts per format, analytic
    scores, and VQA correctness sampled as Bernoulli(p_hit) when the
    queried fact is covered and Bernoulli(p_miss) otherwise. Fully
    deterministic given the seed.
    """
    formats = list(formats) if formats else list(_DEFAULT_COVERAGE)
    coverage = dict(_DEFAULT_COVERAGE)
    if coverage_by_format:
        coverage.update(coverage_by_format)
    for fmt in formats:
        if not (0.0 <= coverage[fmt] <= 1.0):
            raise ValueError(f"coverage for {fmt.value} outside [0, 1]")

    rng = np.random.default_rng(seed)
    backend = SyntheticBackend(world)
    cfg = ScoringConfig(runs=1, seed=seed)
    m = world.facts_per_video

    records = []
    correctness: dict[tuple[str, str], int] = {}
    summaries = []
    for v in range(n_videos):
        video = VideoRef(id=f"toy{v:04d}", frame_dir=f"toy{v:04d}/frames",
                         fps=30.0, duration_s=10.0)
        facts = [f"v{v:04d}w{j:02d}" for j in range(m)]
        backend.register_video(video.id, facts)
        caption = " ".join(facts)
        masked = build_masked_caption(caption, facts[:20])
        v_ctx = video_context(video)

        for fmt in formats:
            n_covered = round(coverage[fmt] * m)
            chosen = sorted(rng.choice(m, size=n_covered, replace=False).tolist())
            covered = [facts[i] for i in chosen]
            summary = _toy_summary(backend, video, fmt, covered)
            summaries.append(summary)

            record = visil_score(
                backend, v_ctx, summary_context(summary, video), masked, cfg,
                video_id=video.id, summary_id=summary.summary_id)
            records.append(record)

            queried = facts[int(rng.integers(m))]
            p = world.p_hit if (queried in covered
                                or fmt is SummaryFormat.FULL_VIDEO) else world.p_miss
            correctness[(video.id, summary.summary_id)] = int(rng.random() < p)
    return SynthResult(tuple(records), correctness, tuple(summaries))


def _toy_summary(backend: SyntheticBackend, video: VideoRef,
                 fmt: SummaryFormat, covered: list[str]) -> SummaryRecord:
    summary_id = f"{video.id}-{fmt.value}"
    n_frames = fmt.keyframe_count
    frame_facts, text_facts = covered[:n_frames], covered[n_frames:]
    keyframes = []
    for i in range(n_frames):
        ref = f"{video.frame_dir}/frame_{i:06d}.png"
        backend.register_frame(ref, [frame_facts[i]] if i < len(frame_facts) else [])
        keyframes.append(ref)
    text = "" if fmt is SummaryFormat.FULL_VIDEO else (" ".join(text_facts) or "none")
    record = SummaryRecord(
        summary_id=summary_id, video_id=video.id, format=fmt,
        keyframes=tuple(keyframes), text=text, token_cost=0)
    return SummaryRecord(
        summary_id=summary_id, video_id=video.id, format=fmt,
        keyframes=tuple(keyframes), text=text,
        token_cost=estimate_token_cost(
            record, frame_count=round(video.fps * video.duration_s)))
