"""Domain types shared by all modules, token-cost estimation, and record
(de)serialization.

All log-probabilities are natural logarithms (nats). Scores produced by
one evaluator model are not comparable to scores from another; every
ScoreRecord therefore carries the evaluator model id and downstream
pooling checks it.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

from .errors import CostUnavailable, ParseError

# Vision-token budget per image when the backend reports no usage metadata.
# Backend-specific; override via config.
DEFAULT_IMAGE_TOKEN_COST = 258


class SummaryFormat(str, enum.Enum):
    TEXT_ONLY = "text_only"
    ONE_IMAGE = "one_image"
    THREE_IMAGE = "three_image"
    FULL_VIDEO = "full_video"

    @property
    def keyframe_count(self) -> int:
        return {self.TEXT_ONLY: 0, self.ONE_IMAGE: 1,
                self.THREE_IMAGE: 3, self.FULL_VIDEO: 0}[self]


@dataclass(frozen=True)
class VideoRef:
    """A source video. Carries the visual stream only; frame extraction is
    delegated, so either a directory of pre-extracted frames or a raw media
    path must be present."""

    id: str
    frame_dir: str | None = None
    video_path: str | None = None
    fps: float = 30.0
    duration_s: float = 0.0
    dataset_tag: str = ""

    def __post_init__(self):
        if self.frame_dir is None and self.video_path is None:
            raise ValueError(f"video {self.id!r}: need frame_dir or video_path")
        if self.fps <= 0:
            raise ValueError(f"video {self.id!r}: fps must be positive")
        if self.duration_s < 0:
            raise ValueError(f"video {self.id!r}: duration_s must be >= 0")


@dataclass(frozen=True)
class SummaryRecord:
    """A candidate summary: up to 3 keyframes plus text, or the full video."""

    summary_id: str
    video_id: str
    format: SummaryFormat
    keyframes: tuple[str, ...] = ()
    text: str = ""
    token_cost: int = 0
    provenance: str = "generated"  # generated | manual

    def __post_init__(self):
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        if len(self.keyframes) > 3:
            raise ValueError(f"summary {self.summary_id!r}: more than 3 keyframes")
        if self.token_cost < 0:
            raise ValueError(f"summary {self.summary_id!r}: negative token_cost")
        fmt, n = self.format, len(self.keyframes)
        if fmt is SummaryFormat.TEXT_ONLY and (n != 0 or not self.text):
            raise ValueError(f"summary {self.summary_id!r}: text_only needs text and no keyframes")
        if fmt is SummaryFormat.ONE_IMAGE and n != 1:
            raise ValueError(f"summary {self.summary_id!r}: one_image needs exactly 1 keyframe")
        if fmt is SummaryFormat.THREE_IMAGE and n != 3:
            raise ValueError(f"summary {self.summary_id!r}: three_image needs exactly 3 keyframes")
        if fmt is SummaryFormat.FULL_VIDEO and n != 0:
            raise ValueError(f"summary {self.summary_id!r}: full_video carries no keyframes")
        if self.provenance not in ("generated", "manual"):
            raise ValueError(f"summary {self.summary_id!r}: bad provenance {self.provenance!r}")


# --- media contexts --------------------------------------------------------
#
# A MediaContext is the ordered payload handed to a model backend: the raw
# video, a summary (keyframes then text), or any prompt context. Part order
# is preserved end to end.


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    frame: str  # frame reference (path or opaque id)


@dataclass(frozen=True)
class VideoPart:
    video: VideoRef


Part = Union[TextPart, ImagePart, VideoPart]


@dataclass(frozen=True)
class MediaContext:
    parts: tuple[Part, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("MediaContext needs at least one part")

    @property
    def video_ids(self) -> tuple[str, ...]:
        return tuple(p.video.id for p in self.parts if isinstance(p, VideoPart))

    @property
    def image_refs(self) -> tuple[str, ...]:
        return tuple(p.frame for p in self.parts if isinstance(p, ImagePart))

    @property
    def text(self) -> str:
        return " ".join(p.text for p in self.parts if isinstance(p, TextPart))


EXCLUDED_KEYWORD = "video"
MAX_KEYWORDS = 20


@dataclass(frozen=True)
class CaptionRecord:
    """A detailed caption for a video plus its extracted keywords.

    Keywords are single lowercase words, deduplicated, at most 20, never
    the word "video".
    """

    video_id: str
    text: str
    generator_model: str
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if len(self.keywords) > MAX_KEYWORDS:
            raise ValueError(f"caption {self.video_id!r}: more than {MAX_KEYWORDS} keywords")
        if len(set(self.keywords)) != len(self.keywords):
            raise ValueError(f"caption {self.video_id!r}: duplicate keywords")
        for kw in self.keywords:
            if kw == EXCLUDED_KEYWORD:
                raise ValueError(f"caption {self.video_id!r}: excluded keyword {kw!r}")
            if not kw or kw != kw.lower() or any(c.isspace() for c in kw):
                raise ValueError(f"caption {self.video_id!r}: bad keyword {kw!r}")


@dataclass(frozen=True)
class ScoreRecord:
    """One information-loss evaluation of a summary against its video.

    visil = logp_c_given_v - logp_c_given_s, in nats; lower is better.
    Per-keyword matrices are [runs x n_keywords] natural-log probabilities,
    floored at ln(epsilon_floor) and capped at 0.
    """

    video_id: str
    summary_id: str
    evaluator_model: str
    runs: int
    seed: int
    epsilon_floor: float
    per_keyword_logp_video: tuple[tuple[float, ...], ...]
    per_keyword_logp_summary: tuple[tuple[float, ...], ...]
    logp_c_given_v: float
    logp_c_given_s: float
    visil: float
    excluded_keywords: int = 0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "per_keyword_logp_video",
                           tuple(tuple(row) for row in self.per_keyword_logp_video))
        object.__setattr__(self, "per_keyword_logp_summary",
                           tuple(tuple(row) for row in self.per_keyword_logp_summary))
        object.__setattr__(self, "flags", tuple(self.flags))
        _validate_score_record(self)

    @property
    def n_keywords(self) -> int:
        return len(self.per_keyword_logp_video[0]) if self.per_keyword_logp_video else 0

    @property
    def visil_per_keyword(self) -> float:
        """Length-normalized score for cross-video dashboards."""
        n = self.n_keywords
        return self.visil / n if n else 0.0


def _validate_score_record(rec: ScoreRecord) -> None:
    if rec.runs < 1:
        raise ValueError("runs must be >= 1")
    if not (0.0 < rec.epsilon_floor < 1.0):
        raise ValueError("epsilon_floor must be in (0, 1)")
    v, s = rec.per_keyword_logp_video, rec.per_keyword_logp_summary
    if len(v) != rec.runs or len(s) != rec.runs:
        raise ValueError("per-keyword matrices must have one row per run")
    if any(len(row) != len(m[0]) for m in (v, s) for row in m):
        raise ValueError("ragged per-keyword matrix")
    if len(v[0]) != len(s[0]):
        raise ValueError("per-keyword matrices differ in shape")
    floor = math.log(rec.epsilon_floor)
    for m in (v, s):
        for row in m:
            for lp in row:
                if lp > 0.0 or lp < floor - 1e-12:
                    raise ValueError(f"log-probability {lp} outside [ln(eps), 0]")
    for total in (rec.logp_c_given_v, rec.logp_c_given_s):
        if total > 1e-12:
            raise ValueError(f"total log-probability {total} > 0")
    if rec.visil != rec.logp_c_given_v - rec.logp_c_given_s:
        raise ValueError("visil != logp_c_given_v - logp_c_given_s")
    if rec.excluded_keywords < 0:
        raise ValueError("excluded_keywords must be >= 0")


def estimate_token_cost(
    summary: SummaryRecord,
    image_token_cost: int = DEFAULT_IMAGE_TOKEN_COST,
    reported: int | None = None,
    frame_count: int | None = None,
) -> int:
    """Processing-load proxy for a summary, in tokens.

    Backend-reported usage wins when present. Otherwise the estimate is
    word-count(text) + image_token_cost per keyframe; a full-video summary
    additionally needs a frame inventory (frame_count) to stand in for its
    keyframes.
    """
    if image_token_cost <= 0:
        raise ValueError("image_token_cost must be positive")
    if reported is not None:
        if reported < 0:
            raise ValueError("reported token count must be >= 0")
        return reported
    words = len(summary.text.split())
    if summary.format is SummaryFormat.FULL_VIDEO:
        if frame_count is None:
            raise CostUnavailable(
                f"summary {summary.summary_id!r}: full video without reported "
                "usage or a frame inventory")
        return words + image_token_cost * frame_count
    return words + image_token_cost * len(summary.keyframes)


# --- line-delimited JSON score store ---------------------------------------

_SCORE_FIELDS = (
    "video_id", "summary_id", "evaluator_model", "runs", "seed",
    "epsilon_floor", "per_keyword_logp_video", "per_keyword_logp_summary",
    "logp_c_given_v", "logp_c_given_s", "visil", "excluded_keywords", "flags",
)


def score_record_to_dict(rec: ScoreRecord) -> dict:
    return {
        "video_id": rec.video_id,
        "summary_id": rec.summary_id,
        "evaluator_model": rec.evaluator_model,
        "runs": rec.runs,
        "seed": rec.seed,
        "epsilon_floor": rec.epsilon_floor,
        "per_keyword_logp_video": [list(r) for r in rec.per_keyword_logp_video],
        "per_keyword_logp_summary": [list(r) for r in rec.per_keyword_logp_summary],
        "logp_c_given_v": rec.logp_c_given_v,
        "logp_c_given_s": rec.logp_c_given_s,
        "visil": rec.visil,
        "excluded_keywords": rec.excluded_keywords,
        "flags": list(rec.flags),
    }


def serialize_records(records: Iterable[ScoreRecord]) -> str:
    """One JSON object per line; empty input gives the empty string."""
    lines = [json.dumps(score_record_to_dict(r), ensure_ascii=False, allow_nan=False)
             for r in records]
    return "".join(line + "\n" for line in lines)


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} in record")


def parse_records(text: str) -> list[ScoreRecord]:
    """Inverse of serialize_records. Rejects unknown fields and any line
    that violates a ScoreRecord invariant; errors carry the line number."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line, parse_constant=_reject_constant)
        except (json.JSONDecodeError, ValueError) as exc:
            raise ParseError(f"invalid JSON: {exc}", lineno) from exc
        if not isinstance(obj, dict):
            raise ParseError("record line is not a JSON object", lineno)
        unknown = set(obj) - set(_SCORE_FIELDS)
        if unknown:
            raise ParseError(f"unknown fields {sorted(unknown)}", lineno)
        missing = set(_SCORE_FIELDS) - set(obj)
        if missing:
            raise ParseError(f"missing fields {sorted(missing)}", lineno)
        try:
            rec = ScoreRecord(
                video_id=obj["video_id"],
                summary_id=obj["summary_id"],
                evaluator_model=obj["evaluator_model"],
                runs=obj["runs"],
                seed=obj["seed"],
                epsilon_floor=obj["epsilon_floor"],
                per_keyword_logp_video=tuple(tuple(r) for r in obj["per_keyword_logp_video"]),
                per_keyword_logp_summary=tuple(tuple(r) for r in obj["per_keyword_logp_summary"]),
                logp_c_given_v=obj["logp_c_given_v"],
                logp_c_given_s=obj["logp_c_given_s"],
                visil=obj["visil"],
                excluded_keywords=obj["excluded_keywords"],
                flags=tuple(obj["flags"]),
            )
        except (ValueError, TypeError) as exc:
            raise ParseError(str(exc), lineno) from exc
        records.append(rec)
    return records


def write_records(path: str | Path, records: Iterable[ScoreRecord]) -> None:
    Path(path).write_text(serialize_records(records), encoding="utf-8")


def read_records(path: str | Path) -> list[ScoreRecord]:
    return parse_records(Path(path).read_text(encoding="utf-8"))


# --- dataset manifest -------------------------------------------------------


def video_ref_to_dict(video: VideoRef) -> dict:
    return {
        "id": video.id,
        "frame_dir": video.frame_dir,
        "video_path": video.video_path,
        "fps": video.fps,
        "duration_s": video.duration_s,
        "dataset_tag": video.dataset_tag,
    }


def video_ref_from_dict(obj: dict) -> VideoRef:
    return VideoRef(
        id=obj["id"],
        frame_dir=obj.get("frame_dir"),
        video_path=obj.get("video_path"),
        fps=obj.get("fps", 30.0),
        duration_s=obj.get("duration_s", 0.0),
        dataset_tag=obj.get("dataset_tag", ""),
    )


def load_manifest(path: str | Path) -> list[VideoRef]:
    """Dataset manifest: a JSON array of video objects."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ParseError(f"manifest {path}: expected a JSON array")
    return [video_ref_from_dict(obj) for obj in data]


def dump_manifest(videos: Iterable[VideoRef]) -> str:
    return json.dumps([video_ref_to_dict(v) for v in videos], indent=2,
                      ensure_ascii=False) + "\n"


# --- summary / caption stores ----------------------------------------------


def summary_to_dict(s: SummaryRecord) -> dict:
    return {
        "summary_id": s.summary_id,
        "video_id": s.video_id,
        "format": s.format.value,
        "keyframes": list(s.keyframes),
        "text": s.text,
        "token_cost": s.token_cost,
        "provenance": s.provenance,
    }


def summary_from_dict(obj: dict) -> SummaryRecord:
    return SummaryRecord(
        summary_id=obj["summary_id"],
        video_id=obj["video_id"],
        format=SummaryFormat(obj["format"]),
        keyframes=tuple(obj.get("keyframes", ())),
        text=obj.get("text", ""),
        token_cost=obj.get("token_cost", 0),
        provenance=obj.get("provenance", "generated"),
    )


def caption_to_dict(c: CaptionRecord) -> dict:
    return {
        "video_id": c.video_id,
        "text": c.text,
        "generator_model": c.generator_model,
        "keywords": list(c.keywords),
    }


def caption_from_dict(obj: dict) -> CaptionRecord:
    return CaptionRecord(
        video_id=obj["video_id"],
        text=obj["text"],
        generator_model=obj.get("generator_model", ""),
        keywords=tuple(obj.get("keywords", ())),
    )


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}", lineno) from exc
    return out


def write_jsonl(path: str | Path, objs: Iterable[dict]) -> None:
    text = "".join(json.dumps(o, ensure_ascii=False, allow_nan=False) + "\n"
                   for o in objs)
    Path(path).write_text(text, encoding="utf-8")
