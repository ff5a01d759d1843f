"""Command-line surface: configuration, persistence, and reproducible runs.

Every subcommand reads/writes plain JSON artifacts under the store
directory, appends one line to the run manifest, and exits 0 on success,
1 on runtime failure (machine-readable error JSON on stderr), or 2 on
usage errors. Re-running with identical config on the replay or synthetic
backend reproduces every store byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

from . import core, harness, selection, stats
from .backend import (
    ApiBackend,
    Backend,
    HttpTransport,
    ModelRoles,
    ReplayTransport,
    SyntheticBackend,
    ToyWorld,
    canonical_json,
    rate_limited_dispatch,
)
from .core import SummaryFormat, SummaryRecord
from .errors import VisilError
from .masking import build_masked_caption, parse_keywords
from .prompts import load_prompt
from .scoring import ScoringConfig, visil_score

USAGE_EXIT = 2
FAILURE_EXIT = 1

ENV_PREFIX = "VISIL_"

# merged-config fields, their types, and defaults; flags > file > env
CONFIG_FIELDS: dict[str, tuple[type, object]] = {
    "backend": (str, "synthetic"),
    "endpoint": (str, None),
    "api_key": (str, None),
    "captioner": (str, "caption-model"),
    "keyword_extractor": (str, "keyword-model"),
    "summarizer": (str, "summary-model"),
    "evaluator": (str, "eval-model"),
    "answerer": (str, "answer-model"),
    "allow_evaluator_overlap": (bool, False),
    "runs": (int, 3),
    "seed": (int, 0),
    "epsilon_floor": (float, 1e-6),
    "top_k": (int, 20),
    "temperature": (float, 0.0),
    "jobs": (int, 1),
    "requests_per_minute": (int, None),
    "fixtures_dir": (str, None),
    "store_dir": (str, "store"),
    "record": (bool, False),
    "image_token_cost": (int, 258),
    "facts_per_video": (int, 10),
    "p_hit": (float, 0.9),
    "p_miss": (float, 0.1),
    "extractor_template": (str, None),
}


def _coerce(name: str, value, to_type: type):
    if value is None or isinstance(value, to_type):
        return value
    if to_type is bool:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    return to_type(value)


def effective_config(flags: dict, file_cfg: dict, env: dict) -> dict:
    """Merge configuration sources; flags win over the file, the file wins
    over environment variables (VISIL_<FIELD>), and defaults fill the rest.
    Total: every field resolves to exactly one value."""
    merged = {}
    for name, (to_type, default) in CONFIG_FIELDS.items():
        value = default
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            value = env[env_key]
        if name in file_cfg and file_cfg[name] is not None:
            value = file_cfg[name]
        if name in flags and flags[name] is not None:
            value = flags[name]
        merged[name] = _coerce(name, value, to_type)
    return merged


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def roles(self) -> ModelRoles:
        return ModelRoles(
            captioner=self.values["captioner"],
            keyword_extractor=self.values["keyword_extractor"],
            summarizer=self.values["summarizer"],
            evaluator=self.values["evaluator"],
            answerer=self.values["answerer"],
            allow_evaluator_overlap=self.values["allow_evaluator_overlap"],
        )

    @property
    def scoring(self) -> ScoringConfig:
        return ScoringConfig(
            runs=self.values["runs"], seed=self.values["seed"],
            epsilon_floor=self.values["epsilon_floor"],
            top_k=self.values["top_k"])

    @property
    def store_path(self) -> Path:
        return Path(self.values["store_dir"])

    def config_hash(self) -> str:
        public = {k: v for k, v in self.values.items() if k != "api_key"}
        return hashlib.sha256(canonical_json(public).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# backend construction
# ---------------------------------------------------------------------------


class BackendPool:
    """One backend object per model role, sharing transport and, for the
    synthetic backend, the fact registries."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.roles = cfg.roles  # validates evaluator separation
        kind = cfg.backend
        if kind == "synthetic":
            world = ToyWorld(facts_per_video=cfg.facts_per_video,
                             p_hit=cfg.p_hit, p_miss=cfg.p_miss, seed=cfg.seed)
            self._synthetic = SyntheticBackend(world, model_id=self.roles.evaluator)
            self._transport = None
        elif kind in ("replay", "api"):
            self._synthetic = None
            self._transport = self._build_transport(kind)
        else:
            raise VisilError(f"unknown backend kind {kind!r}")

    def _build_transport(self, kind: str):
        cfg = self.cfg
        if kind == "api" or cfg.record:
            if not cfg.endpoint:
                raise VisilError("api backend needs --endpoint")
            inner = HttpTransport(cfg.endpoint, api_key=cfg.api_key)
        else:
            inner = None
        if kind == "replay" or cfg.record:
            if not cfg.fixtures_dir:
                raise VisilError("replay/record needs --fixtures-dir")
            mode = "record" if cfg.record else "replay"
            return ReplayTransport(cfg.fixtures_dir, mode=mode, inner=inner)
        return inner

    def for_role(self, model_id: str) -> Backend:
        if self._synthetic is not None:
            view = copy.copy(self._synthetic)
            view._model_id = model_id
            return view
        return ApiBackend(
            model_id=model_id,
            transport=self._transport,
            temperature=self.cfg.temperature,
            top_k=self.cfg.top_k,
            epsilon_floor=self.cfg.epsilon_floor,
        )

    @property
    def synthetic(self) -> SyntheticBackend | None:
        return self._synthetic

    @property
    def captioner(self) -> Backend:
        return self.for_role(self.roles.captioner)

    @property
    def keyword_extractor(self) -> Backend:
        return self.for_role(self.roles.keyword_extractor)

    @property
    def summarizer(self) -> Backend:
        return self.for_role(self.roles.summarizer)

    @property
    def evaluator(self) -> Backend:
        return self.for_role(self.roles.evaluator)

    @property
    def answerer(self) -> Backend:
        return self.for_role(self.roles.answerer)


# ---------------------------------------------------------------------------
# persistence helpers
# ---------------------------------------------------------------------------


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def append_manifest(cfg: RunConfig, command: str) -> None:
    entry = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "roles": {k: cfg.values[k] for k in
                  ("captioner", "keyword_extractor", "summarizer",
                   "evaluator", "answerer")},
        "seed": cfg.seed,
        "jobs": cfg.jobs,
    }
    path = cfg.store_path / "run_manifest.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


def _dispatch(cfg: RunConfig, tasks):
    results = rate_limited_dispatch(
        tasks, max_concurrent=cfg.jobs,
        requests_per_minute=cfg.requests_per_minute)
    ok = []
    for i, res in enumerate(results):
        if isinstance(res, Exception):
            warnings.warn(f"item {i} failed: {res}")
        else:
            ok.append(res)
    return ok


def _load_summaries(path: str) -> list[SummaryRecord]:
    return [core.summary_from_dict(o) for o in core.read_jsonl(path)]


def _load_captions(path: str) -> dict[str, core.CaptionRecord]:
    return {c.video_id: c for c in
            (core.caption_from_dict(o) for o in core.read_jsonl(path))}


def _load_vqa_items(path: str) -> list[harness.VqaItem]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [harness.VqaItem(
        video_id=o["video_id"], question=o["question"],
        options=tuple(o["options"]), answer_index=o["answer_index"])
        for o in data]


def _register_manifest_videos(pool: BackendPool, videos) -> None:
    # the synthetic backend derives each video's facts from its id so the
    # toy pipeline works over arbitrary manifests
    if pool.synthetic is None:
        return
    m = pool.synthetic.world.facts_per_video
    for video in videos:
        pool.synthetic.register_video(
            video.id, [f"{video.id}w{j:02d}" for j in range(m)])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_caption(cfg: RunConfig, args) -> int:
    videos = core.load_manifest(args.manifest)
    pool = BackendPool(cfg)
    _register_manifest_videos(pool, videos)
    captioner, kw = pool.captioner, pool.keyword_extractor
    tasks = [lambda v=v: harness.run_captioning(captioner, v, kw, seed=cfg.seed)
             for v in videos]
    captions = _dispatch(cfg, tasks)
    write_atomic(cfg.store_path / "captions.jsonl",
                 "".join(json.dumps(core.caption_to_dict(c), ensure_ascii=False) + "\n"
                         for c in captions))
    print(f"captioned {len(captions)}/{len(videos)} videos")
    return 0


def cmd_keywords(cfg: RunConfig, args) -> int:
    captions = [core.caption_from_dict(o) for o in core.read_jsonl(args.captions)]
    pool = BackendPool(cfg)
    kw_backend = pool.keyword_extractor
    out = []
    for cap in captions:
        raw = kw_backend.generate_text(
            core.MediaContext((core.TextPart(cap.text),)),
            load_prompt("keywords"), cfg.seed).text
        keywords = parse_keywords(harness.extract_json_array(raw))
        out.append(core.CaptionRecord(
            video_id=cap.video_id, text=cap.text,
            generator_model=cap.generator_model or kw_backend.model_id,
            keywords=tuple(keywords)))
    write_atomic(cfg.store_path / "captions.jsonl",
                 "".join(json.dumps(core.caption_to_dict(c), ensure_ascii=False) + "\n"
                         for c in out))
    print(f"extracted keywords for {len(out)} captions")
    return 0


def _parse_formats(value: str) -> list[SummaryFormat]:
    return [SummaryFormat(tok.strip()) for tok in value.split(",") if tok.strip()]


def cmd_summarize(cfg: RunConfig, args) -> int:
    videos = core.load_manifest(args.manifest)
    captions = _load_captions(args.captions)
    formats = _parse_formats(args.formats)
    pool = BackendPool(cfg)
    _register_manifest_videos(pool, videos)
    summarizer = pool.summarizer

    def build(video):
        caption = captions.get(video.id)
        if caption is None:
            raise VisilError(f"no caption for video {video.id!r}")
        return harness.build_summaries(
            summarizer, video, caption, formats, seed=cfg.seed,
            image_token_cost=cfg.image_token_cost,
            extractor_template=cfg.extractor_template)

    grouped = _dispatch(cfg, [lambda v=v: build(v) for v in videos])
    summaries = [s for group in grouped for s in group]
    write_atomic(cfg.store_path / "summaries.jsonl",
                 "".join(json.dumps(core.summary_to_dict(s), ensure_ascii=False) + "\n"
                         for s in summaries))
    print(f"built {len(summaries)} summaries for {len(grouped)} videos")
    return 0


def cmd_score(cfg: RunConfig, args) -> int:
    videos = {v.id: v for v in core.load_manifest(args.manifest)}
    captions = _load_captions(args.captions)
    summaries = _load_summaries(args.summaries)
    pool = BackendPool(cfg)
    _register_manifest_videos(pool, videos.values())
    evaluator = pool.evaluator
    scoring = cfg.scoring

    masked_by_video = {}
    for vid, cap in captions.items():
        masked_by_video[vid] = build_masked_caption(cap.text, list(cap.keywords))

    def score(summary: SummaryRecord):
        video = videos.get(summary.video_id)
        masked = masked_by_video.get(summary.video_id)
        if video is None or masked is None:
            raise VisilError(
                f"summary {summary.summary_id!r}: missing video or caption")
        return visil_score(
            evaluator,
            harness.video_context(video),
            harness.summary_context(summary, video),
            masked, scoring,
            video_id=summary.video_id, summary_id=summary.summary_id)

    records = _dispatch(cfg, [lambda s=s: score(s) for s in summaries])
    write_atomic(cfg.store_path / "scores.jsonl", core.serialize_records(records))
    print(f"scored {len(records)}/{len(summaries)} summaries")
    return 0


def cmd_vqa(cfg: RunConfig, args) -> int:
    items = _load_vqa_items(args.items)
    summaries = _load_summaries(args.summaries)
    videos = ({v.id: v for v in core.load_manifest(args.manifest)}
              if args.manifest else {})
    pool = BackendPool(cfg)
    _register_manifest_videos(pool, videos.values())
    answerer = pool.answerer

    by_video: dict[str, list[SummaryRecord]] = {}
    for s in summaries:
        by_video.setdefault(s.video_id, []).append(s)

    pairs = [(item, summary)
             for item in items
             for summary in by_video.get(item.video_id, [])]
    tasks = [lambda it=it, s=s: harness.run_vqa(
        answerer, it, s, videos.get(s.video_id), seed=cfg.seed)
        for it, s in pairs]
    results = _dispatch(cfg, tasks)
    write_atomic(cfg.store_path / "vqa.jsonl",
                 "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in results))
    n_correct = sum(r["correct"] for r in results)
    print(f"vqa: {n_correct}/{len(results)} correct")
    return 0


def cmd_correspond(cfg: RunConfig, args) -> int:
    videos = {v.id: v for v in core.load_manifest(args.manifest)}
    summaries = _load_summaries(args.summaries)
    pool = BackendPool(cfg)
    _register_manifest_videos(pool, videos.values())
    generator, judge = pool.summarizer, pool.answerer

    all_results = []
    accuracy: dict[str, float] = {}
    cells: dict[tuple[str, str], list[bool]] = {}
    for i, summary in enumerate(summaries):
        video = videos.get(summary.video_id)
        if video is None:
            warnings.warn(f"summary {summary.summary_id!r}: no video in manifest")
            continue
        # deterministic rotation: donors are the following summaries in file order
        others = summaries[i + 1:] + summaries[:i]
        others = [s for s in others if s.video_id != summary.video_id]
        items = harness.make_distractors(generator, summary, others, seed=cfg.seed)
        results, _ = harness.run_correspondence(judge, video, items, seed=cfg.seed)
        all_results.extend(results)
        for r in results:
            cells.setdefault((r["label"], r["format"]), []).append(r["correct"])
    accuracy = {f"{label}/{fmt}": sum(v) / len(v)
                for (label, fmt), v in sorted(cells.items())}
    write_atomic(cfg.store_path / "correspondence.jsonl",
                 "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in all_results))
    write_atomic(cfg.store_path / "correspondence_accuracy.json",
                 json.dumps(accuracy, indent=2) + "\n")
    print(json.dumps(accuracy, indent=2))
    return 0


def _parse_alphas(value: str) -> list[float]:
    alphas = [float(tok) for tok in value.split(",") if tok.strip()]
    if not alphas:
        raise VisilError("no alpha values given")
    return sorted(alphas)


def cmd_select(cfg: RunConfig, args) -> int:
    records = core.read_records(args.scores)
    summaries = {s.summary_id: s for s in _load_summaries(args.summaries)}
    alphas = _parse_alphas(args.alphas)

    vqa_accuracy: dict[str, tuple[int, int]] = {}
    if args.vqa:
        for row in core.read_jsonl(args.vqa):
            hit, n = vqa_accuracy.get(row["summary_id"], (0, 0))
            vqa_accuracy[row["summary_id"]] = (hit + int(row["correct"]), n + 1)

    by_video: dict[str, list[selection.CandidatePoint]] = {}
    for rec in records:
        summary = summaries.get(rec.summary_id)
        if summary is None:
            warnings.warn(f"score for unknown summary {rec.summary_id!r}")
            continue
        by_video.setdefault(rec.video_id, []).append(
            selection.CandidatePoint(rec.summary_id, rec.visil, summary.token_cost))

    def annotate(point: selection.CandidatePoint) -> dict:
        obj = {"summary_id": point.summary_id, "visil": point.visil,
               "token_cost": point.token_cost}
        if point.summary_id in vqa_accuracy:
            hit, n = vqa_accuracy[point.summary_id]
            obj["vqa_accuracy"] = hit / n
        return obj

    frontier_out = {}
    selection_out = []
    plot_lines = []
    for video_id in sorted(by_video):
        candidates = by_video[video_id]
        frontier = selection.pareto_frontier(candidates)
        frontier_out[video_id] = [annotate(p) for p in frontier]
        plot_lines.extend(f"{p.token_cost} {p.visil}" for p in frontier)
        for alpha, chosen in selection.alpha_sweep(candidates, alphas):
            selection_out.append({"alpha": alpha, "video_id": video_id,
                                  **annotate(chosen)})

    write_atomic(cfg.store_path / "frontier.json",
                 json.dumps(frontier_out, indent=2) + "\n")
    write_atomic(cfg.store_path / "frontier.dat",
                 "".join(line + "\n" for line in plot_lines))
    write_atomic(cfg.store_path / "selection.json",
                 json.dumps(selection_out, indent=2) + "\n")
    n_points = sum(len(pts) for pts in frontier_out.values())
    print(f"frontier: {n_points} points over {len(frontier_out)} videos; "
          f"{len(selection_out)} selections across {len(alphas)} alphas")
    return 0


def _load_correctness(path: str) -> dict[tuple[str, str], int]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {(o["video_id"], o["summary_id"]): int(o["correct"]) for o in data}


def cmd_stats(cfg: RunConfig, args) -> int:
    records = core.read_records(args.scores)
    correctness = _load_correctness(args.correctness)
    sample, dropped = stats.pool_records(records, correctness, force=args.force)
    if args.trim_extremes:
        sample = stats.trim_extremes(sample)
    report = stats.analyze(sample, n_shuffles=args.n_shuffles, seed=cfg.seed)

    write_atomic(cfg.store_path / "report.json",
                 json.dumps(report.to_dict(), indent=2) + "\n")
    table = _report_table(sample.evaluator_model, report)
    print(table)
    if dropped:
        print(f"(dropped {dropped} records without correctness labels)")
    return 0


def _report_table(dataset: str, report: stats.StatReport) -> str:
    headers = ("Dataset", "Sample Size", "Pearson's r", "p-value")
    row = (dataset or "-", str(report.n), f"{report.pearson_r:.3f}",
           f"{report.perm_p:.4g}")
    widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
    fmt_row = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt_row.format(*headers), fmt_row.format(*row)]
    lines.append(f"logistic: beta1={report.beta1:.4f} (se={report.se1:.4f}, "
                 f"Wald p={report.wald_p:.4g}, converged={report.converged})")
    return "\n".join(lines)


def _parse_coverage(value: str) -> dict[SummaryFormat, float]:
    coverage = {}
    for tok in value.split(","):
        if not tok.strip():
            continue
        name, _, value = tok.partition("=")
        coverage[SummaryFormat(name.strip())] = float(value)
    return coverage


def cmd_synth(cfg: RunConfig, args) -> int:
    world = ToyWorld(facts_per_video=cfg.facts_per_video,
                     p_hit=cfg.p_hit, p_miss=cfg.p_miss, seed=cfg.seed)
    coverage = _parse_coverage(args.coverage) if args.coverage else None
    formats = _parse_formats(args.formats) if args.formats else None
    result = harness.synthetic_experiment(
        world, n_videos=args.videos, formats=formats,
        coverage_by_format=coverage, seed=cfg.seed)

    write_atomic(cfg.store_path / "scores.jsonl",
                 core.serialize_records(list(result.records)))
    write_atomic(cfg.store_path / "summaries.jsonl",
                 "".join(json.dumps(core.summary_to_dict(s), ensure_ascii=False) + "\n"
                         for s in result.summaries))
    labels = [{"video_id": v, "summary_id": s, "correct": c}
              for (v, s), c in result.correctness.items()]
    write_atomic(cfg.store_path / "correctness.json",
                 json.dumps(labels, indent=2) + "\n")
    print(f"synthesized {len(result.records)} scored summaries "
          f"over {args.videos} toy videos")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--backend", choices=("api", "replay", "synthetic"))
    parser.add_argument("--endpoint")
    parser.add_argument("--captioner")
    parser.add_argument("--keyword-extractor", dest="keyword_extractor")
    parser.add_argument("--summarizer")
    parser.add_argument("--evaluator")
    parser.add_argument("--answerer")
    parser.add_argument("--allow-evaluator-overlap", dest="allow_evaluator_overlap",
                        action="store_const", const=True)
    parser.add_argument("--runs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epsilon-floor", dest="epsilon_floor", type=float)
    parser.add_argument("--top-k", dest="top_k", type=int)
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--rpm", dest="requests_per_minute", type=int)
    parser.add_argument("--fixtures-dir", dest="fixtures_dir")
    parser.add_argument("--store-dir", dest="store_dir")
    parser.add_argument("--record", action="store_const", const=True,
                        help="record fixtures while calling the live API")
    parser.add_argument("--image-token-cost", dest="image_token_cost", type=int)
    parser.add_argument("--facts-per-video", dest="facts_per_video", type=int)
    parser.add_argument("--p-hit", dest="p_hit", type=float)
    parser.add_argument("--p-miss", dest="p_miss", type=float)
    parser.add_argument("--extractor-template", dest="extractor_template")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="visil",
        description="Score multimodal video summaries by information loss, "
                    "select summaries on the loss/cost frontier, and "
                    "validate the score against QA correctness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("caption", help="caption videos and extract keywords")
    p.add_argument("--manifest", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("keywords", help="re-extract keywords for existing captions")
    p.add_argument("--captions", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_keywords)

    p = sub.add_parser("summarize", help="build summaries per format")
    p.add_argument("--manifest", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--formats",
                   default="text_only,one_image,three_image,full_video")
    _add_config_flags(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("score", help="score summaries against their videos")
    p.add_argument("--manifest", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--summaries", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("vqa", help="answer questions from summaries only")
    p.add_argument("--items", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument("--manifest", help="needed for full-video summaries")
    _add_config_flags(p)
    p.set_defaults(func=cmd_vqa)

    p = sub.add_parser("correspond", help="distractor correspondence test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--summaries", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_correspond)

    p = sub.add_parser("select", help="Pareto frontier and alpha sweep")
    p.add_argument("--scores", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument("--alphas", default="0,0.001,0.01,0.1,1,10")
    p.add_argument("--vqa", help="vqa.jsonl for accuracy annotation")
    _add_config_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("stats", help="validation statistics")
    p.add_argument("--scores", required=True)
    p.add_argument("--correctness", required=True)
    p.add_argument("--n-shuffles", dest="n_shuffles", type=int, default=10_000)
    p.add_argument("--force", action="store_true",
                   help="pool across evaluator models anyway")
    p.add_argument("--trim-extremes", dest="trim_extremes", action="store_true",
                   help="drop the max- and min-scoring samples first")
    _add_config_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="deterministic synthetic experiment")
    p.add_argument("--videos", type=int, default=200)
    p.add_argument("--coverage",
                   help="per-format coverage, e.g. text_only=0.2,one_image=0.5")
    p.add_argument("--formats")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    flags = {name: getattr(args, name) for name in CONFIG_FIELDS
             if hasattr(args, name)}
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    merged = effective_config(flags, file_cfg, dict(os.environ))
    return RunConfig(merged)


def _validate_usage(cfg: RunConfig, parser: argparse.ArgumentParser) -> None:
    if cfg.backend == "replay" and not cfg.fixtures_dir:
        parser.error("--backend replay requires --fixtures-dir")
    if cfg.backend == "api":
        if not cfg.endpoint:
            parser.error("--backend api requires --endpoint")
        if not (cfg.api_key or os.environ.get("VISIL_API_KEY")):
            parser.error("--backend api requires VISIL_API_KEY")
    try:
        cfg.roles
    except VisilError as exc:
        parser.error(str(exc))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _config_from_args(args)
    _validate_usage(cfg, parser)
    try:
        status = args.func(cfg, args)
        append_manifest(cfg, args.command)
        return status
    except VisilError as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return FAILURE_EXIT


if __name__ == "__main__":
    sys.exit(main())
