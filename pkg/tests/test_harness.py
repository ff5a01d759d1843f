import json
import math

import pytest

from visil.backend import SyntheticBackend, ToyWorld
from visil.core import SummaryFormat, SummaryRecord, VideoRef
from visil.errors import (
    CaptionUnavailable,
    DistractorShortfall,
    InvalidFrameField,
    KeyframeParseError,
    TimecodeParseError,
    VisilWarning,
)
from visil.harness import (
    LABEL_GROUND_TRUTH,
    LABEL_TEXT_CONFUSED,
    LABEL_VISUAL_CONFUSED,
    Timecode,
    VqaItem,
    build_summaries,
    make_distractors,
    parse_timecode,
    parse_vqa_letter,
    run_captioning,
    run_correspondence,
    run_vqa,
    synthetic_experiment,
)

LN9 = math.log(9.0)


def toy_backend_with(videos: dict[str, list[str]], **world_kw):
    world = ToyWorld(facts_per_video=world_kw.pop("facts_per_video", 10),
                     **world_kw)
    backend = SyntheticBackend(world)
    for vid, facts in videos.items():
        backend.register_video(vid, facts)
    return backend


# ---------------------------------------------------------------------------
# timecodes
# ---------------------------------------------------------------------------


def test_timecode_known_value():
    assert parse_timecode("00:00:11:15", 30.0) == 345


def test_timecode_arithmetic():
    assert parse_timecode("00:01:00:00", 25.0) == 1500
    assert parse_timecode("00:00:16:03", 24.0) == 387
    assert parse_timecode("01:02:03:04", 30.0) == round(30 * 3723) + 4


def test_timecode_frame_field_range():
    with pytest.raises(InvalidFrameField):
        parse_timecode("00:00:05:40", 30.0)
    with pytest.raises(InvalidFrameField):
        parse_timecode("00:00:05:30", 29.97)  # ceil(29.97) = 30
    assert parse_timecode("00:00:00:29", 29.97) == 29


@pytest.mark.parametrize("bad", [
    "0:00:00:00", "00:00:00", "00-00-00-00", "aa:bb:cc:dd", "00:61:00:00",
    "00:00:99:00", "", "00:00:00:00:00", "000:00:00:00",
])
def test_timecode_rejects_malformed_text(bad):
    with pytest.raises(TimecodeParseError):
        parse_timecode(bad, 30.0)


def test_timecode_type_invariants():
    with pytest.raises(TimecodeParseError):
        Timecode(0, 60, 0, 0)
    tc = Timecode(0, 0, 11, 15)
    assert tc.frame_index(30.0) == 345


# ---------------------------------------------------------------------------
# captioning
# ---------------------------------------------------------------------------


def test_captioning_on_toy_video():
    backend = toy_backend_with({"v1": ["dog", "park"]}, facts_per_video=2)
    video = VideoRef(id="v1", frame_dir="frames")
    record = run_captioning(backend, video)
    assert record.text == "dog park"
    assert record.keywords == ("dog", "park")
    assert record.generator_model == backend.model_id


def test_captioning_refusal_skips_video():
    from visil.errors import BackendRefusal

    class RefusingBackend:
        model_id = "refuser"

        def generate_text(self, *a, **k):
            raise BackendRefusal("sensitive content")

        def score_keywords(self, *a, **k):
            raise AssertionError

    video = VideoRef(id="v1", frame_dir="frames")
    with pytest.raises(CaptionUnavailable):
        run_captioning(RefusingBackend(), video)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------


def make_caption(video_id, words):
    from visil.core import CaptionRecord
    return CaptionRecord(video_id=video_id, text=" ".join(words),
                         generator_model="toy", keywords=tuple(words))


def test_build_summaries_all_formats():
    facts = [f"w{i}" for i in range(10)]
    backend = toy_backend_with({"v1": facts})
    video = VideoRef(id="v1", frame_dir="frames", fps=30.0, duration_s=8.0)
    out = build_summaries(backend, video, make_caption("v1", facts),
                          formats=list(SummaryFormat))
    by_format = {s.format: s for s in out}
    assert set(by_format) == set(SummaryFormat)

    text_only = by_format[SummaryFormat.TEXT_ONLY]
    assert text_only.keyframes == () and text_only.text
    assert text_only.token_cost == len(text_only.text.split())

    one = by_format[SummaryFormat.ONE_IMAGE]
    assert len(one.keyframes) == 1
    assert "[KEYFRAME1]" in one.text
    assert one.token_cost == len(one.text.split()) + 258

    three = by_format[SummaryFormat.THREE_IMAGE]
    assert len(three.keyframes) == 3
    for i in (1, 2, 3):
        assert f"[KEYFRAME{i}]" in three.text
    assert all(k.startswith("frames/frame_") for k in three.keyframes)

    full = by_format[SummaryFormat.FULL_VIDEO]
    assert full.text == "" and full.keyframes == ()
    assert full.token_cost == 240 * 258  # 8s * 30fps frames at 258 tokens


def test_keyframe_example_response_resolves_to_frame_indices(tmp_path):
    # the known three-timestamp response at 30 fps
    response = json.dumps([
        {"timestamp": "00:00:11:15", "description": "a"},
        {"timestamp": "00:00:16:03", "description": "b"},
        {"timestamp": "00:00:20:15", "description": "c"},
    ])

    class KeyframeBackend:
        model_id = "kf"

        def generate_text(self, context, prompt, seed):
            from visil.backend.base import GenerateResult
            return GenerateResult(response)

        def score_keywords(self, *a, **k):
            raise AssertionError

    from visil.harness import select_keyframes
    video = VideoRef(id="v1", frame_dir=str(tmp_path), fps=30.0, duration_s=30.0)
    frames = select_keyframes(KeyframeBackend(), video, want=3)
    indices = [345, 483, 615]  # 11*30+15, 16*30+3, 20*30+15
    assert frames == [str(tmp_path / f"frame_{i:06d}.png") for i in indices]


def test_degraded_keyframe_response_falls_back_to_one_image(tmp_path):
    single = json.dumps({"timestamp": "00:00:01:00", "description": "only"})

    class OneFrameBackend:
        model_id = "kf"

        def generate_text(self, context, prompt, seed):
            from visil.backend.base import GenerateResult
            if "SMPTE timecode" in prompt:
                return GenerateResult(single)
            return GenerateResult("[KEYFRAME1] something happens then ends.")

        def score_keywords(self, *a, **k):
            raise AssertionError

    video = VideoRef(id="v1", frame_dir=str(tmp_path), fps=30.0, duration_s=5.0)
    with pytest.warns(VisilWarning):
        out = build_summaries(OneFrameBackend(), video,
                              make_caption("v1", ["x"]),
                              formats={SummaryFormat.THREE_IMAGE})
    assert len(out) == 1
    assert out[0].format is SummaryFormat.ONE_IMAGE
    assert len(out[0].keyframes) == 1


def test_unparseable_keyframes_is_an_error(tmp_path):
    class BrokenBackend:
        model_id = "kf"

        def generate_text(self, context, prompt, seed):
            from visil.backend.base import GenerateResult
            return GenerateResult("I cannot find keyframes")

        def score_keywords(self, *a, **k):
            raise AssertionError

    from visil.harness import select_keyframes
    video = VideoRef(id="v1", frame_dir=str(tmp_path), fps=30.0)
    with pytest.raises(KeyframeParseError):
        select_keyframes(BrokenBackend(), video, want=3)


def test_missing_placeholder_warns_but_keeps_summary(tmp_path):
    class NoPlaceholderBackend:
        model_id = "kf"

        def generate_text(self, context, prompt, seed):
            from visil.backend.base import GenerateResult
            if "SMPTE timecode" in prompt:
                return GenerateResult(json.dumps([
                    {"timestamp": "00:00:01:00", "description": "a"}]))
            return GenerateResult("a summary that forgot its anchors")

        def score_keywords(self, *a, **k):
            raise AssertionError

    video = VideoRef(id="v1", frame_dir=str(tmp_path), fps=30.0, duration_s=5.0)
    with pytest.warns(VisilWarning):
        out = build_summaries(NoPlaceholderBackend(), video,
                              make_caption("v1", ["x"]),
                              formats={SummaryFormat.ONE_IMAGE})
    assert out and out[0].text == "a summary that forgot its anchors"


def test_extractor_invoked_for_missing_frames(tmp_path):
    from visil.harness import resolve_frame
    video = VideoRef(id="v1", frame_dir=str(tmp_path), fps=30.0,
                     video_path="clip.mp4")
    marker = tmp_path / "ran"
    template = f"touch {marker} && touch {{out}}"
    path = resolve_frame(video, 42, extractor_template=template)
    assert marker.exists()
    assert path.endswith("frame_000042.png")
    # present frames skip the extractor
    marker.unlink()
    resolve_frame(video, 42, extractor_template=template)
    assert not marker.exists()


# ---------------------------------------------------------------------------
# VQA
# ---------------------------------------------------------------------------


def test_vqa_letter_parsing():
    assert parse_vqa_letter("B", 4) == "B"
    assert parse_vqa_letter(" c. ", 4) == "C"
    assert parse_vqa_letter("The answer is B because...", 4) is None
    assert parse_vqa_letter("E", 4) is None
    assert parse_vqa_letter("d", 3) is None  # outside the option range
    assert parse_vqa_letter('"A"', 4) == "A"


def test_run_vqa_on_toy_world():
    facts = [f"w{i}" for i in range(6)]
    backend = toy_backend_with({"v1": facts}, facts_per_video=6)
    summary = SummaryRecord(
        summary_id="s1", video_id="v1", format=SummaryFormat.TEXT_ONLY,
        text=" ".join(facts[:3]), token_cost=3)
    item = VqaItem(video_id="v1", question="Which fact is shown?",
                   options=(facts[0], "zebra"), answer_index=0)
    result = run_vqa(backend, item, summary)
    assert result["correct"] and not result["anomaly"]

    # when the summary misses the queried fact, the toy answerer can't win
    item_miss = VqaItem(video_id="v1", question="Which fact is shown?",
                        options=("zebra", facts[5]), answer_index=1)
    result = run_vqa(backend, item_miss, summary)
    assert not result["correct"]


def test_run_vqa_anomalous_answer_counts_incorrect():
    class RamblingBackend:
        model_id = "r"

        def generate_text(self, context, prompt, seed):
            from visil.backend.base import GenerateResult
            return GenerateResult("Well, it is clearly option B, I think")

        def score_keywords(self, *a, **k):
            raise AssertionError

    summary = SummaryRecord(summary_id="s1", video_id="v1",
                            format=SummaryFormat.TEXT_ONLY, text="t",
                            token_cost=1)
    item = VqaItem(video_id="v1", question="?", options=("x", "y"),
                   answer_index=1)
    result = run_vqa(RamblingBackend(), item, summary)
    assert not result["correct"]
    assert result["anomaly"]
    assert result["raw_answer"].startswith("Well")


# ---------------------------------------------------------------------------
# correspondence
# ---------------------------------------------------------------------------


def two_video_summaries():
    backend = toy_backend_with({
        "v1": ["dog", "park", "ball"],
        "v2": ["cat", "sofa", "nap"],
    }, facts_per_video=3)
    s1 = SummaryRecord(summary_id="v1-s", video_id="v1",
                       format=SummaryFormat.ONE_IMAGE,
                       keyframes=("v1/kf0",), text="dog park ball",
                       token_cost=3)
    s2 = SummaryRecord(summary_id="v2-s", video_id="v2",
                       format=SummaryFormat.ONE_IMAGE,
                       keyframes=("v2/kf0",), text="cat sofa nap",
                       token_cost=3)
    backend.register_frame("v1/kf0", ["dog"])
    backend.register_frame("v2/kf0", ["cat"])
    return backend, s1, s2


def test_make_distractors_labels_and_rotation():
    backend, s1, s2 = two_video_summaries()
    items = make_distractors(backend, s1, [s2])
    labels = [i.label for i in items]
    assert labels.count(LABEL_GROUND_TRUTH) == 1
    assert labels.count(LABEL_TEXT_CONFUSED) == 3
    assert labels.count(LABEL_VISUAL_CONFUSED) == 1
    visual = next(i for i in items if i.label == LABEL_VISUAL_CONFUSED)
    assert visual.summary.keyframes == s2.keyframes  # swapped in
    assert visual.summary.text == s1.text  # text untouched
    text_confused = [i for i in items if i.label == LABEL_TEXT_CONFUSED]
    assert all(i.summary.keyframes == s1.keyframes for i in text_confused)
    assert all(i.source_summary_id == s1.summary_id for i in items)


def test_make_distractors_without_other_videos_warns():
    backend, s1, _ = two_video_summaries()
    with pytest.warns(VisilWarning):
        items = make_distractors(backend, s1, [])
    assert all(i.label != LABEL_VISUAL_CONFUSED for i in items)


def test_make_distractors_shortfall_warns_and_keeps_parsed():
    class TwoDistractorBackend:
        model_id = "d"

        def generate_text(self, context, prompt, seed):
            from visil.backend.base import GenerateResult
            return GenerateResult('["only one", "and two"]')

        def score_keywords(self, *a, **k):
            raise AssertionError

    summary = SummaryRecord(summary_id="s", video_id="v1",
                            format=SummaryFormat.TEXT_ONLY, text="dog",
                            token_cost=1)
    with pytest.warns(DistractorShortfall):
        items = make_distractors(TwoDistractorBackend(), summary, [])
    assert sum(1 for i in items if i.label == LABEL_TEXT_CONFUSED) == 2


def test_run_correspondence_judgments():
    backend, s1, s2 = two_video_summaries()
    video = VideoRef(id="v1", frame_dir="frames")
    items = make_distractors(backend, s1, [s2])
    results, accuracy = run_correspondence(backend, video, items)

    by_label = {r["label"]: r for r in results if r["label"] != LABEL_TEXT_CONFUSED}
    # the toy judge says yes iff summary facts are grounded in the video
    assert by_label[LABEL_GROUND_TRUTH]["judged_match"]
    assert by_label[LABEL_GROUND_TRUTH]["correct"]
    assert not by_label[LABEL_VISUAL_CONFUSED]["judged_match"]
    assert by_label[LABEL_VISUAL_CONFUSED]["correct"]
    assert all(r["confidence"] == 5 for r in results)
    assert accuracy[(LABEL_GROUND_TRUTH, "one_image")] == 1.0


def test_run_correspondence_unparseable_judgment():
    class MuteBackend:
        model_id = "m"

        def generate_text(self, context, prompt, seed):
            from visil.backend.base import GenerateResult
            return GenerateResult("hmm.")

        def score_keywords(self, *a, **k):
            raise AssertionError

    video = VideoRef(id="v1", frame_dir="frames")
    summary = SummaryRecord(summary_id="s", video_id="v1",
                            format=SummaryFormat.TEXT_ONLY, text="dog",
                            token_cost=1)
    from visil.harness import CorrespondenceItem
    item = CorrespondenceItem("v1", summary, LABEL_GROUND_TRUTH, "s")
    results, _ = run_correspondence(MuteBackend(), video, [item])
    assert results[0]["anomaly"]
    assert not results[0]["correct"]


# ---------------------------------------------------------------------------
# synthetic experiment
# ---------------------------------------------------------------------------


def test_full_coverage_means_zero_loss():
    world = ToyWorld(facts_per_video=8, p_hit=0.9, p_miss=0.1)
    result = synthetic_experiment(
        world, n_videos=6, formats=[SummaryFormat.TEXT_ONLY],
        coverage_by_format={SummaryFormat.TEXT_ONLY: 1.0}, seed=1)
    assert all(rec.visil == pytest.approx(0.0, abs=1e-9)
               for rec in result.records)
    rate = sum(result.correctness.values()) / len(result.correctness)
    assert 0.6 <= rate <= 1.0  # ~p_hit


def test_zero_coverage_means_full_loss():
    world = ToyWorld(facts_per_video=8, p_hit=0.9, p_miss=0.1)
    result = synthetic_experiment(
        world, n_videos=6, formats=[SummaryFormat.TEXT_ONLY],
        coverage_by_format={SummaryFormat.TEXT_ONLY: 0.0}, seed=1)
    assert all(rec.visil == pytest.approx(8 * LN9, abs=1e-9)
               for rec in result.records)


def test_synthetic_experiment_deterministic():
    world = ToyWorld(facts_per_video=10)
    a = synthetic_experiment(world, n_videos=10, seed=7)
    b = synthetic_experiment(world, n_videos=10, seed=7)
    assert a.records == b.records
    assert a.correctness == b.correctness
    c = synthetic_experiment(world, n_videos=10, seed=8)
    assert c.records != a.records


@pytest.mark.parametrize("seed", [11, 23, 47])
def test_synthetic_correctness_decreases_with_loss(seed):
    world = ToyWorld(facts_per_video=10, p_hit=0.9, p_miss=0.1)
    rates = []
    for coverage in (1.0, 0.5, 0.0):
        result = synthetic_experiment(
            world, n_videos=120, formats=[SummaryFormat.TEXT_ONLY],
            coverage_by_format={SummaryFormat.TEXT_ONLY: coverage}, seed=seed)
        rates.append(
            sum(result.correctness.values()) / len(result.correctness))
    assert rates[0] > rates[1] > rates[2]


def test_synthetic_experiment_validates_coverage():
    world = ToyWorld(facts_per_video=4)
    with pytest.raises(ValueError):
        synthetic_experiment(world, n_videos=2,
                             coverage_by_format={SummaryFormat.TEXT_ONLY: 1.5})


def test_visual_confusion_rotates_both_directions():
    backend, s1, s2 = two_video_summaries()
    items_a = make_distractors(backend, s1, [s2])
    items_b = make_distractors(backend, s2, [s1])
    vis_a = next(i for i in items_a if i.label == LABEL_VISUAL_CONFUSED)
    vis_b = next(i for i in items_b if i.label == LABEL_VISUAL_CONFUSED)
    assert vis_a.summary.keyframes == s2.keyframes
    assert vis_b.summary.keyframes == s1.keyframes


def test_mixed_coverage_experiment_yields_significant_negative_slope():
    from visil.stats import logistic_fit, permutation_test, pool_records

    world = ToyWorld(facts_per_video=10, p_hit=0.9, p_miss=0.1)
    result = synthetic_experiment(world, n_videos=200, seed=7)
    sample, _ = pool_records(list(result.records), result.correctness)
    assert sample.n == 800
    _, beta1, *_ = logistic_fit(sample.x, sample.y)
    assert beta1 < 0
    _, perm_p = permutation_test(sample.x, sample.y, n_shuffles=2000, seed=7)
    assert perm_p < 0.01
