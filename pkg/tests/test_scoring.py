import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import per_factor_visil
from visil.backend import SyntheticBackend, ToyWorld
from visil.core import MediaContext, TextPart, VideoPart, VideoRef
from visil.errors import DomainError, IdentityMismatch
from visil.masking import build_masked_caption
from visil.scoring import (
    ScoringConfig,
    conditional_caption_logprob,
    geometric_mean_probs,
    visil_score,
)

LN9 = math.log(9.0)


def toy_setup(n_facts=10, covered=8):
    world = ToyWorld(facts_per_video=n_facts)
    backend = SyntheticBackend(world)
    facts = [f"w{i:02d}" for i in range(n_facts)]
    backend.register_video("v1", facts)
    video = VideoRef(id="v1", frame_dir="frames")
    masked = build_masked_caption(" ".join(facts), facts)
    video_ctx = MediaContext((VideoPart(video),))
    summary_ctx = MediaContext((TextPart(" ".join(facts[:covered])),))
    return backend, video_ctx, summary_ctx, masked


# ---------------------------------------------------------------------------
# geometric mean
# ---------------------------------------------------------------------------


def test_geometric_mean_identical_samples_is_exact():
    assert geometric_mean_probs([[0.5], [0.5], [0.5]]).tolist() == [0.5]
    # non-dyadic values stay bit-exact when all runs agree
    assert geometric_mean_probs([[0.1], [0.1], [0.1]]).tolist() == [0.1]


def test_geometric_mean_examples():
    assert geometric_mean_probs([[0.25], [1.0]])[0] == pytest.approx(0.5, abs=1e-15)
    got = geometric_mean_probs([[0.1], [0.9], [0.3]])[0]
    assert abs(got - 0.3) < 1e-12


def test_geometric_mean_rejects_out_of_domain():
    with pytest.raises(DomainError):
        geometric_mean_probs([[0.0], [0.5]])
    with pytest.raises(DomainError):
        geometric_mean_probs([[-0.1], [0.5]])
    with pytest.raises(DomainError):
        geometric_mean_probs([[1.5], [0.5]])
    with pytest.raises(DomainError):
        geometric_mean_probs([0.5, 0.5])  # not a matrix


@settings(max_examples=100)
@given(st.lists(st.lists(st.floats(1e-6, 1.0, allow_nan=False),
                         min_size=3, max_size=3),
                min_size=1, max_size=5))
def test_geometric_mean_bounded_by_min_max(rows):
    arr = np.array(rows)
    out = geometric_mean_probs(arr)
    assert np.all(out >= arr.min(axis=0) - 1e-12)
    assert np.all(out <= arr.max(axis=0) + 1e-12)


# ---------------------------------------------------------------------------
# conditional caption log-probability
# ---------------------------------------------------------------------------


def test_conditional_logprob_closed_forms():
    world = ToyWorld(facts_per_video=3)
    backend = SyntheticBackend(world)
    backend.register_video("v1", ["a", "b", "c"])
    cfg = ScoringConfig(runs=1, seed=0)

    masked2 = build_masked_caption("a b", ["a", "b"])
    total, _, _ = conditional_caption_logprob(
        backend, MediaContext((TextPart("a b"),)), masked2, cfg)
    assert total == pytest.approx(2 * math.log(0.9), abs=1e-12)

    masked3 = build_masked_caption("a b c", ["a", "b", "c"])
    total, _, _ = conditional_caption_logprob(
        backend, MediaContext((TextPart("nothing"),)), masked3, cfg)
    assert total == pytest.approx(3 * math.log(0.1), abs=1e-12)


def test_repeated_runs_of_deterministic_backend_equal_single_run():
    backend, video_ctx, summary_ctx, masked = toy_setup()
    one = conditional_caption_logprob(
        backend, summary_ctx, masked, ScoringConfig(runs=1, seed=0))
    three = conditional_caption_logprob(
        backend, summary_ctx, masked, ScoringConfig(runs=3, seed=0))
    assert one[0] == three[0]  # exact, not approximate
    assert np.array_equal(one[1], three[1])


def test_total_is_never_positive():
    backend, video_ctx, summary_ctx, masked = toy_setup()
    total, _, _ = conditional_caption_logprob(
        backend, video_ctx, masked, ScoringConfig(runs=2, seed=3))
    assert total <= 0.0


def test_parallel_runs_fold_deterministically():
    backend, _, summary_ctx, masked = toy_setup()
    cfg = ScoringConfig(runs=3, seed=0)
    seq = conditional_caption_logprob(backend, summary_ctx, masked, cfg, jobs=1)
    par = conditional_caption_logprob(backend, summary_ctx, masked, cfg, jobs=3)
    assert seq[0] == par[0]
    assert np.array_equal(seq[2], par[2])


# ---------------------------------------------------------------------------
# the score itself
# ---------------------------------------------------------------------------


def test_visil_arithmetic_example():
    # logP(C|V) = -3, logP(C|summary) = -5 -> score 2
    assert (-3.0) - (-5.0) == 2.0  # the definition, pinned


def test_visil_identity_is_exact_zero():
    backend, video_ctx, _, masked = toy_setup()
    rec = visil_score(backend, video_ctx, video_ctx, masked,
                      ScoringConfig(runs=3, seed=5),
                      video_id="v1", summary_id="self")
    assert rec.visil == 0.0


def test_visil_toy_world_closed_form():
    backend, video_ctx, summary_ctx, masked = toy_setup(n_facts=10, covered=8)
    rec = visil_score(backend, video_ctx, summary_ctx, masked,
                      ScoringConfig(runs=1, seed=0),
                      video_id="v1", summary_id="s1")
    assert rec.visil == pytest.approx(2 * LN9, abs=1e-9)
    # brute-force factor-by-factor oracle
    facts = [f"w{i:02d}" for i in range(10)]
    oracle = per_factor_visil(facts, set(facts), set(facts[:8]), 0.9, 0.1)
    assert rec.visil == pytest.approx(oracle, abs=1e-12)


def test_visil_monotone_in_coverage():
    previous = None
    for covered in range(11):
        backend, video_ctx, summary_ctx, masked = toy_setup(10, covered)
        rec = visil_score(backend, video_ctx, summary_ctx, masked,
                          ScoringConfig(runs=1, seed=0),
                          video_id="v1", summary_id=f"s{covered}")
        if previous is not None:
            assert rec.visil < previous  # strictly decreasing in coverage
        previous = rec.visil


def test_hallucinated_summary_facts_change_nothing():
    backend, video_ctx, summary_ctx, masked = toy_setup(10, 6)
    base = visil_score(backend, video_ctx, summary_ctx, masked,
                       ScoringConfig(runs=1, seed=0),
                       video_id="v1", summary_id="s")
    noisy_ctx = MediaContext(
        (TextPart(summary_ctx.parts[0].text + " zeppelin quantum entropy"),))
    noisy = visil_score(backend, video_ctx, noisy_ctx, masked,
                        ScoringConfig(runs=1, seed=0),
                        video_id="v1", summary_id="s")
    assert noisy.visil == base.visil


def test_visil_can_be_negative():
    # a summary that covers a keyword the "video" context misses
    world = ToyWorld(facts_per_video=2)
    backend = SyntheticBackend(world)
    backend.register_video("v1", ["dog"])
    backend.register_video("other", ["park"])  # puts "park" in the vocabulary
    masked = build_masked_caption("dog park", ["dog", "park"])
    video_ctx = MediaContext((TextPart("dog"),))
    summary_ctx = MediaContext((TextPart("dog park"),))
    rec = visil_score(backend, video_ctx, summary_ctx, masked,
                      ScoringConfig(runs=1, seed=0),
                      video_id="v1", summary_id="s")
    assert rec.visil < 0.0


def test_identity_mismatch_rejected():
    backend, video_ctx, summary_ctx, masked = toy_setup()
    with pytest.raises(IdentityMismatch):
        visil_score(backend, video_ctx, summary_ctx, masked,
                    ScoringConfig(runs=1, seed=0),
                    video_id="other", summary_id="s1")


def test_record_carries_provenance():
    backend, video_ctx, summary_ctx, masked = toy_setup()
    cfg = ScoringConfig(runs=2, seed=11)
    rec = visil_score(backend, video_ctx, summary_ctx, masked, cfg,
                      video_id="v1", summary_id="s1")
    assert rec.evaluator_model == backend.model_id
    assert rec.runs == 2 and rec.seed == 11
    assert rec.excluded_keywords == 0
    assert len(rec.per_keyword_logp_video) == 2
    assert len(rec.per_keyword_logp_video[0]) == masked.n_slots
    assert rec.visil == rec.logp_c_given_v - rec.logp_c_given_s


class SeedRecordingBackend:
    """Floors everything; remembers the seeds it was called with."""

    model_id = "probe"

    def __init__(self):
        self.seeds = []

    def generate_text(self, *a, **k):
        raise AssertionError

    def score_keywords(self, context, masked, seed):
        from visil.backend.base import KeywordScores
        self.seeds.append(seed)
        return KeywordScores(logps=tuple([math.log(1e-6)] * masked.n_slots))


def test_runs_use_consecutive_seeds():
    backend = SeedRecordingBackend()
    masked = build_masked_caption("dog park", ["dog", "park"])
    ctx = MediaContext((TextPart("x"),))
    conditional_caption_logprob(backend, ctx, masked,
                                ScoringConfig(runs=3, seed=10))
    assert backend.seeds == [10, 11, 12]


def test_fully_floored_runs_are_flagged():
    backend = SeedRecordingBackend()
    masked = build_masked_caption("dog park", ["dog", "park"])
    ctx = MediaContext((TextPart("x"),))
    rec = visil_score(backend, ctx, ctx, masked, ScoringConfig(runs=2, seed=0),
                      video_id="v1", summary_id="s1")
    assert "fully_floored:video:run0" in rec.flags
    assert "fully_floored:summary:run1" in rec.flags
    assert len(rec.flags) == 4


def test_per_keyword_mean_reported():
    backend, video_ctx, summary_ctx, masked = toy_setup(10, 8)
    rec = visil_score(backend, video_ctx, summary_ctx, masked,
                      ScoringConfig(runs=1, seed=0),
                      video_id="v1", summary_id="s1")
    assert rec.visil_per_keyword == pytest.approx(rec.visil / 10)
