"""Information-loss evaluation for multimodal video summaries.

The score of a summary is the conditional pointwise mutual information
log P(C|V) - log P(C|summary) estimated from a model's keyword-recovery
probabilities over a masked caption C of video V. Lower is better; zero
means the summary recovers the caption as well as the full video does.
"""

from .core import (
    CaptionRecord,
    ImagePart,
    MediaContext,
    ScoreRecord,
    SummaryFormat,
    SummaryRecord,
    TextPart,
    VideoPart,
    VideoRef,
    estimate_token_cost,
    parse_records,
    serialize_records,
)
from .masking import MaskedCaption, align_guesses, build_masked_caption, parse_keywords
from .scoring import ScoringConfig, conditional_caption_logprob, geometric_mean_probs, visil_score
from .selection import CandidatePoint, alpha_sweep, pareto_frontier, select_summary
from .stats import (
    PairedSample,
    StatReport,
    logistic_fit,
    pearson_r,
    permutation_test,
    pool_records,
)

__version__ = "0.1.0"

__all__ = [
    "CandidatePoint",
    "CaptionRecord",
    "ImagePart",
    "MaskedCaption",
    "MediaContext",
    "PairedSample",
    "ScoreRecord",
    "ScoringConfig",
    "StatReport",
    "SummaryFormat",
    "SummaryRecord",
    "TextPart",
    "VideoPart",
    "VideoRef",
    "align_guesses",
    "alpha_sweep",
    "build_masked_caption",
    "conditional_caption_logprob",
    "estimate_token_cost",
    "geometric_mean_probs",
    "logistic_fit",
    "pareto_frontier",
    "parse_keywords",
    "parse_records",
    "pearson_r",
    "permutation_test",
    "pool_records",
    "select_summary",
    "serialize_records",
    "visil_score",
    "__version__",
]
