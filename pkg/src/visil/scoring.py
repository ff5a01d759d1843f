"""Information-loss scoring.

The score of a summary is log P(C|V) - log P(C|summary) in nats, where
each conditional caption probability is approximated by the product of
per-keyword recovery probabilities at the masked slots. Nondeterministic
backends are stabilized by repeating each evaluation and taking the
per-keyword geometric mean across runs. Lower is better; the value is
unbounded in both directions and never clamped.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backend.base import Backend, KeywordScores
from .core import MediaContext, ScoreRecord
from .errors import DomainError, IdentityMismatch
from .masking import MaskedCaption


@dataclass(frozen=True)
class ScoringConfig:
    runs: int = 3
    seed: int = 0
    epsilon_floor: float = 1e-6
    top_k: int = 20

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not (0.0 < self.epsilon_floor < 1.0):
            raise ValueError("epsilon_floor must be in (0, 1)")
        if self.top_k < 1:
            raise ValueError("top_k must be positive")


def geometric_mean_probs(samples) -> np.ndarray:
    """Column-wise geometric mean of a [runs x n] probability matrix,
    computed as exp(mean(log)) for stability. Columns whose samples are
    all identical return that value bit-exactly, so repeated runs of a
    deterministic backend match a single run."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2:
        raise DomainError("samples must be a [runs x n] matrix")
    if arr.shape[0] < 1:
        raise DomainError("need at least one run")
    if np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise DomainError("probabilities must lie in (0, 1]; floor upstream")
    out = np.exp(np.log(arr).mean(axis=0))
    identical = np.all(arr == arr[0], axis=0)
    out[identical] = arr[0][identical]
    return out


def _mean_logs_exact(log_matrix: np.ndarray) -> np.ndarray:
    """Column mean of log-probabilities; identical columns stay bit-exact."""
    out = log_matrix.mean(axis=0)
    identical = np.all(log_matrix == log_matrix[0], axis=0)
    out[identical] = log_matrix[0][identical]
    return out


def conditional_caption_logprob(
    backend: Backend,
    context: MediaContext,
    masked: MaskedCaption,
    cfg: ScoringConfig,
    jobs: int = 1,
) -> tuple[float, np.ndarray, np.ndarray]:
    """log P(caption | context) over the masked keyword slots.

    Runs the backend cfg.runs times with seeds seed..seed+runs-1, floors
    every log-probability at ln(epsilon_floor), geometric-means per keyword
    across runs, and sums. Returns (total, per-keyword means, the full
    [runs x n] floored log matrix). A fully floored run is tolerated; the
    backend flags it.
    """
    if masked.n_slots < 1:
        raise ValueError("masked caption has no slots to score")
    runs = _run_scores(backend, context, masked, cfg, jobs)
    floor = math.log(cfg.epsilon_floor)
    matrix = np.array([[min(max(lp, floor), 0.0) for lp in run.logps] for run in runs])
    per_keyword = _mean_logs_exact(matrix)
    return float(per_keyword.sum()), per_keyword, matrix


def _run_scores(backend, context, masked, cfg, jobs) -> list[KeywordScores]:
    seeds = range(cfg.seed, cfg.seed + cfg.runs)
    if jobs > 1 and cfg.runs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(backend.score_keywords, context, masked, s)
                       for s in seeds]
            runs = [f.result() for f in futures]
    else:
        runs = [backend.score_keywords(context, masked, s) for s in seeds]
    for run in runs:
        if len(run.logps) != masked.n_slots:
            raise ValueError(
                f"backend returned {len(run.logps)} scores for {masked.n_slots} slots")
    return runs


def visil_score(
    backend: Backend,
    video_ctx: MediaContext,
    summary_ctx: MediaContext,
    masked: MaskedCaption,
    cfg: ScoringConfig,
    *,
    video_id: str,
    summary_id: str,
    jobs: int = 1,
) -> ScoreRecord:
    """Score one (video, summary) pair: log P(C|V) - log P(C|summary).

    Both contexts must belong to the given video. The two conditional
    probabilities use the same slots, the same run count, and the same
    seeds, so scoring a context against itself is exactly zero.
    """
    for ctx_name, ctx in (("video", video_ctx), ("summary", summary_ctx)):
        for vid in ctx.video_ids:
            if vid != video_id:
                raise IdentityMismatch(
                    f"{ctx_name} context carries video {vid!r}, expected {video_id!r}")

    logp_v, _, matrix_v = conditional_caption_logprob(
        backend, video_ctx, masked, cfg, jobs)
    logp_s, _, matrix_s = conditional_caption_logprob(
        backend, summary_ctx, masked, cfg, jobs)

    flags = []
    floor = math.log(cfg.epsilon_floor)
    for tag, matrix in (("video", matrix_v), ("summary", matrix_s)):
        for run_idx in range(matrix.shape[0]):
            if np.all(matrix[run_idx] == floor):
                flags.append(f"fully_floored:{tag}:run{run_idx}")

    return ScoreRecord(
        video_id=video_id,
        summary_id=summary_id,
        evaluator_model=backend.model_id,
        runs=cfg.runs,
        seed=cfg.seed,
        epsilon_floor=cfg.epsilon_floor,
        per_keyword_logp_video=tuple(tuple(row) for row in matrix_v.tolist()),
        per_keyword_logp_summary=tuple(tuple(row) for row in matrix_s.tolist()),
        logp_c_given_v=logp_v,
        logp_c_given_s=logp_s,
        visil=logp_v - logp_s,
        excluded_keywords=len(masked.excluded),
        flags=tuple(flags),
    )
