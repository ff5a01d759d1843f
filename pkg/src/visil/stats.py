"""Validation statistics: Pearson correlation, a seeded permutation test,
and logistic regression of answer correctness on the information-loss
score.

Reproducibility contract: the permutation for shuffle index i is drawn
from a PCG64 generator seeded with SeedSequence((seed, i)) and applied
with numpy's uniform Fisher-Yates shuffle, so p-values depend only on
(seed, n_shuffles) and never on execution order or parallelism.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ScoreRecord
from .errors import DegenerateInput, EvaluatorMismatch, SeparationWarning

MAX_IRLS_ITERATIONS = 100
LOGLIK_TOL = 1e-8
SEPARATION_NORM = 1e3
_P_CLIP = 1e-12


@dataclass(frozen=True)
class PairedSample:
    """Scores paired with outcomes, all from one evaluator model.

    The container only requires equal lengths; the statistical operations
    additionally require n >= 3 and non-constant vectors.
    """

    x: tuple[float, ...]
    y: tuple[float, ...]
    evaluator_model: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.x) != len(self.y):
            raise DegenerateInput("x and y lengths differ")

    @property
    def n(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class StatReport:
    n: int
    beta0: float
    beta1: float
    se1: float
    wald_p: float
    pearson_r: float
    perm_p: float
    n_shuffles: int
    seed: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "beta0": self.beta0,
            "beta1": self.beta1,
            "se1": self.se1,
            "wald_p": self.wald_p,
            "pearson_r": self.pearson_r,
            "perm_p": self.perm_p,
            "n_shuffles": self.n_shuffles,
            "seed": self.seed,
            "converged": self.converged,
        }


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInput("x and y must be equal-length vectors")
    if x.size < 3:
        raise DegenerateInput("need at least 3 samples")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("constant vector has no correlation")
    return x, y


def pearson_r(x, y) -> float:
    """Sample Pearson correlation, clipped into [-1, 1] against rounding."""
    x, y = _check_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    r = float((xc @ yc) / math.sqrt((xc @ xc) * (yc @ yc)))
    return max(-1.0, min(1.0, r))


def _shuffle_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(index,))))


def permutation_test(x, y, n_shuffles: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Two-sided permutation test on Pearson's r.

    Shuffles y n_shuffles times; p = (1 + #{|r_perm| >= |r_obs|}) /
    (1 + n_shuffles), so p >= 1/(n_shuffles+1) always. Deterministic
    given seed.
    """
    if n_shuffles < 1:
        raise ValueError("n_shuffles must be positive")
    x, y = _check_pair(x, y)
    r_obs = pearson_r(x, y)

    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float((xc @ xc) * (yc @ yc)))
    threshold = abs(r_obs)

    exceed = 0
    n = x.size
    for i in range(n_shuffles):
        perm = _shuffle_rng(seed, i).permutation(n)
        r_perm = float(xc @ yc[perm]) / denom
        if abs(r_perm) >= threshold:
            exceed += 1
    return r_obs, (1 + exceed) / (1 + n_shuffles)


def _neg_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    # log(1 + e^eta) computed stably for both signs of eta
    return float(np.sum(np.logaddexp(0.0, eta)) - y @ eta)


def _separated(eta: np.ndarray, y: np.ndarray) -> bool:
    """Perfect classification with wide margins everywhere."""
    signs_match = np.all((eta > 0) == (y == 1.0))
    return bool(signs_match and np.min(np.abs(eta)) > 10.0)


def logistic_fit(x, y) -> tuple[float, float, float, float, bool]:
    """Maximum-likelihood logistic regression of a binary outcome on one
    score, by iteratively reweighted least squares.

    Returns (beta0, beta1, se1, wald_p, converged). se1 comes from the
    inverse observed information; wald_p is the two-sided normal p-value
    of beta1/se1. Diverging coefficients (quasi-separation) stop the fit
    with converged=False and a SeparationWarning.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInput("x and y must be equal-length vectors")
    if x.size < 3:
        raise DegenerateInput("need at least 3 samples")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DegenerateInput("y must be binary 0/1")
    if len(np.unique(y)) < 2:
        raise DegenerateInput("y contains a single class")

    X = np.column_stack([np.ones_like(x), x])
    beta = np.zeros(2)
    loglik = -_neg_loglik(X, y, beta)
    converged = False

    for _ in range(MAX_IRLS_ITERATIONS):
        p = 1.0 / (1.0 + np.exp(-np.clip(X @ beta, -500, 500)))
        p = np.clip(p, _P_CLIP, 1.0 - _P_CLIP)
        w = p * (1.0 - p)
        # weighted least squares on the working response
        z = X @ beta + (y - p) / w
        sw = np.sqrt(w)
        beta = np.linalg.lstsq(sw[:, None] * X, sw * z, rcond=None)[0]

        if np.linalg.norm(beta) > SEPARATION_NORM:
            warnings.warn(
                "coefficients diverged; data are (quasi-)separable",
                SeparationWarning)
            break
        new_loglik = -_neg_loglik(X, y, beta)
        if abs(new_loglik - loglik) < LOGLIK_TOL:
            if _separated(X @ beta, y):
                # the plateau comes from the likelihood approaching its
                # supremum at infinity, not from an interior optimum
                warnings.warn(
                    "likelihood plateau with perfect separation; the MLE "
                    "does not exist", SeparationWarning)
                break
            converged = True
            break
        loglik = new_loglik

    p = 1.0 / (1.0 + np.exp(-np.clip(X @ beta, -500, 500)))
    w = np.clip(p * (1.0 - p), _P_CLIP, None)
    info = X.T @ (w[:, None] * X)
    cov = np.linalg.pinv(info)
    se1 = float(math.sqrt(max(cov[1, 1], 0.0)))
    if se1 > 0:
        wald_p = math.erfc(abs(beta[1] / se1) / math.sqrt(2.0))
    else:
        wald_p = 1.0
    return float(beta[0]), float(beta[1]), se1, max(wald_p, 5e-324), converged


def pool_records(
    records: list[ScoreRecord],
    correctness: dict[tuple[str, str], int],
    force: bool = False,
) -> tuple[PairedSample, int]:
    """Join scores with correctness labels keyed by (video_id, summary_id).

    Unmatched records are dropped; their count is returned. Mixing
    evaluator models is an error unless force is set, because scores are
    not comparable across models.
    """
    models = {r.evaluator_model for r in records}
    if len(models) > 1 and not force:
        raise EvaluatorMismatch(
            f"records from {len(models)} evaluator models "
            f"({sorted(models)}); pass force to pool anyway")
    xs, ys, dropped = [], [], 0
    for rec in records:
        label = correctness.get((rec.video_id, rec.summary_id))
        if label is None:
            dropped += 1
            continue
        xs.append(rec.visil)
        ys.append(float(label))
    sample = PairedSample(
        x=tuple(xs), y=tuple(ys),
        evaluator_model=sorted(models)[0] if len(models) == 1 else "mixed")
    return sample, dropped


def trim_extremes(sample: PairedSample) -> PairedSample:
    """Drop the single highest- and lowest-scoring pairs."""
    order = np.argsort(np.asarray(sample.x))
    keep = sorted(order[1:-1].tolist())
    return PairedSample(
        x=tuple(sample.x[i] for i in keep),
        y=tuple(sample.y[i] for i in keep),
        evaluator_model=sample.evaluator_model)


def analyze(sample: PairedSample, n_shuffles: int = 10_000, seed: int = 0) -> StatReport:
    """Full validation report: logistic fit plus correlation significance."""
    beta0, beta1, se1, wald_p, converged = logistic_fit(sample.x, sample.y)
    r_obs, perm_p = permutation_test(sample.x, sample.y, n_shuffles, seed)
    return StatReport(
        n=sample.n, beta0=beta0, beta1=beta1, se1=se1, wald_p=wald_p,
        pearson_r=r_obs, perm_p=perm_p, n_shuffles=n_shuffles, seed=seed,
        converged=converged)
