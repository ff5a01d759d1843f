"""Summary selection on the information-loss / token-cost trade-off.

select_summary minimizes score + alpha * token_cost for one trade-off
weight; sweeping alpha walks the Pareto frontier from the lowest-loss
point toward the cheapest point. Scalarization can skip non-convex
frontier points, so the exact frontier is exposed separately.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyInput


@dataclass(frozen=True)
class CandidatePoint:
    summary_id: str
    visil: float
    token_cost: int

    def __post_init__(self):
        if self.token_cost < 0:
            raise ValueError(f"candidate {self.summary_id!r}: negative token_cost")


def dominates(p: CandidatePoint, q: CandidatePoint) -> bool:
    """p is at least as good on both objectives and strictly better on one."""
    return (p.visil <= q.visil and p.token_cost <= q.token_cost
            and (p.visil < q.visil or p.token_cost < q.token_cost))


def select_summary(candidates: list[CandidatePoint], alpha: float) -> CandidatePoint:
    """argmin of visil + alpha * token_cost; ties break toward lower visil,
    then lower token_cost, then lexicographic summary_id."""
    if not candidates:
        raise EmptyInput("no candidates to select from")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return min(
        candidates,
        key=lambda c: (c.visil + alpha * c.token_cost, c.visil, c.token_cost,
                       c.summary_id),
    )


def pareto_frontier(candidates: list[CandidatePoint]) -> list[CandidatePoint]:
    """Exactly the non-dominated points, sorted by token_cost (ties by
    visil then summary_id). Duplicates of a frontier point are retained:
    equal points never dominate each other."""
    frontier = [p for p in candidates
                if not any(dominates(q, p) for q in candidates)]
    frontier.sort(key=lambda c: (c.token_cost, c.visil, c.summary_id))
    return frontier


def alpha_sweep(
    candidates: list[CandidatePoint],
    alphas: list[float],
) -> list[tuple[float, CandidatePoint]]:
    """select_summary at each alpha. Alphas must be sorted ascending; the
    selected token_cost is then non-increasing and visil non-decreasing."""
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be sorted ascending")
    return [(alpha, select_summary(candidates, alpha)) for alpha in alphas]
