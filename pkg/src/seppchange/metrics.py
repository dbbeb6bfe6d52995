"""Evaluation metrics for estimated change-point sets.

The Hausdorff distance between two index sets is the larger of the two
one-sided max-min distances

    d(A | B) = max_{a in A} min_{b in B} |a - b|.

Empty sets need a convention: two empty sets agree perfectly (distance 0),
while exactly one empty set is a total miss and scores the worst case T on
the index range; the latter case is flagged so aggregates can report it.
All arithmetic is on integers and exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import math


def one_sided(A, B) -> int:
    """max over a in A of the distance from a to the nearest b in B."""
    A, B = set(A), set(B)
    if not A or not B:
        raise ValueError("one_sided needs non-empty sets")
    return max(min(abs(a - b) for b in B) for a in A)


def hausdorff(A, B, T: int) -> tuple[int, bool]:
    """Two-sided distance plus a flag marking the one-empty-set convention."""
    if T < 1:
        raise ValueError("T must be >= 1")
    A, B = set(A), set(B)
    if not A and not B:
        return 0, False
    if not A or not B:
        return T, True
    return max(one_sided(A, B), one_sided(B, A)), False


def k_error(A, B) -> int:
    """Absolute difference of the set sizes."""
    return abs(len(set(A)) - len(set(B)))


@dataclass(frozen=True)
class EvalResult:
    """Metrics of one estimate against one truth."""

    hausdorff: int
    flagged: bool
    k_error: int


def evaluate(estimate, truth, T: int) -> EvalResult:
    d, flagged = hausdorff(estimate, truth, T)
    return EvalResult(hausdorff=d, flagged=flagged, k_error=k_error(estimate, truth))


def mean_se(values) -> tuple[float, float | None]:
    """Sample mean and standard error; the SE of a single value is absent."""
    values = list(values)
    if not values:
        raise ValueError("need at least one value")
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return mean, None
    var = sum((x - mean) ** 2 for x in values) / (n - 1)
    return mean, math.sqrt(var / n)


def aggregate(results) -> dict:
    """Replication-level summary: per-metric mean, SE and the raw lists."""
    results = list(results)
    d_vals = [r.hausdorff for r in results]
    k_vals = [r.k_error for r in results]
    d_mean, d_se = mean_se(d_vals)
    k_mean, k_se = mean_se(k_vals)
    return {
        "n": len(results),
        "hausdorff": d_vals,
        "k_error": k_vals,
        "flagged": sum(r.flagged for r in results),
        "hausdorff_mean": d_mean,
        "hausdorff_se": d_se,
        "k_error_mean": k_mean,
        "k_error_se": k_se,
    }


def table_cell(mean: float, se: float | None) -> str:
    """Render mean(SE) with one decimal, the layout used for summary tables."""
    if se is None:
        return f"{mean:.1f}(-)"
    return f"{mean:.1f}({se:.1f})"
