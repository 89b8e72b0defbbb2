"""Ordered-weighted-averaging trade-off between efficiency and
faithfulness, with min-max normalization across methods and an argmax
selector over a weight sweep."""

from dataclasses import dataclass, replace

from .clique import CliqueMethod


@dataclass(frozen=True)
class ObjectivePoint:
    method: CliqueMethod
    efficiency_raw: float
    faithfulness_raw: float
    efficiency_norm: float | None = None
    faithfulness_norm: float | None = None


@dataclass(frozen=True)
class OwaWeights:
    """``w`` goes to the larger of the two sorted objective values, 1-w to
    the smaller; w near 1 rewards the best objective, w near 0 the worst."""

    w: float

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"weight must be in [0, 1], got {self.w}")


def _minmax(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        # An objective on which every method ties should penalize no one.
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def normalize_objectives(points: list[ObjectivePoint]) -> list[ObjectivePoint]:
    """Min-max normalize each objective across methods into [0, 1]."""
    if not points:
        raise ValueError("no points to normalize")
    eff = _minmax([p.efficiency_raw for p in points])
    faith = _minmax([p.faithfulness_raw for p in points])
    return [
        replace(p, efficiency_norm=e, faithfulness_norm=f)
        for p, e, f in zip(points, eff, faith)
    ]


def owa_score(x: float, y: float, weights: OwaWeights) -> float:
    """w * max(x, y) + (1 - w) * min(x, y)."""
    s1, s2 = (x, y) if x >= y else (y, x)
    return weights.w * s1 + (1.0 - weights.w) * s2


def select_method(
    points: list[ObjectivePoint], weights: OwaWeights
) -> tuple[CliqueMethod, dict[CliqueMethod, float]]:
    """Score every normalized point and return the winner (ties go to the
    lexicographically smallest method tag) plus all scores."""
    scores: dict[CliqueMethod, float] = {}
    for point in points:
        if point.efficiency_norm is None or point.faithfulness_norm is None:
            raise ValueError(f"point for {point.method.value} is not normalized")
        scores[point.method] = owa_score(
            point.efficiency_norm, point.faithfulness_norm, weights
        )
    best = min(scores, key=lambda m: (-scores[m], m.value))
    return best, scores
