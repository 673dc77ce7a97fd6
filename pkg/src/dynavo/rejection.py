"""Per-object motion verdicts and removal of feature points on moving objects.

A segmented region is judged moving when enough epipolar-check dynamic
points fall inside it; matched pairs whose current-frame point lies in a
moving region of a dynamic class are removed before pose estimation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .epipolar import DynamicPointSet
from .features import MatchedPair
from .segmentation import PERSON_CLASS_ID, SemanticRegion, point_in_region

MOVING = "moving"
STATIC = "static"


@dataclass(frozen=True)
class RejectionConfig:
    moving_min_points: int = 3
    dynamic_classes: frozenset = frozenset({PERSON_CLASS_ID})
    all_classes_dynamic: bool = False  # experimentation flag: verdicts for every class

    def __post_init__(self):
        if self.moving_min_points < 1:
            raise ValueError("moving_min_points must be >= 1")
        object.__setattr__(self, "dynamic_classes", frozenset(self.dynamic_classes))

    def is_dynamic_class(self, class_id: int) -> bool:
        return self.all_classes_dynamic or class_id in self.dynamic_classes


@dataclass(frozen=True)
class RegionVerdict:
    region: SemanticRegion
    dynamic_count: int
    verdict: str  # MOVING | STATIC


def classify_region_motion(
    regions: list[SemanticRegion],
    dynamic_points: DynamicPointSet,
    cfg: RejectionConfig = RejectionConfig(),
) -> list[RegionVerdict]:
    """Count dynamic points inside each dynamic-class region and judge motion."""
    verdicts = []
    for region in regions:
        if not cfg.is_dynamic_class(region.class_id):
            continue
        count = sum(1 for p in dynamic_points.points if point_in_region(region, p))
        verdict = MOVING if count >= cfg.moving_min_points else STATIC
        verdicts.append(RegionVerdict(region, count, verdict))
    return verdicts


def reject_outliers(
    pairs: list[MatchedPair],
    verdicts: list[RegionVerdict],
    cfg: RejectionConfig = RejectionConfig(),
) -> tuple[list[MatchedPair], list[MatchedPair]]:
    """Split pairs into (stable, removed) by moving-region membership of p2.

    With no moving dynamic-class region, all pairs pass through unchanged.
    """
    moving_regions = [
        v.region
        for v in verdicts
        if v.verdict == MOVING and cfg.is_dynamic_class(v.region.class_id)
    ]
    if not moving_regions:
        return list(pairs), []
    stable, removed = [], []
    for pair in pairs:
        if any(point_in_region(r, pair.p2) for r in moving_regions):
            removed.append(pair)
        else:
            stable.append(pair)
    return stable, removed
