"""Candidate region selection: confidence filter, sort, truncate, pad.

Candidates below the confidence threshold are removed, survivors are sorted
by descending confidence (stable, so equal confidences keep input order),
the list is cut to the slot budget, and remaining slots are padded with the
zero-box/empty-caption sentinel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .scene import PADDING_REGION, RegionAnnotation

DEFAULT_CONFIDENCE_THRESHOLD = 0.4
DEFAULT_MAX_REGIONS = 5


@dataclass(frozen=True)
class PrepConfig:
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    max_regions: int = DEFAULT_MAX_REGIONS

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError(f"confidence_threshold out of [0, 1]: {self.confidence_threshold}")
        if self.max_regions < 1:
            raise ValueError(f"max_regions must be >= 1: {self.max_regions}")


@dataclass(frozen=True)
class PreparedRegions:
    """Fixed-length slot list: actives first (descending confidence), padding after."""

    slots: tuple[RegionAnnotation, ...]
    active_count: int

    def __post_init__(self):
        for i, slot in enumerate(self.slots):
            if slot.is_padding != (i >= self.active_count):
                raise ValueError(f"slot {i} breaks the active-then-padded layout")
        confidences = [s.box.confidence for s in self.slots[: self.active_count]]
        if any(a < b for a, b in zip(confidences, confidences[1:])):
            raise ValueError("active slots are not sorted by descending confidence")

    @property
    def active(self) -> tuple[RegionAnnotation, ...]:
        return self.slots[: self.active_count]


def prepare(candidates: Sequence[RegionAnnotation], cfg: PrepConfig = PrepConfig()) -> PreparedRegions:
    """Apply the selection protocol; empty input yields all-padded slots.

    Padding sentinels in the input are ignored, which makes the function
    idempotent on its own output.
    """
    kept = [
        c
        for c in candidates
        if not c.is_padding and c.box.confidence >= cfg.confidence_threshold
    ]
    kept.sort(key=lambda c: c.box.confidence, reverse=True)  # stable on ties
    kept = kept[: cfg.max_regions]
    slots = tuple(kept) + (PADDING_REGION,) * (cfg.max_regions - len(kept))
    return PreparedRegions(slots=slots, active_count=len(kept))
