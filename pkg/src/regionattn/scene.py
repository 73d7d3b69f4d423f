"""Scene annotations: normalized bounding boxes, region captions, JSON IO.

A scene holds one image's global caption plus its region-text pairs.  Boxes
are stored normalized to [0, 1] so a single annotation serves every latent
grid resolution.  Captions carry a declared ``token_count`` instead of being
tokenized; span lengths are the only thing the mask math consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any


class SceneValidationError(ValueError):
    """A scene file or annotation violates an invariant."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with corners as fractions of image width/height."""

    x0: float
    y0: float
    x1: float
    y1: float
    confidence: float = 1.0

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1", "confidence"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise SceneValidationError(f"{name} out of [0, 1]: {value!r}")
        if self.x1 < self.x0:
            raise SceneValidationError(f"x1 < x0 ({self.x1} < {self.x0})")
        if self.y1 < self.y0:
            raise SceneValidationError(f"y1 < y0 ({self.y1} < {self.y0})")

    @property
    def is_zero_area(self) -> bool:
        return self.x0 == self.x1 or self.y0 == self.y1


ZERO_BOX = BoundingBox(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RegionAnnotation:
    """One region-text pair: a box, its caption, and the caption's span length."""

    box: BoundingBox
    caption: str = ""
    token_count: int = 0

    def __post_init__(self):
        if not isinstance(self.token_count, int) or self.token_count < 0:
            raise SceneValidationError(f"token_count must be a non-negative int: {self.token_count!r}")
        if self.token_count == 0:
            # token_count 0 marks a padding slot: zero-area box, empty caption.
            if self.caption:
                raise SceneValidationError(f"token_count 0 with non-empty caption {self.caption!r}")
            if not self.box.is_zero_area:
                raise SceneValidationError("token_count 0 with a non-degenerate box")

    @property
    def is_padding(self) -> bool:
        return self.token_count == 0


PADDING_REGION = RegionAnnotation(ZERO_BOX, "", 0)


@dataclass(frozen=True)
class Scene:
    """One image's annotations: global caption plus ordered region slots."""

    source_id: str
    image_width: int
    image_height: int
    global_caption: str
    regions: tuple[RegionAnnotation, ...] = ()

    def __post_init__(self):
        if self.image_width < 1 or self.image_height < 1:
            raise SceneValidationError(
                f"image dims must be >= 1: {self.image_width}x{self.image_height}"
            )
        seen_padding = False
        for i, region in enumerate(self.regions):
            if region.is_padding:
                seen_padding = True
            elif seen_padding:
                raise SceneValidationError(f"active region at slot {i} after a padded slot")

    @property
    def active_count(self) -> int:
        return sum(1 for r in self.regions if not r.is_padding)


@dataclass(frozen=True)
class ImageRef:
    """Opaque image handle: identity and pixel dimensions, no decoding."""

    source_id: str
    width: int
    height: int


def caption_token_count(caption: str, cap: int = 16) -> int:
    """Declared span length for a caption: word count, clamped to ``cap``."""
    return min(cap, len(caption.split()))


def _require(mapping: dict, key: str, kind, where: str):
    if key not in mapping:
        raise SceneValidationError(f"{where}: missing required field '{key}'")
    value = mapping[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SceneValidationError(f"{where}.{key}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SceneValidationError(f"{where}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def region_from_dict(raw: dict, where: str = "region") -> RegionAnnotation:
    coords = _require(raw, "box", list, where)
    if len(coords) != 4 or not all(isinstance(v, (int, float)) for v in coords):
        raise SceneValidationError(f"{where}.box: expected [x0, y0, x1, y1], got {coords!r}")
    confidence = _require(raw, "confidence", float, where)
    caption = _require(raw, "caption", str, where)
    token_count = _require(raw, "token_count", int, where)
    try:
        box = BoundingBox(*(float(v) for v in coords), confidence=confidence)
        return RegionAnnotation(box=box, caption=caption, token_count=token_count)
    except SceneValidationError as err:
        raise SceneValidationError(f"{where}: {err}") from None


def scene_from_dict(raw: Any, where: str = "scene") -> Scene:
    if not isinstance(raw, dict):
        raise SceneValidationError(f"{where}: expected a JSON object, got {type(raw).__name__}")
    source_id = _require(raw, "source_id", str, where)
    width = _require(raw, "image_width", int, where)
    height = _require(raw, "image_height", int, where)
    caption = _require(raw, "global_caption", str, where)
    regions_raw = _require(raw, "regions", list, where)
    regions = tuple(
        region_from_dict(entry, where=f"{where}.regions[{i}]")
        for i, entry in enumerate(regions_raw)
    )
    try:
        return Scene(source_id, width, height, caption, regions)
    except SceneValidationError as err:
        raise SceneValidationError(f"{where}: {err}") from None


def region_to_dict(region: RegionAnnotation) -> dict:
    return {
        "box": [region.box.x0, region.box.y0, region.box.x1, region.box.y1],
        "confidence": region.box.confidence,
        "caption": region.caption,
        "token_count": region.token_count,
    }


def scene_to_dict(scene: Scene) -> dict:
    return {
        "source_id": scene.source_id,
        "image_width": scene.image_width,
        "image_height": scene.image_height,
        "global_caption": scene.global_caption,
        "regions": [region_to_dict(r) for r in scene.regions],
    }


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SceneValidationError(f"{path}: not valid JSON ({err})") from None
    return scene_from_dict(raw, where=str(path))


def save_scene(scene: Scene, path: str | Path) -> None:
    payload = json.dumps(scene_to_dict(scene), ensure_ascii=False, indent=2)
    Path(path).write_text(payload + "\n", encoding="utf-8")
