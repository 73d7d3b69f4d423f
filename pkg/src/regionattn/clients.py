"""Detector and captioner clients.

Two implementations of each interface: a file-backed mock that replays
recordings (canonical, used by all tests) and a generic JSON-over-HTTP client
(optional, off by default).  The mock is pure: identical inputs always return
identical outputs.
"""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .scene import (
    BoundingBox,
    ImageRef,
    RegionAnnotation,
    Scene,
    SceneValidationError,
)

log = logging.getLogger(__name__)


class ClientError(RuntimeError):
    """Base error for detector/captioner clients."""


class NoRecordingError(ClientError):
    """The mock directory has no recording for the requested key."""


class TransportError(ClientError):
    """The HTTP endpoint could not be reached or timed out."""


class DetectorClient(Protocol):
    def detect(self, image: ImageRef) -> tuple[BoundingBox, ...]: ...


class CaptionerClient(Protocol):
    def caption(self, image: ImageRef, box: BoundingBox | None = None) -> str: ...


def _box_from_entry(entry: dict, where: str) -> BoundingBox:
    if not isinstance(entry, dict) or "box" not in entry or "confidence" not in entry:
        raise ClientError(f"{where}: malformed detection entry {entry!r}")
    coords = entry["box"]
    if not isinstance(coords, list) or len(coords) != 4:
        raise ClientError(f"{where}: malformed box {coords!r}")
    try:
        return BoundingBox(*(float(v) for v in coords), confidence=float(entry["confidence"]))
    except (TypeError, SceneValidationError) as err:
        raise ClientError(f"{where}: invalid box ({err})") from None


class MockSceneClient:
    """Replays detections and captions recorded under a directory.

    Layout: ``<dir>/<source_id>.detections.json`` is a list of
    ``{"box": [x0, y0, x1, y1], "confidence": c}`` entries in detection order;
    ``<dir>/<source_id>.captions.json`` is ``{"global": str, "regions": [str]}``
    with one caption per detection index.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def _load(self, name: str):
        path = self.directory / name
        if not path.is_file():
            raise NoRecordingError(f"no recording: {path}")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ClientError(f"{path}: not valid JSON ({err})") from None

    def detect(self, image: ImageRef) -> tuple[BoundingBox, ...]:
        raw = self._load(f"{image.source_id}.detections.json")
        if not isinstance(raw, list):
            raise ClientError(f"{image.source_id}: detections recording must be a list")
        return tuple(
            _box_from_entry(entry, f"{image.source_id}.detections[{i}]")
            for i, entry in enumerate(raw)
        )

    def caption(self, image: ImageRef, box: BoundingBox | None = None) -> str:
        raw = self._load(f"{image.source_id}.captions.json")
        if not isinstance(raw, dict):
            raise ClientError(f"{image.source_id}: captions recording must be an object")
        if box is None:
            if "global" not in raw:
                raise NoRecordingError(f"no recording: global caption for {image.source_id}")
            return str(raw["global"])
        # Captions are keyed by detection index; resolve the box against the
        # recorded detections by exact coordinate match.
        detections = self.detect(image)
        index = next(
            (
                i
                for i, det in enumerate(detections)
                if (det.x0, det.y0, det.x1, det.y1) == (box.x0, box.y0, box.x1, box.y1)
            ),
            None,
        )
        captions = raw.get("regions")
        if index is None or not isinstance(captions, list) or index >= len(captions):
            raise NoRecordingError(
                f"no recording: caption for {image.source_id} box "
                f"[{box.x0}, {box.y0}, {box.x1}, {box.y1}]"
            )
        return str(captions[index])


@dataclass(frozen=True)
class HttpConfig:
    """Endpoint settings for the JSON-over-HTTP client."""

    endpoint: str
    timeout: float = 10.0
    token_env: str | None = None


class HttpSceneClient:
    """POSTs ``{"op": ..., "source_id": ..., "box": ...}`` and parses JSON back."""

    def __init__(self, config: HttpConfig):
        self.config = config

    def _post(self, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.token_env:
            token = os.environ.get(self.config.token_env)
            if token is None:
                raise ClientError(f"token env var {self.config.token_env!r} is not set")
            headers["Authorization"] = f"Bearer {token}"
        request = urllib.request.Request(
            self.config.endpoint,
            data=json.dumps(payload).encode("utf-8"),
            headers=headers,
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.config.timeout) as response:
                body = response.read()
        except (urllib.error.URLError, TimeoutError, OSError) as err:
            raise TransportError(f"{self.config.endpoint}: {err}") from None
        try:
            parsed = json.loads(body)
        except json.JSONDecodeError as err:
            raise ClientError(f"{self.config.endpoint}: malformed response ({err})") from None
        if not isinstance(parsed, dict):
            raise ClientError(f"{self.config.endpoint}: malformed response {parsed!r}")
        return parsed

    def detect(self, image: ImageRef) -> tuple[BoundingBox, ...]:
        parsed = self._post({"op": "detect", "source_id": image.source_id})
        boxes = parsed.get("boxes")
        if not isinstance(boxes, list):
            raise ClientError(f"{self.config.endpoint}: response missing 'boxes' list")
        return tuple(
            _box_from_entry(entry, f"{self.config.endpoint} boxes[{i}]")
            for i, entry in enumerate(boxes)
        )

    def caption(self, image: ImageRef, box: BoundingBox | None = None) -> str:
        payload: dict = {"op": "caption", "source_id": image.source_id}
        payload["box"] = None if box is None else [box.x0, box.y0, box.x1, box.y1]
        parsed = self._post(payload)
        if "caption" not in parsed:
            raise ClientError(f"{self.config.endpoint}: response missing 'caption'")
        return str(parsed["caption"])


def detect(image: ImageRef, client: DetectorClient) -> tuple[BoundingBox, ...]:
    """Raw candidate boxes with confidences, unfiltered."""
    return client.detect(image)


def caption(image: ImageRef, box: BoundingBox | None, client: CaptionerClient) -> str:
    """Caption text; ``box=None`` asks for the global caption."""
    text = client.caption(image, box)
    if not text:
        log.warning("empty caption for %s (box=%s)", image.source_id, box)
    return text


def build_scene_from_clients(
    image: ImageRef,
    detector: DetectorClient,
    captioner: CaptionerClient,
    span_tokens: int = 8,
) -> Scene:
    """Assemble a raw (unprepared) scene by querying both clients.

    Every regional caption gets the fixed declared span length
    ``span_tokens``; downstream preparation applies the confidence filter,
    sorting, truncation, and padding.
    """
    if span_tokens < 1:
        raise ValueError(f"span_tokens must be >= 1, got {span_tokens}")
    boxes = detect(image, detector)
    global_caption = caption(image, None, captioner)
    regions = tuple(
        RegionAnnotation(box=box, caption=caption(image, box, captioner), token_count=span_tokens)
        for box in boxes
    )
    return Scene(
        source_id=image.source_id,
        image_width=image.width,
        image_height=image.height,
        global_caption=global_caption,
        regions=regions,
    )
