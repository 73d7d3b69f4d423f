"""Assembly of the joint region-text attention mask.

The joint (T+I)x(T+I) bit matrix has text tokens first and decomposes into
four blocks: text-to-text (block-diagonal by caption span), text-to-image /
image-to-text (each region's cells paired with its span, as the transpose
pair), and image-to-image (cells that share a region, plus background cells
among themselves).  Overlapping regions accumulate arithmetically and the
result is binarized: the mask is an attention gate, only set/unset matters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pnm import pgm_bytes
from .prep import PreparedRegions
from .raster import RegionGridMasks, _bits_line, _frozen


@dataclass(frozen=True)
class TextLayout:
    """Contiguous, non-overlapping token spans, one per surviving region."""

    spans: tuple[tuple[int, int], ...]  # (offset, length)
    total_tokens: int

    def __post_init__(self):
        cursor = 0
        for offset, length in self.spans:
            if length < 1:
                raise ValueError(f"span length must be >= 1, got {length}")
            if offset != cursor:
                raise ValueError(f"span offset {offset} breaks contiguity at {cursor}")
            cursor += length
        if cursor != self.total_tokens:
            raise ValueError(f"span lengths sum to {cursor}, not {self.total_tokens}")

    @classmethod
    def from_lengths(cls, lengths: list[int] | tuple[int, ...]) -> "TextLayout":
        offsets = np.concatenate(([0], np.cumsum(lengths)[:-1])) if lengths else []
        spans = tuple((int(o), int(n)) for o, n in zip(offsets, lengths))
        return cls(spans=spans, total_tokens=int(sum(lengths)))

    def span_ids(self) -> np.ndarray:
        """Span index of every token position, shape (total_tokens,)."""
        ids = np.empty(self.total_tokens, dtype=np.int64)
        for t, (offset, length) in enumerate(self.spans):
            ids[offset : offset + length] = t
        return ids


def layout_for(masks: RegionGridMasks, prepared: PreparedRegions) -> TextLayout:
    """Token layout for one level: spans of the slots that survived rasterization."""
    lengths = [prepared.slots[slot].token_count for slot in masks.slot_indices]
    return TextLayout.from_lengths(lengths)


@dataclass(frozen=True)
class RegionalMask:
    """The four-block joint attention mask."""

    t2t: np.ndarray  # (T, T)
    t2i: np.ndarray  # (T, I)
    i2t: np.ndarray  # (I, T)
    i2i: np.ndarray  # (I, I)
    joint: np.ndarray  # (T+I, T+I), text tokens first

    @property
    def text_tokens(self) -> int:
        return self.t2t.shape[0]

    @property
    def image_cells(self) -> int:
        return self.i2i.shape[0]


def build_i2t(masks: RegionGridMasks, layout: TextLayout) -> np.ndarray:
    """Image-to-text block: cell row i gets ones over the spans of its regions."""
    if masks.region_count != len(layout.spans):
        raise ValueError(
            f"{masks.region_count} region masks but {len(layout.spans)} text spans"
        )
    out = np.zeros((masks.grid.cells, layout.total_tokens), dtype=bool)
    for region, (offset, length) in zip(masks.region_masks, layout.spans):
        out[:, offset : offset + length] |= region[:, None]
    return _frozen(out)


def build_t2i(i2t: np.ndarray) -> np.ndarray:
    """Text-to-image block: exact transpose of image-to-text."""
    return _frozen(np.asarray(i2t, dtype=bool).T.copy())


def build_i2i(masks: RegionGridMasks) -> np.ndarray:
    """Image self-attention block: share a region, or both background."""
    cells = masks.grid.cells
    acc = np.zeros((cells, cells), dtype=np.int64)
    for region in masks.region_masks:
        row = region.astype(np.int64)
        acc += np.outer(row, row)
    bg = masks.background.astype(np.int64)
    acc += np.outer(bg, bg)
    return _frozen(acc > 0)


def build_t2t(layout: TextLayout) -> np.ndarray:
    """Text self-attention block: block-diagonal over caption spans."""
    out = np.zeros((layout.total_tokens, layout.total_tokens), dtype=bool)
    for offset, length in layout.spans:
        out[offset : offset + length, offset : offset + length] = True
    return _frozen(out)


def assemble(
    t2t: np.ndarray, t2i: np.ndarray, i2t: np.ndarray, i2i: np.ndarray
) -> RegionalMask:
    """Compose the four blocks into the joint mask, validating every invariant."""
    t2t, t2i, i2t, i2i = (np.asarray(m, dtype=bool) for m in (t2t, t2i, i2t, i2i))
    tokens, cells = t2t.shape[0], i2i.shape[0]
    if t2t.shape != (tokens, tokens) or i2i.shape != (cells, cells):
        raise ValueError(f"t2t {t2t.shape} and i2i {i2i.shape} must be square")
    if t2i.shape != (tokens, cells):
        raise ValueError(f"t2i is {t2i.shape}, expected ({tokens}, {cells})")
    if i2t.shape != (cells, tokens):
        raise ValueError(f"i2t is {i2t.shape}, expected ({cells}, {tokens})")
    if not np.array_equal(t2i, i2t.T):
        raise ValueError("t2i is not the transpose of i2t")
    if not np.array_equal(t2t, t2t.T) or not np.array_equal(i2i, i2i.T):
        raise ValueError("t2t and i2i must be symmetric")
    joint = np.block([[t2t, t2i], [i2t, i2i]]) if tokens else i2i.copy()
    if not joint.diagonal().all():
        raise ValueError("joint mask has an unset diagonal entry")
    return RegionalMask(
        t2t=_frozen(t2t), t2i=_frozen(t2i), i2t=_frozen(i2t), i2i=_frozen(i2i),
        joint=_frozen(joint),
    )


def assemble_scene(
    masks: RegionGridMasks, layout: TextLayout, global_tokens: int = 0
) -> RegionalMask:
    """Build all four blocks for one level and compose them.

    ``global_tokens > 0`` appends the global caption as a trailing span that
    pairs with every image cell (its own text block; the image-image block is
    untouched, the background definition stays region-only).
    """
    i2t = build_i2t(masks, layout)
    t2t = build_t2t(layout)
    if global_tokens > 0:
        cells = masks.grid.cells
        i2t = np.hstack([i2t, np.ones((cells, global_tokens), dtype=bool)])
        expanded = np.zeros((layout.total_tokens + global_tokens,) * 2, dtype=bool)
        expanded[: layout.total_tokens, : layout.total_tokens] = t2t
        expanded[layout.total_tokens :, layout.total_tokens :] = True
        t2t = expanded
    return assemble(t2t, build_t2i(i2t), i2t, build_i2i(masks))


def rattn_text(mask: RegionalMask) -> str:
    """RATTN v1 dump: header then T+I lines of 0/1 for the joint mask."""
    lines = [f"RATTN v1 {mask.text_tokens} {mask.image_cells}"]
    lines.extend(_bits_line(row) for row in mask.joint)
    return "\n".join(lines) + "\n"


def write_rattn(mask: RegionalMask, path: str | Path) -> None:
    Path(path).write_text(rattn_text(mask), encoding="ascii")


def parse_rattn(text: str) -> tuple[int, int, np.ndarray]:
    """Inverse of :func:`rattn_text`: (T, I, joint matrix)."""
    lines = text.splitlines()
    header = lines[0].split()
    if header[:2] != ["RATTN", "v1"] or len(header) != 4:
        raise ValueError(f"bad RATTN header: {lines[0]!r}")
    tokens, cells = int(header[2]), int(header[3])
    size = tokens + cells
    rows = [np.frombuffer(line.encode("ascii"), dtype=np.uint8) - ord("0") for line in lines[1:]]
    if len(rows) != size or any(row.size != size for row in rows):
        raise ValueError("RATTN body does not match its header")
    return tokens, cells, np.array(rows, dtype=bool)


def joint_pgm_bytes(mask: RegionalMask) -> bytes:
    """Render the joint mask as a grayscale PGM (set entries white)."""
    return pgm_bytes(np.where(mask.joint, 255, 0).astype(np.uint8))
