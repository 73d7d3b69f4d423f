"""Rasterize normalized boxes onto latent grids and derive the background.

Cells are addressed row-major (index = row * width + col).  The default
"center" rule sets a cell when its center lies inside the closed box; the
alternative "overlap" rule sets it when the cell rectangle and the box have a
non-empty closed intersection.  Regions are re-rasterized from their
normalized coordinates at every level, never pooled across levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .pnm import pgm_bytes
from .prep import PreparedRegions
from .scene import BoundingBox

RULES = ("center", "overlap")


@dataclass(frozen=True)
class GridSpec:
    """One latent grid: cell counts and an integer level label."""

    height: int
    width: int
    level_id: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid dims must be >= 1: {self.height}x{self.width}")

    @property
    def cells(self) -> int:
        return self.height * self.width


def _frozen(mask: np.ndarray) -> np.ndarray:
    mask = np.ascontiguousarray(mask, dtype=bool)
    mask.flags.writeable = False
    return mask


@dataclass(frozen=True)
class RegionGridMasks:
    """Per-level flattened region masks plus the derived background.

    ``region_masks`` has one row per surviving region; ``slot_indices`` maps
    each row back to its slot in the prepared scene.
    """

    grid: GridSpec
    region_masks: np.ndarray  # (regions, cells) bool
    background: np.ndarray  # (cells,) bool
    slot_indices: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "region_masks", _frozen(np.atleast_2d(self.region_masks)))
        object.__setattr__(self, "background", _frozen(self.background))
        if self.region_masks.size == 0:
            object.__setattr__(
                self, "region_masks", _frozen(np.zeros((0, self.grid.cells), dtype=bool))
            )
        if self.region_masks.shape[1] != self.grid.cells:
            raise ValueError(
                f"mask length {self.region_masks.shape[1]} != cells {self.grid.cells}"
            )
        if self.background.shape != (self.grid.cells,):
            raise ValueError(f"background length {self.background.shape} != {self.grid.cells}")
        if len(self.slot_indices) != self.region_masks.shape[0]:
            raise ValueError("slot_indices must have one entry per region mask")
        if not np.array_equal(self.background, ~np.any(self.region_masks, axis=0)):
            raise ValueError("background is not the complement of the region union")

    @property
    def region_count(self) -> int:
        return self.region_masks.shape[0]


@dataclass(frozen=True)
class DropRecord:
    """A region that rasterized to all zeros at one level."""

    level_id: int
    slot_index: int


def rasterize_box(box: BoundingBox, grid: GridSpec, rule: str = "center") -> np.ndarray:
    """Flattened bit vector of the cells covered by ``box`` under ``rule``."""
    if rule not in RULES:
        raise ValueError(f"unknown coverage rule {rule!r}; expected one of {RULES}")
    if rule == "center":
        row_centers = (np.arange(grid.height) + 0.5) / grid.height
        col_centers = (np.arange(grid.width) + 0.5) / grid.width
        rows = (row_centers >= box.y0) & (row_centers <= box.y1)
        cols = (col_centers >= box.x0) & (col_centers <= box.x1)
    else:
        row_lo = np.arange(grid.height) / grid.height
        row_hi = (np.arange(grid.height) + 1) / grid.height
        col_lo = np.arange(grid.width) / grid.width
        col_hi = (np.arange(grid.width) + 1) / grid.width
        rows = np.minimum(row_hi, box.y1) >= np.maximum(row_lo, box.y0)
        cols = np.minimum(col_hi, box.x1) >= np.maximum(col_lo, box.x0)
    return _frozen(np.outer(rows, cols).reshape(-1))


def background_mask(region_masks: Sequence[np.ndarray] | np.ndarray, grid: GridSpec) -> np.ndarray:
    """Complement of the bitwise OR of all region masks."""
    stack = np.atleast_2d(np.asarray(region_masks, dtype=bool))
    if stack.size == 0:
        stack = np.zeros((0, grid.cells), dtype=bool)
    if stack.shape[1] != grid.cells:
        raise ValueError(f"mask length {stack.shape[1]} != cells {grid.cells}")
    return _frozen(~np.any(stack, axis=0))


def rasterize_scene(
    prepared: PreparedRegions,
    grids: Iterable[GridSpec],
    rule: str = "center",
) -> tuple[dict[int, RegionGridMasks], tuple[DropRecord, ...]]:
    """Rasterize every active slot at every level.

    Regions that rasterize to all zeros at a level are dropped from that
    level (recorded in the drop log) so no downstream token row can be empty.
    Padded slots are never rasterized.
    """
    levels: dict[int, RegionGridMasks] = {}
    drops: list[DropRecord] = []
    for grid in grids:
        if grid.level_id in levels:
            raise ValueError(f"duplicate level_id {grid.level_id}")
        masks = []
        slots = []
        for slot_index, region in enumerate(prepared.active):
            mask = rasterize_box(region.box, grid, rule)
            if not mask.any():
                drops.append(DropRecord(grid.level_id, slot_index))
                continue
            masks.append(mask)
            slots.append(slot_index)
        stack = np.array(masks, dtype=bool) if masks else np.zeros((0, grid.cells), dtype=bool)
        levels[grid.level_id] = RegionGridMasks(
            grid=grid,
            region_masks=stack,
            background=background_mask(stack, grid),
            slot_indices=tuple(slots),
        )
    return levels, tuple(drops)


def _bits_line(bits: np.ndarray) -> str:
    return (np.asarray(bits, dtype=np.uint8) + ord("0")).tobytes().decode("ascii")


def rmask_text(masks: RegionGridMasks) -> str:
    """RMASK v1 dump: header then one 0/1 line per region, background last."""
    grid = masks.grid
    lines = [f"RMASK v1 {grid.height} {grid.width} {masks.region_count}"]
    lines.extend(_bits_line(row) for row in masks.region_masks)
    lines.append(_bits_line(masks.background))
    return "\n".join(lines) + "\n"


def write_rmask(masks: RegionGridMasks, path: str | Path) -> None:
    Path(path).write_text(rmask_text(masks), encoding="ascii")


def parse_rmask(text: str) -> tuple[int, int, np.ndarray, np.ndarray]:
    """Inverse of :func:`rmask_text`: (height, width, region rows, background)."""
    lines = text.splitlines()
    header = lines[0].split()
    if header[:2] != ["RMASK", "v1"] or len(header) != 5:
        raise ValueError(f"bad RMASK header: {lines[0]!r}")
    height, width, count = (int(v) for v in header[2:])
    rows = [np.frombuffer(line.encode("ascii"), dtype=np.uint8) - ord("0") for line in lines[1:]]
    if len(rows) != count + 1 or any(row.size != height * width for row in rows):
        raise ValueError("RMASK body does not match its header")
    body = np.array(rows, dtype=bool)
    return height, width, body[:count], body[count]


def mask_pgm_bytes(mask: np.ndarray, grid: GridSpec) -> bytes:
    """Render a flattened mask as a PGM (set cells white) for inspection."""
    cells = np.asarray(mask, dtype=bool).reshape(grid.height, grid.width)
    return pgm_bytes(np.where(cells, 255, 0).astype(np.uint8))
