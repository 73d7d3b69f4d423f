"""Desk-scale denoising loop with prefix-gated regional attention injection.

Each step runs the global cross-attention stage and, while the injection
gate is open (the first K of total_steps), the masked regional refinement.
The state update is the fixed convex blend x <- (1 - b_s) * x + b_s * pred
with b_s = 0.5 * (s + 1) / total_steps; the loop exists to exercise gating
and block wiring, not to synthesize images.  Caption and latent embeddings
are drawn from the seeded generator, so runs are bitwise reproducible.

The loop steps the first configured level; all levels get masks built and
dumped by the artifact builder.  Scenes with no surviving region at the loop
level skip the regional stage entirely: the mask degenerates to all-ones and
carries no region-text structure.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import assemble_scene, joint_pgm_bytes, layout_for, rattn_text
from .attention import BlockWeights, RegionalBlockInput, global_stage_forward, regional_block_forward
from .prep import PrepConfig, prepare
from .raster import GridSpec, mask_pgm_bytes, rasterize_scene, rmask_text
from .rng import SeededRng, derive
from .scene import Scene, caption_token_count, load_scene

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoopConfig:
    total_steps: int = 50
    inject_steps: int = 50
    levels: tuple[int, ...] = (64, 32, 16, 8)
    seed: int = 0
    regional_enabled: bool = True
    rule: str = "center"
    prep: PrepConfig = field(default_factory=PrepConfig)
    global_tokens_cap: int = 16

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1: {self.total_steps}")
        if not 0 <= self.inject_steps <= self.total_steps:
            raise ValueError(
                f"inject_steps {self.inject_steps} out of [0, {self.total_steps}]"
            )
        if not self.levels:
            raise ValueError("at least one grid level is required")

    def grids(self) -> tuple[GridSpec, ...]:
        return tuple(GridSpec(side, side, side) for side in self.levels)


@dataclass(frozen=True)
class StepRecord:
    index: int
    regional_applied: bool
    mean: float
    variance: float
    l2: float


@dataclass(frozen=True)
class StepTrace:
    steps: tuple[StepRecord, ...]

    def applied_count(self) -> int:
        return sum(1 for s in self.steps if s.regional_applied)

    def to_dicts(self) -> list[dict]:
        return [
            {
                "index": s.index,
                "regional_applied": s.regional_applied,
                "mean": s.mean,
                "variance": s.variance,
                "l2": s.l2,
            }
            for s in self.steps
        ]


def _stats(latent: np.ndarray) -> tuple[float, float, float]:
    return (
        float(latent.mean()),
        float(latent.var()),
        float(np.sqrt((latent * latent).sum())),
    )


def run_loop(
    scene: Scene, cfg: LoopConfig, weights: BlockWeights
) -> tuple[StepTrace, np.ndarray]:
    """Run the gated loop; returns the per-step trace and the final latent."""
    prepared = prepare(scene.regions, cfg.prep)
    grids = cfg.grids()
    level_masks, _ = rasterize_scene(prepared, grids, cfg.rule)
    loop_masks = level_masks[grids[0].level_id]
    layout = layout_for(loop_masks, prepared)
    regional = assemble_scene(loop_masks, layout) if layout.total_tokens else None

    dim = weights.model_dim
    cells = loop_masks.grid.cells
    latent = SeededRng(derive(cfg.seed, "latent")).normals(cells * dim).reshape(cells, dim)
    text_hidden = (
        SeededRng(derive(cfg.seed, "text"))
        .normals(layout.total_tokens * dim)
        .reshape(layout.total_tokens, dim)
    )
    global_count = caption_token_count(scene.global_caption, cfg.global_tokens_cap)
    global_hidden = (
        SeededRng(derive(cfg.seed, "global")).normals(global_count * dim).reshape(global_count, dim)
    )

    effective_k = cfg.inject_steps if cfg.regional_enabled else 0
    records = []
    for step in range(cfg.total_steps):
        predicted = global_stage_forward(latent, global_hidden, weights)
        gate_open = step < effective_k
        if gate_open and regional is not None:
            predicted = regional_block_forward(
                RegionalBlockInput(image_hidden=predicted, text_hidden=text_hidden, mask=regional),
                weights,
            )
        blend = 0.5 * (step + 1) / cfg.total_steps
        latent = (1.0 - blend) * latent + blend * predicted
        mean, variance, l2 = _stats(latent)
        records.append(
            StepRecord(index=step, regional_applied=gate_open, mean=mean, variance=variance, l2=l2)
        )
    return StepTrace(steps=tuple(records)), latent


def build_all(scene_path: str | Path, cfg: LoopConfig, out_dir: str | Path) -> dict:
    """Persist RMASK/RATTN dumps and PGM renders per level, plus a JSON report.

    All written artifacts are byte-deterministic; wall-clock timing goes to
    the logger only.
    """
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = load_scene(scene_path)
    prepared = prepare(scene.regions, cfg.prep)
    level_masks, drops = rasterize_scene(prepared, cfg.grids(), cfg.rule)

    report: dict = {
        "source_id": scene.source_id,
        "active_count": prepared.active_count,
        "rule": cfg.rule,
        "prep": {
            "confidence_threshold": cfg.prep.confidence_threshold,
            "max_regions": cfg.prep.max_regions,
        },
        "dropped": [
            {"level": d.level_id, "slot": d.slot_index} for d in drops
        ],
        "levels": {},
    }
    for level_id in sorted(level_masks):
        masks = level_masks[level_id]
        layout = layout_for(masks, prepared)
        joint = assemble_scene(masks, layout)
        (out / f"level_{level_id}.rmask").write_text(rmask_text(masks), encoding="ascii")
        (out / f"level_{level_id}.rattn").write_text(rattn_text(joint), encoding="ascii")
        for row, slot in enumerate(masks.slot_indices):
            (out / f"level_{level_id}_region{slot}.pgm").write_bytes(
                mask_pgm_bytes(masks.region_masks[row], masks.grid)
            )
        (out / f"level_{level_id}_background.pgm").write_bytes(
            mask_pgm_bytes(masks.background, masks.grid)
        )
        (out / f"level_{level_id}_joint.pgm").write_bytes(joint_pgm_bytes(joint))
        report["levels"][str(level_id)] = {
            "height": masks.grid.height,
            "width": masks.grid.width,
            "regions": masks.region_count,
            "tokens": layout.total_tokens,
            "cells": masks.grid.cells,
        }
    write_json(report, out / "report.json")
    log.info("build_all wrote %s in %.3fs", out, time.perf_counter() - started)
    return report


def write_json(payload: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
