"""Self-check suites runnable from the CLI.

Each suite generates seeded random inputs and checks the construction path
against an independent formulation: the mask suite evaluates the per-entry
membership predicate, the disjoint suite reruns attention per block, the
gradient suite uses central finite differences, the box-prep suite replays
the selection contract with its constants spelled out, and the gate suite
counts injected steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import RegionalMask, assemble_scene, layout_for
from .attention import (
    AttentionBatch,
    BlockWeights,
    masked_attention_backward,
    masked_attention_forward,
)
from .loop import LoopConfig, run_loop
from .prep import PrepConfig, prepare
from .raster import GridSpec, rasterize_scene
from .rng import SeededRng, derive
from .scene import BoundingBox, RegionAnnotation, Scene


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    details: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "details": self.details}


def cell_aligned_box(rng: SeededRng, height: int, width: int, confidence: float) -> BoundingBox:
    """A box whose edges sit on cell boundaries, so center-rule coverage is exact."""
    r0 = rng.integer(0, height)
    r1 = rng.integer(r0, height)
    c0 = rng.integer(0, width)
    c1 = rng.integer(c0, width)
    return BoundingBox(c0 / width, r0 / height, (c1 + 1) / width, (r1 + 1) / height, confidence)


def random_scene(
    rng: SeededRng,
    max_grid: int = 16,
    max_regions: int = 5,
    max_span: int = 8,
) -> tuple[Scene, GridSpec]:
    height = rng.integer(1, max_grid + 1)
    width = rng.integer(1, max_grid + 1)
    count = rng.integer(0, max_regions + 1)
    regions = tuple(
        RegionAnnotation(
            box=cell_aligned_box(rng, height, width, confidence=rng.uniform()),
            caption=f"object {i}",
            token_count=rng.integer(1, max_span + 1),
        )
        for i in range(count)
    )
    scene = Scene(
        source_id=f"scene-{rng.next_u64():016x}",
        image_width=width * 8,
        image_height=height * 8,
        global_caption="synthetic scene",
        regions=regions,
    )
    return scene, GridSpec(height, width, level_id=0)


def predicate_joint(
    region_masks: np.ndarray, background: np.ndarray, lengths: list[int]
) -> np.ndarray:
    """Per-entry predicate evaluation of the joint mask.

    Built from a cell-region membership table and a token span-id vector,
    deliberately not from outer products: text/text means same span,
    text/image means the token's region contains the cell, image/image means
    a shared region or joint background membership.
    """
    membership = np.asarray(region_masks, dtype=bool).T  # (cells, regions)
    span_id = np.repeat(np.arange(len(lengths)), lengths)
    t2t = np.equal.outer(span_id, span_id)
    i2t = membership[:, span_id] if span_id.size else np.zeros((membership.shape[0], 0), bool)
    t2i = membership.T[span_id, :] if span_id.size else np.zeros((0, membership.shape[0]), bool)
    both_background = np.logical_and.outer(background, background)
    shared = np.any(membership[:, None, :] & membership[None, :, :], axis=2)
    i2i = shared | both_background
    tokens = span_id.size
    cells = membership.shape[0]
    joint = np.empty((tokens + cells, tokens + cells), dtype=bool)
    joint[:tokens, :tokens] = t2t
    joint[:tokens, tokens:] = t2i
    joint[tokens:, :tokens] = i2t
    joint[tokens:, tokens:] = i2i
    return joint


def _scene_joint(scene: Scene, grid: GridSpec) -> tuple[RegionalMask, np.ndarray]:
    prepared = prepare(scene.regions)
    level_masks, _ = rasterize_scene(prepared, [grid])
    masks = level_masks[grid.level_id]
    layout = layout_for(masks, prepared)
    assembled = assemble_scene(masks, layout)
    lengths = [n for _, n in layout.spans]
    oracle = predicate_joint(masks.region_masks, masks.background, lengths)
    return assembled, oracle


def suite_masks(scenes: int = 200, seed: int = 0) -> SuiteResult:
    """Joint mask equals the per-entry predicate; structure invariants hold."""
    rng = SeededRng(derive(seed, "suite-masks"))
    mismatches = 0
    structure_failures = 0
    for _ in range(scenes):
        scene, grid = random_scene(rng)
        assembled, oracle = _scene_joint(scene, grid)
        if not np.array_equal(assembled.joint, oracle):
            mismatches += 1
        transpose_ok = np.array_equal(assembled.t2i, assembled.i2t.T)
        symmetric_ok = np.array_equal(assembled.t2t, assembled.t2t.T) and np.array_equal(
            assembled.i2i, assembled.i2i.T
        )
        if not (transpose_ok and symmetric_ok and assembled.joint.diagonal().all()):
            structure_failures += 1
    passed = mismatches == 0 and structure_failures == 0
    return SuiteResult(
        "masks",
        passed,
        {"scenes": scenes, "mismatches": mismatches, "structure_failures": structure_failures},
    )


def disjoint_scene(rng: SeededRng, max_grid: int = 8) -> tuple[Scene, GridSpec]:
    """Scene whose regions occupy pairwise-disjoint column strips."""
    height = rng.integer(2, max_grid + 1)
    width = rng.integer(2, max_grid + 1)
    count = rng.integer(1, min(4, width) + 1)
    cuts = sorted({rng.integer(1, width) for _ in range(count - 1)})
    strips = list(zip([0] + cuts, cuts + [width]))
    regions = []
    for i, (c0, c1) in enumerate(strips):
        r0 = rng.integer(0, height)
        r1 = rng.integer(r0, height)
        regions.append(
            RegionAnnotation(
                box=BoundingBox(c0 / width, r0 / height, c1 / width, (r1 + 1) / height, 1.0),
                caption=f"strip {i}",
                token_count=rng.integer(1, 5),
            )
        )
    scene = Scene(
        source_id=f"disjoint-{rng.next_u64():016x}",
        image_width=width * 8,
        image_height=height * 8,
        global_caption="",
        regions=tuple(regions),
    )
    return scene, GridSpec(height, width, level_id=0)


def suite_disjoint(instances: int = 200, seed: int = 0, tolerance: float = 1e-10) -> SuiteResult:
    """Full masked attention factorizes into per-block runs for disjoint regions."""
    rng = SeededRng(derive(seed, "suite-disjoint"))
    worst = 0.0
    checked = 0
    for _ in range(instances):
        scene, grid = disjoint_scene(rng)
        prepared = prepare(scene.regions)
        level_masks, _ = rasterize_scene(prepared, [grid])
        masks = level_masks[grid.level_id]
        layout = layout_for(masks, prepared)
        assembled = assemble_scene(masks, layout)
        tokens = layout.total_tokens
        seq = tokens + grid.cells
        heads = rng.integer(1, 3)
        batch = AttentionBatch.seeded(heads, seq, rng.integer(2, 5), seed=rng.next_u64())
        full, _ = masked_attention_forward(batch, assembled.joint)

        blocks = []
        for t, (offset, length) in enumerate(layout.spans):
            token_idx = np.arange(offset, offset + length)
            cell_idx = tokens + np.flatnonzero(masks.region_masks[t])
            blocks.append(np.concatenate([token_idx, cell_idx]))
        if masks.background.any():
            blocks.append(tokens + np.flatnonzero(masks.background))
        for index in blocks:
            sub = AttentionBatch(
                q=batch.q[:, index, :],
                k=batch.k[:, index, :],
                v=batch.v[:, index, :],
                head_count=batch.head_count,
                scale=batch.scale,
            )
            expected, _ = masked_attention_forward(sub, None)
            diff = np.abs(full[:, index, :] - expected).max()
            denom = max(np.abs(expected).max(), 1e-30)
            worst = max(worst, diff / denom)
            checked += 1
    passed = worst <= tolerance
    return SuiteResult(
        "disjoint",
        passed,
        {"instances": instances, "blocks_checked": checked, "max_rel_linf": worst, "tolerance": tolerance},
    )


def finite_difference_gradients(
    batch: AttentionBatch, mask: np.ndarray | None, upstream: np.ndarray, step: float = 1e-5
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Central-difference gradients of sum(output * upstream) w.r.t. q, k, v."""

    def loss(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> float:
        shifted = AttentionBatch(q=q, k=k, v=v, head_count=batch.head_count, scale=batch.scale)
        out, _ = masked_attention_forward(shifted, mask)
        return float((out * upstream).sum())

    arrays = {"q": batch.q.copy(), "k": batch.k.copy(), "v": batch.v.copy()}
    grads = []
    for name in ("q", "k", "v"):
        grad = np.zeros_like(arrays[name])
        flat = arrays[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            upper = loss(arrays["q"], arrays["k"], arrays["v"])
            flat[i] = original - step
            lower = loss(arrays["q"], arrays["k"], arrays["v"])
            flat[i] = original
            grad.reshape(-1)[i] = (upper - lower) / (2.0 * step)
        grads.append(grad)
    return tuple(grads)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / scale).max())


def random_row_valid_mask(rng: SeededRng, seq: int) -> np.ndarray:
    mask = np.array(
        [[rng.uniform() < 0.5 for _ in range(seq)] for _ in range(seq)], dtype=bool
    )
    np.fill_diagonal(mask, True)  # keep every row non-empty
    return mask


def suite_grad(
    instances: int = 100, seed: int = 0, tolerance: float = 1e-4, step: float = 1e-5
) -> SuiteResult:
    """Analytic masked-attention gradients match central finite differences."""
    rng = SeededRng(derive(seed, "suite-grad"))
    worst = 0.0
    for _ in range(instances):
        seq = rng.integer(2, 9)
        heads = rng.integer(1, 3)
        head_dim = rng.integer(2, 5)
        batch = AttentionBatch.seeded(heads, seq, head_dim, seed=rng.next_u64())
        mask = random_row_valid_mask(rng, seq)
        upstream = SeededRng(rng.next_u64()).normals(batch.q.size).reshape(batch.q.shape)
        _, state = masked_attention_forward(batch, mask)
        analytic = masked_attention_backward(state, upstream)
        numeric = finite_difference_gradients(batch, mask, upstream, step)
        for a, n in zip(analytic, numeric):
            worst = max(worst, max_relative_error(a, n))
    passed = worst <= tolerance
    return SuiteResult(
        "grad",
        passed,
        {"instances": instances, "max_rel_error": worst, "tolerance": tolerance, "step": step},
    )


def random_candidates(rng: SeededRng) -> list[RegionAnnotation]:
    count = rng.integer(0, 13)
    candidates = []
    for i in range(count):
        confidence = rng.uniform()
        if rng.uniform() < 0.3:
            confidence = round(confidence, 1)  # force ties and threshold hits
        candidates.append(
            RegionAnnotation(
                box=cell_aligned_box(rng, 16, 16, confidence),
                caption=f"candidate {i}",
                token_count=rng.integer(1, 9),
            )
        )
    return candidates


def suite_prep(lists: int = 500, seed: int = 0, cfg: PrepConfig | None = None) -> SuiteResult:
    """Selection contract: threshold 0.4, five slots, descending stable order, zero padding."""
    contract_threshold = 0.4
    contract_slots = 5
    cfg = cfg or PrepConfig()
    rng = SeededRng(derive(seed, "suite-prep"))
    failures: list[str] = []
    for index in range(lists):
        candidates = random_candidates(rng)
        prepared = prepare(candidates, cfg)
        expected = [c for c in candidates if c.box.confidence >= contract_threshold]
        expected.sort(key=lambda c: c.box.confidence, reverse=True)
        expected = expected[:contract_slots]
        if len(prepared.slots) != contract_slots:
            failures.append(
                f"list {index}: {len(prepared.slots)} slots, contract requires {contract_slots}"
            )
        elif list(prepared.active) != expected:
            failures.append(
                f"list {index}: active slots deviate from the confidence-threshold-"
                f"{contract_threshold} / top-{contract_slots} contract"
            )
        elif any(not slot.is_padding for slot in prepared.slots[prepared.active_count :]):
            failures.append(f"list {index}: non-sentinel padding after the active slots")
        if failures:
            break
    passed = not failures
    return SuiteResult(
        "prep",
        passed,
        {
            "lists": lists,
            "threshold": contract_threshold,
            "slots": contract_slots,
            "failures": failures,
        },
    )


def _gate_scene() -> Scene:
    return Scene(
        source_id="gate-check",
        image_width=64,
        image_height=64,
        global_caption="two disjoint strips",
        regions=(
            RegionAnnotation(BoundingBox(0.0, 0.0, 0.5, 1.0, 0.9), "left strip", 3),
            RegionAnnotation(BoundingBox(0.5, 0.0, 1.0, 1.0, 0.8), "right strip", 2),
        ),
    )


def suite_gate(seed: int = 0, injections: tuple[int, ...] = (1, 5, 25, 50)) -> SuiteResult:
    """Prefix gating: exactly K injected steps; K=0 matches a disabled regional stage."""
    scene = _gate_scene()
    weights = BlockWeights.seeded(model_dim=8, head_count=2, seed=derive(seed, "gate-weights"))
    failures: list[str] = []
    for k in injections:
        cfg = LoopConfig(total_steps=50, inject_steps=k, levels=(8,), seed=seed)
        trace, _ = run_loop(scene, cfg, weights)
        flags = [s.regional_applied for s in trace.steps]
        if trace.applied_count() != k:
            failures.append(f"K={k}: {trace.applied_count()} injected steps")
        if flags != sorted(flags, reverse=True):
            failures.append(f"K={k}: injected steps are not a prefix")
    zero_cfg = LoopConfig(total_steps=50, inject_steps=0, levels=(8,), seed=seed)
    disabled_cfg = LoopConfig(
        total_steps=50, inject_steps=50, levels=(8,), seed=seed, regional_enabled=False
    )
    _, zero_latent = run_loop(scene, zero_cfg, weights)
    _, disabled_latent = run_loop(scene, disabled_cfg, weights)
    if not np.array_equal(zero_latent, disabled_latent):
        failures.append("K=0 run differs from the regional-disabled run")
    return SuiteResult(
        "gate", not failures, {"injections": list(injections), "failures": failures}
    )


_SELECTORS = {
    "all": ("masks", "disjoint", "grad", "prep", "gate"),
    "masks": ("masks", "disjoint"),
    "grad": ("grad",),
    "prep": ("prep",),
    "gate": ("gate",),
}


def run_suites(
    selector: str = "all",
    scenes: int = 200,
    seed: int = 0,
    grad_instances: int = 100,
) -> dict:
    """Run the selected suites and return a machine-readable report."""
    if selector not in _SELECTORS:
        raise ValueError(f"unknown suite selector {selector!r}; expected one of {sorted(_SELECTORS)}")
    runners = {
        "masks": lambda: suite_masks(scenes=scenes, seed=seed),
        "disjoint": lambda: suite_disjoint(instances=min(scenes, 200), seed=seed),
        "grad": lambda: suite_grad(instances=grad_instances, seed=seed),
        "prep": lambda: suite_prep(lists=max(scenes, 100), seed=seed),
        "gate": lambda: suite_gate(seed=seed),
    }
    results = [runners[name]() for name in _SELECTORS[selector]]
    return {
        "selector": selector,
        "seed": seed,
        "passed": all(r.passed for r in results),
        "suites": [r.to_dict() for r in results],
    }
