"""Masked multi-head scaled-dot-product attention and the two-stage block.

Masking works by exclusion: disallowed logits never enter the row max and
their softmax weight is exactly 0.0 (exp(-inf)), never a small number.  All
arithmetic is f64 and every reduction uses numpy's fixed order, so identical
inputs give bitwise-identical outputs and the gradient check can run at tight
tolerances.

The two-stage block follows the refinement scheme: an unmasked global
cross-attention over the global caption first, then a masked joint pass over
[text; image] whose output projection and residual refine the image rows
only (text rows are discarded).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import RegionalMask
from .rng import SeededRng


def _check_finite(name: str, array: np.ndarray) -> None:
    if not np.isfinite(array).all():
        raise ValueError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class AttentionBatch:
    """Per-head Q/K/V stacks of shape (heads, seq, head_dim), f64."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    head_count: int
    scale: float

    def __post_init__(self):
        for name in ("q", "k", "v"):
            array = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, array)
            if array.ndim != 3:
                raise ValueError(f"{name} must be (heads, seq, head_dim), got {array.shape}")
            if array.shape != self.q.shape:
                raise ValueError("q, k, v must share one shape")
            _check_finite(name, array)
        if self.head_count != self.q.shape[0] or self.head_count < 1:
            raise ValueError(f"head_count {self.head_count} != leading dim {self.q.shape[0]}")

    @property
    def seq_len(self) -> int:
        return self.q.shape[1]

    @property
    def head_dim(self) -> int:
        return self.q.shape[2]

    @classmethod
    def seeded(cls, head_count: int, seq_len: int, head_dim: int, seed: int) -> "AttentionBatch":
        rng = SeededRng(seed)
        shape = (head_count, seq_len, head_dim)
        q, k, v = (rng.normals(head_count * seq_len * head_dim).reshape(shape) for _ in range(3))
        return cls(q=q, k=k, v=v, head_count=head_count, scale=head_dim**-0.5)


@dataclass
class AttentionState:
    """Forward-pass state saved for the analytic backward."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray  # (heads, rows, cols) softmax output
    scale: float


def _masked_softmax(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    """Row softmax over the allowed entries only; disallowed weights are exact 0."""
    masked = logits if mask is None else np.where(mask, logits, -np.inf)
    shifted = masked - masked.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=-1, keepdims=True)


def _attend(q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: np.ndarray | None, scale: float):
    logits = scale * (q @ k.T)
    weights = _masked_softmax(logits, mask)
    return weights @ v, weights


def masked_attention_forward(
    batch: AttentionBatch, mask: np.ndarray | None
) -> tuple[np.ndarray, AttentionState]:
    """Attention over every head under one shared seq x seq mask.

    ``mask=None`` means fully allowed; otherwise every mask row must have at
    least one set entry (an empty row signals an upstream construction bug).
    Returns the per-head outputs and the state for the backward pass.
    """
    seq = batch.seq_len
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (seq, seq):
            raise ValueError(f"mask shape {mask.shape} != ({seq}, {seq})")
        empty = np.flatnonzero(~mask.any(axis=1))
        if empty.size:
            raise ValueError(f"mask row {empty[0]} has no allowed entries")
    outputs = np.empty_like(batch.q)
    weights = np.empty((batch.head_count, seq, seq), dtype=np.float64)
    for h in range(batch.head_count):
        outputs[h], weights[h] = _attend(batch.q[h], batch.k[h], batch.v[h], mask, batch.scale)
    state = AttentionState(q=batch.q, k=batch.k, v=batch.v, weights=weights, scale=batch.scale)
    return outputs, state


def masked_attention_backward(
    state: AttentionState, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients w.r.t. Q, K, V given the upstream output gradient.

    Disallowed positions carry weight exactly 0, so they contribute exactly
    zero gradient through the softmax.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != state.q.shape:
        raise ValueError(f"upstream shape {upstream.shape} != {state.q.shape}")
    _check_finite("upstream", upstream)
    dq = np.empty_like(state.q)
    dk = np.empty_like(state.k)
    dv = np.empty_like(state.v)
    for h in range(state.q.shape[0]):
        p = state.weights[h]
        d_out = upstream[h]
        dv[h] = p.T @ d_out
        dp = d_out @ state.v[h].T
        d_logits = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
        dq[h] = state.scale * (d_logits @ state.k[h])
        dk[h] = state.scale * (d_logits.T @ state.q[h])
    return dq, dk, dv


@dataclass(frozen=True)
class BlockWeights:
    """Projection matrices of one transformer block plus the residual switch.

    The output projection realizes the block's post-attention processing; the
    residual switch controls whether its result is added back onto the
    refined rows.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    head_count: int
    residual: bool = True

    def __post_init__(self):
        dim = np.asarray(self.w_q).shape[0]
        for name in ("w_q", "w_k", "w_v", "w_o"):
            array = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, array)
            if array.shape != (dim, dim):
                raise ValueError(f"{name} must be ({dim}, {dim}), got {array.shape}")
            _check_finite(name, array)
        if self.head_count < 1 or dim % self.head_count != 0:
            raise ValueError(f"model_dim {dim} not divisible into {self.head_count} heads")

    @property
    def model_dim(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.head_count

    @classmethod
    def seeded(
        cls, model_dim: int, head_count: int, seed: int, residual: bool = True
    ) -> "BlockWeights":
        rng = SeededRng(seed)
        scale = model_dim**-0.5
        mats = [
            rng.normals(model_dim * model_dim).reshape(model_dim, model_dim) * scale
            for _ in range(4)
        ]
        return cls(*mats, head_count=head_count, residual=residual)

    @classmethod
    def identity(cls, model_dim: int, head_count: int = 1, residual: bool = True) -> "BlockWeights":
        eye = np.eye(model_dim)
        return cls(eye, eye.copy(), eye.copy(), eye.copy(), head_count=head_count, residual=residual)


@dataclass(frozen=True)
class RegionalBlockInput:
    """Inputs of the masked refinement stage over the [text; image] sequence."""

    image_hidden: np.ndarray  # (I, model_dim), output of the global stage
    text_hidden: np.ndarray  # (T, model_dim), regional caption embeddings
    mask: RegionalMask

    def __post_init__(self):
        image = np.asarray(self.image_hidden, dtype=np.float64)
        text = np.asarray(self.text_hidden, dtype=np.float64)
        object.__setattr__(self, "image_hidden", image)
        object.__setattr__(self, "text_hidden", text)
        if image.ndim != 2 or text.ndim != 2 or image.shape[1] != text.shape[1]:
            raise ValueError("image_hidden and text_hidden must be 2-d with equal model_dim")
        if image.shape[0] != self.mask.image_cells or text.shape[0] != self.mask.text_tokens:
            raise ValueError(
                f"hidden sizes ({text.shape[0]}, {image.shape[0]}) do not match mask "
                f"({self.mask.text_tokens}, {self.mask.image_cells})"
            )


def _split_heads(x: np.ndarray, head_count: int) -> np.ndarray:
    n, dim = x.shape
    return x.reshape(n, head_count, dim // head_count).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    heads, n, head_dim = x.shape
    return x.transpose(1, 0, 2).reshape(n, heads * head_dim)


def _project_attend(
    queries: np.ndarray,
    keys_values: np.ndarray,
    weights: BlockWeights,
    mask: np.ndarray | None,
) -> np.ndarray:
    q = _split_heads(queries @ weights.w_q, weights.head_count)
    k = _split_heads(keys_values @ weights.w_k, weights.head_count)
    v = _split_heads(keys_values @ weights.w_v, weights.head_count)
    scale = weights.head_dim**-0.5
    per_head = np.empty_like(q)
    for h in range(weights.head_count):
        per_head[h], _ = _attend(q[h], k[h], v[h], mask, scale)
    return _merge_heads(per_head) @ weights.w_o


def regional_block_forward(inp: RegionalBlockInput, weights: BlockWeights) -> np.ndarray:
    """Masked joint self-attention refining the image rows.

    The joint sequence is [text_hidden; image_hidden]; after attention under
    the joint mask and the output projection, only the image rows are kept
    (with the residual added when enabled).
    """
    if inp.image_hidden.shape[1] != weights.model_dim:
        raise ValueError(
            f"model_dim {inp.image_hidden.shape[1]} does not match weights {weights.model_dim}"
        )
    tokens = inp.text_hidden.shape[0]
    joint = np.vstack([inp.text_hidden, inp.image_hidden])
    refined = _project_attend(joint, joint, weights, inp.mask.joint)[tokens:]
    return inp.image_hidden + refined if weights.residual else refined


def global_stage_forward(
    image_hidden: np.ndarray, global_hidden: np.ndarray, weights: BlockWeights
) -> np.ndarray:
    """Unmasked cross-attention: image queries over global-caption keys/values.

    A zero-length global caption skips the stage (identity).
    """
    image_hidden = np.asarray(image_hidden, dtype=np.float64)
    global_hidden = np.asarray(global_hidden, dtype=np.float64)
    if global_hidden.shape[0] == 0:
        return image_hidden
    if image_hidden.shape[1] != weights.model_dim or global_hidden.shape[1] != weights.model_dim:
        raise ValueError("hidden dims do not match the block weights")
    attended = _project_attend(image_hidden, global_hidden, weights, None)
    return image_hidden + attended if weights.residual else attended
