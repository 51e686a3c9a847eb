"""Attention over token sequences, including the shifted-window partition.

Windows follow the Swin recipe without the attention mask or relative
position bias: the token grid is zero padded on the bottom/right up to a
multiple of the window, cyclically shifted by ``-shift``, and cut into
non-overlapping ``window x window`` blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import FeatureMap
from .params import ParamStore, uniform_init
from .tensor import Tensor, matmul, pad, roll


@dataclass(frozen=True)
class WindowPlan:
    height: int
    width: int
    window: int
    shift: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"empty token grid {self.height}x{self.width}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0 <= self.shift < self.window:
            raise ValueError(f"shift {self.shift} outside [0, {self.window})")

    @classmethod
    def fit(cls, height: int, width: int, window: int, shift: int) -> "WindowPlan":
        """Plan for a grid, shrinking the window to the grid when it does not fit.

        As in Swin, a grid no larger than the window becomes one unshifted window.
        """
        if min(height, width) <= window:
            return cls(height, width, min(height, width), 0)
        return cls(height, width, window, shift)

    @property
    def padded(self) -> tuple[int, int]:
        w = self.window
        return -(-self.height // w) * w, -(-self.width // w) * w

    @property
    def n_windows(self) -> int:
        ph, pw = self.padded
        return (ph // self.window) * (pw // self.window)


def window_partition(f: FeatureMap, plan: WindowPlan) -> Tensor:
    """(B, N, C) tokens -> (B * n_windows, window**2, C) blocks."""
    if (f.height, f.width) != (plan.height, plan.width):
        raise ValueError(f"plan grid {plan.height}x{plan.width} does not match feature grid {f.height}x{f.width}")
    B, C, w = f.batch, f.channels, plan.window
    ph, pw = plan.padded
    x = f.tokens.reshape(B, f.height, f.width, C)
    if (ph, pw) != (f.height, f.width):
        x = pad(x, ((0, 0), (0, ph - f.height), (0, pw - f.width), (0, 0)))
    if plan.shift:
        x = roll(x, (-plan.shift, -plan.shift), axis=(1, 2))
    x = x.reshape(B, ph // w, w, pw // w, w, C).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(B * plan.n_windows, w * w, C)


def window_reverse(windows: Tensor, plan: WindowPlan, batch: int) -> FeatureMap:
    """Inverse of :func:`window_partition`."""
    w = plan.window
    ph, pw = plan.padded
    C = windows.shape[-1]
    x = windows.reshape(batch, ph // w, pw // w, w, w, C).transpose(0, 1, 3, 2, 4, 5)
    x = x.reshape(batch, ph, pw, C)
    if plan.shift:
        x = roll(x, (plan.shift, plan.shift), axis=(1, 2))
    if (ph, pw) != (plan.height, plan.width):
        x = x[:, : plan.height, : plan.width, :]
    return FeatureMap(x.reshape(batch, plan.height * plan.width, C), plan.height, plan.width)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """``softmax(q k^T / sqrt(d_k)) v``; returns ``(out, weights)``.

    Leading axes broadcast, so batches of windows and heads go through in one call.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query/key widths differ: {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"key/value token counts differ: {k.shape} vs {v.shape}")
    scores = matmul(q, k.swap_last()) * (1.0 / math.sqrt(q.shape[-1]))
    weights = scores.softmax(axis=-1)
    return matmul(weights, v), weights


@dataclass
class AttentionWeights:
    """Projection matrices of one multi-head attention.

    ``wq``, ``wk``, ``wv`` are (d_model, heads * d_k); column block ``i`` is the
    projection of head ``i``.  ``wo`` is (heads * d_k, d_model).
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int

    def __post_init__(self):
        d_model, width = self.wq.shape
        if width % self.heads:
            raise ValueError(f"projection width {width} not divisible by {self.heads} heads")
        if width != d_model:
            raise ValueError(f"heads * d_k = {width} must equal d_model = {d_model}")
        for t in (self.wk, self.wv):
            if t.shape != self.wq.shape:
                raise ValueError(f"projection shape {t.shape} != {self.wq.shape}")
        if self.wo.shape != (width, d_model):
            raise ValueError(f"output projection shape {self.wo.shape} != {(width, d_model)}")

    @property
    def d_model(self) -> int:
        return self.wq.shape[0]

    @property
    def d_k(self) -> int:
        return self.wq.shape[1] // self.heads

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_model: int, heads: int, rng, group: str,
               share_qk: "AttentionWeights | None" = None) -> "AttentionWeights":
        """Register projections under ``prefix``; ``share_qk`` reuses another block's W^Q/W^K."""
        def new(name):
            return store.add(f"{prefix}.{name}", uniform_init(rng, (d_model, d_model), d_model), group)

        if share_qk is None:
            wq, wk = new("wq"), new("wk")
        else:
            wq, wk = share_qk.wq, share_qk.wk
        return cls(wq, wk, new("wv"), new("wo"), heads)

    @classmethod
    def from_store(cls, store: ParamStore, prefix: str, heads: int, qk_prefix: str | None = None) -> "AttentionWeights":
        qk = qk_prefix or prefix
        return cls(store[f"{qk}.wq"], store[f"{qk}.wk"], store[f"{prefix}.wv"], store[f"{prefix}.wo"], heads)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, width = x.shape
    x = x.reshape(*lead, n, heads, width // heads)
    nd = x.ndim
    return x.transpose(*range(nd - 3), nd - 2, nd - 3, nd - 1)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dk = x.shape
    nd = x.ndim
    x = x.transpose(*range(nd - 3), nd - 2, nd - 3, nd - 1)
    return x.reshape(*lead, n, h * dk)


def attention_map(q: Tensor, k: Tensor, w: AttentionWeights) -> Tensor:
    """Per-head softmax weights for already windowed/batched token blocks."""
    qh = _split_heads(matmul(q, w.wq), w.heads)
    kh = _split_heads(matmul(k, w.wk), w.heads)
    scores = matmul(qh, kh.swap_last()) * (1.0 / math.sqrt(w.d_k))
    return scores.softmax(axis=-1)


def apply_map(weights: Tensor, v: Tensor, w: AttentionWeights) -> Tensor:
    """Project values, mix them with ``weights`` and apply the output projection."""
    vh = _split_heads(matmul(v, w.wv), w.heads)
    return matmul(_merge_heads(matmul(weights, vh)), w.wo)


def multi_head_attention(
    q: FeatureMap,
    k: FeatureMap,
    v: FeatureMap,
    w: AttentionWeights,
    plan: WindowPlan | None = None,
    shared_weights: Tensor | None = None,
) -> tuple[FeatureMap, Tensor]:
    """``[head_1, ..., head_h] W^O`` with optional shifted-window partitioning.

    With a ``plan`` all three inputs must live on the plan's grid and attention
    stays inside each window.  Without one, every query attends to every key
    (batch axes broadcast, e.g. one style image against a content batch).
    ``shared_weights`` replaces the Q/K path with a precomputed map.
    Returns the output (with ``q``'s grid) and the attention weights used.
    """
    for f in (q, k, v):
        if f.channels != w.d_model:
            raise ValueError(f"feature width {f.channels} != d_model {w.d_model}")
    if k.n_tokens != v.n_tokens:
        raise ValueError(f"key/value token counts differ: {k.n_tokens} vs {v.n_tokens}")

    if plan is not None:
        batch = max(q.batch, k.batch, v.batch)
        qt, kt, vt = (window_partition(_expand(f, batch), plan) for f in (q, k, v))
    else:
        qt, kt, vt = q.tokens, k.tokens, v.tokens

    if shared_weights is None:
        weights = attention_map(qt, kt, w)
    else:
        expected = qt.shape[:-2] + (w.heads, qt.shape[-2], kt.shape[-2])
        if shared_weights.shape != expected:
            raise ValueError(f"shared attention map has shape {shared_weights.shape}, expected {expected}")
        weights = shared_weights
    out = apply_map(weights, vt, w)

    if plan is not None:
        return window_reverse(out, plan, batch), weights
    return FeatureMap(out, q.height, q.width), weights


def _expand(f: FeatureMap, batch: int) -> FeatureMap:
    if f.batch == batch:
        return f
    if f.batch != 1:
        raise ValueError(f"cannot broadcast batch {f.batch} to {batch}")
    ones = Tensor(np.ones((batch, 1, 1)))
    return f.with_tokens(f.tokens * ones)
