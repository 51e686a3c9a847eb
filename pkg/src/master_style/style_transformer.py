"""Shared-parameter Style Transformer.

One encoder layer and one decoder layer exist, whatever the depth.  A forward
pass with ``L`` layers runs ``encoder -> decoder`` ``L`` times, the encoder
refining the style code ``(K_s, V_sigma, V_mu)`` and the decoder fusing it into
the content tokens with ``sigma * F' + mu`` instead of a residual sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionWeights, WindowPlan, apply_map, attention_map, multi_head_attention
from .features import FeatureMap, instance_norm, merge_token_sets
from .params import OTHER, STYLE_ENCODER, ParamStore, uniform_init
from .tensor import Tensor, matmul

STREAMS = ("k", "sigma", "mu")
FUSIONS = ("scale_shift", "residual", "identity")


@dataclass
class StyleCode:
    k: FeatureMap
    sigma: FeatureMap
    mu: FeatureMap

    def __post_init__(self):
        shapes = {self.k.shape, self.sigma.shape, self.mu.shape}
        if len(shapes) != 1:
            raise ValueError(f"style code streams disagree in shape: {shapes}")

    @classmethod
    def from_style(cls, fs: FeatureMap) -> "StyleCode":
        return cls(fs, fs, fs)


def _mlp_params(store: ParamStore, prefix: str, d: int, hidden: int, rng, group: str) -> None:
    store.add(f"{prefix}.w1", uniform_init(rng, (d, hidden), d), group)
    store.add(f"{prefix}.b1", uniform_init(rng, (hidden,), d), group)
    store.add(f"{prefix}.w2", uniform_init(rng, (hidden, d), hidden), group)
    store.add(f"{prefix}.b2", uniform_init(rng, (d,), hidden), group)


def mlp(store: ParamStore, prefix: str, x: Tensor) -> Tensor:
    h = (matmul(x, store[f"{prefix}.w1"]) + store[f"{prefix}.b1"]).relu()
    return matmul(h, store[f"{prefix}.w2"]) + store[f"{prefix}.b2"]


class StyleTransformer:
    """Configuration plus forward functions; parameters live in a ParamStore.

    Parameter names are prefixed ``st.enc.`` (group ``style_encoder``) and
    ``st.dec.`` (group ``other``).
    """

    def __init__(self, d_model: int = 32, heads: int = 4, window: int = 4, shift: int = 2,
                 mlp_ratio: int = 2, fusion: str = "scale_shift"):
        if d_model % heads:
            raise ValueError(f"d_model {d_model} not divisible by {heads} heads")
        if fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {fusion!r}; expected one of {FUSIONS}")
        self.d_model = d_model
        self.heads = heads
        self.window = window
        self.shift = shift
        self.hidden = mlp_ratio * d_model
        self.fusion = fusion

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        d, h = self.d_model, self.heads
        shared = AttentionWeights.create(store, "st.enc.k", d, h, rng, STYLE_ENCODER)
        for stream in STREAMS:
            if stream != "k":
                AttentionWeights.create(store, f"st.enc.{stream}", d, h, rng, STYLE_ENCODER, share_qk=shared)
            _mlp_params(store, f"st.enc.{stream}.mlp", d, self.hidden, rng, STYLE_ENCODER)

        AttentionWeights.create(store, "st.dec.self", d, h, rng, OTHER)
        cross = AttentionWeights.create(store, "st.dec.sigma", d, h, rng, OTHER)
        AttentionWeights.create(store, "st.dec.mu", d, h, rng, OTHER, share_qk=cross)
        _mlp_params(store, "st.dec.mlp", d, self.hidden, rng, OTHER)

    def _plan(self, f: FeatureMap) -> WindowPlan | None:
        if f.height is None:
            return None
        return WindowPlan.fit(f.height, f.width, self.window, self.shift)

    def _check(self, f: FeatureMap) -> None:
        if f.channels != self.d_model:
            raise ValueError(f"feature width {f.channels} != d_model {self.d_model}")

    # -- layers -----------------------------------------------------------------
    def encoder_layer(self, store: ParamStore, code: StyleCode) -> tuple[StyleCode, dict[str, Tensor]]:
        """Refine the style code; returns the new code and the map used per stream.

        The self-attention map is computed once from the incoming ``K_s`` and
        reused for all three streams.  No normalization is applied.
        """
        self._check(code.k)
        plan = self._plan(code.k)
        attn = {s: AttentionWeights.from_store(store, f"st.enc.{s}", self.heads, qk_prefix="st.enc.k") for s in STREAMS}

        upd, shared = multi_head_attention(code.k, code.k, code.k, attn["k"], plan)
        maps = {"k": shared}
        new = {}
        for s in STREAMS:
            x = getattr(code, s)
            if s != "k":
                upd, maps[s] = multi_head_attention(code.k, code.k, x, attn[s], plan, shared_weights=shared)
            x1 = x.tokens + upd.tokens
            new[s] = x.with_tokens(x1 + mlp(store, f"st.enc.{s}.mlp", x1))
        return StyleCode(new["k"], new["sigma"], new["mu"]), maps

    def decoder_layer(self, store: ParamStore, fcs: FeatureMap, code: StyleCode) -> tuple[FeatureMap, dict]:
        """Self-attention, IN-normalized cross-attention, scale/shift fusion, MLP.

        Returns the updated content tokens and a dict with the cross-attention
        maps used for ``sigma`` and ``mu`` plus the fused values.
        """
        self._check(fcs)
        if code.k.channels != fcs.channels:
            raise ValueError(f"style width {code.k.channels} != content width {fcs.channels}")
        w_self = AttentionWeights.from_store(store, "st.dec.self", self.heads)
        w_sigma = AttentionWeights.from_store(store, "st.dec.sigma", self.heads)
        w_mu = AttentionWeights.from_store(store, "st.dec.mu", self.heads, qk_prefix="st.dec.sigma")

        sa, _ = multi_head_attention(fcs, fcs, fcs, w_self, self._plan(fcs))
        f1 = fcs.tokens + sa.tokens

        # cross-attention is global over the style tokens
        q = instance_norm(fcs.with_tokens(f1)).tokens
        kn = instance_norm(code.k).tokens
        cmap = attention_map(q, kn, w_sigma)
        sigma = apply_map(cmap, code.sigma.tokens, w_sigma)
        mu = apply_map(cmap, code.mu.tokens, w_mu)

        f2 = fuse(f1, sigma, mu, self.fusion)
        out = f2 + mlp(store, "st.dec.mlp", f2)
        return fcs.with_tokens(out), {"sigma_map": cmap, "mu_map": cmap, "sigma": sigma, "mu": mu, "fused": f2, "pre_fusion": f1}

    def forward(self, store: ParamStore, fs: FeatureMap, fc: FeatureMap, layers: int) -> FeatureMap:
        """Run ``layers`` alternating encoder/decoder steps; 0 returns ``fc`` itself."""
        if layers < 0:
            raise ValueError(f"layer count must be >= 0, got {layers}")
        self._check(fs)
        self._check(fc)
        code = StyleCode.from_style(fs)
        fcs = fc
        for _ in range(layers):
            code, _ = self.encoder_layer(store, code)
            fcs, _ = self.decoder_layer(store, fcs, code)
        return fcs


def fuse(f1: Tensor, sigma: Tensor, mu: Tensor, mode: str = "scale_shift") -> Tensor:
    """``sigma * f1 + mu``; ``residual`` adds ``sigma`` instead, ``identity`` returns ``f1``."""
    if mode == "scale_shift":
        return sigma * f1 + mu
    if mode == "residual":
        return f1 + sigma
    if mode == "identity":
        return f1
    raise ValueError(f"unknown fusion {mode!r}")


def interpolate_outputs(fa: FeatureMap, fb: FeatureMap, alpha: float) -> FeatureMap:
    """``alpha * fa + (1 - alpha) * fb``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    if fa.shape != fb.shape:
        raise ValueError(f"shape mismatch: {fa.shape} vs {fb.shape}")
    if alpha == 1.0:
        return fa
    if alpha == 0.0:
        return fb
    return fa.with_tokens(fa.tokens * alpha + fb.tokens * (1.0 - alpha))


def merge_styles(styles: list[FeatureMap]) -> FeatureMap:
    """Concatenate several style token sets into one."""
    return merge_token_sets(styles)
