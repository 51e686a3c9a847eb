"""Encoder -> Style Transformer -> decoder pipeline over one ParamStore."""

from __future__ import annotations

from dataclasses import dataclass

from .backbone import ImageDecoder, ImageEncoder
from .features import FeatureMap
from .params import ParamStore, make_rng
from .style_transformer import StyleTransformer, interpolate_outputs, merge_styles
from .tensor import Tensor

INIT_STREAM = 1


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 32
    heads: int = 4
    window: int = 4
    shift: int = 2
    mlp_ratio: int = 2
    fusion: str = "scale_shift"


class MasterModel:
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        self.cfg = cfg
        self.encoder = ImageEncoder(cfg.d_model, cfg.heads, cfg.window, cfg.shift, cfg.mlp_ratio)
        self.transformer = StyleTransformer(cfg.d_model, cfg.heads, cfg.window, cfg.shift, cfg.mlp_ratio, cfg.fusion)
        self.decoder = ImageDecoder(cfg.d_model)

    def init_params(self, seed: int) -> ParamStore:
        """Fresh store with every learnable tensor drawn from ``seed``."""
        rng = make_rng(seed, INIT_STREAM)
        store = ParamStore()
        self.encoder.init_params(store, rng)
        self.transformer.init_params(store, rng)
        self.decoder.init_params(store, rng)
        return store

    def encode(self, store: ParamStore, images) -> FeatureMap:
        return self.encoder(store, images)

    def decode(self, store: ParamStore, f: FeatureMap) -> Tensor:
        return self.decoder(store, f)

    def transform(self, store: ParamStore, fs: FeatureMap, fc: FeatureMap, layers: int) -> FeatureMap:
        return self.transformer.forward(store, fs, fc, layers)

    def stylize(self, store: ParamStore, content, style, layers: int) -> Tensor:
        """Raw (unclamped) stylized images for a content batch and one style."""
        fc = self.encode(store, content)
        fs = self.encode(store, style)
        return self.decode(store, self.transform(store, fs, fc, layers))

    def stylize_multi(self, store: ParamStore, content, styles: list, layers: int) -> Tensor:
        fc = self.encode(store, content)
        fs = merge_styles([self.encode(store, s) for s in styles])
        return self.decode(store, self.transform(store, fs, fc, layers))

    def interpolate(self, store: ParamStore, content, style_a, style_b, alpha: float, layers: int) -> Tensor:
        fc = self.encode(store, content)
        fa = self.transform(store, self.encode(store, style_a), fc, layers)
        fb = self.transform(store, self.encode(store, style_b), fc, layers)
        return self.decode(store, interpolate_outputs(fa, fb, alpha))
