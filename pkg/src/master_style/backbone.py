"""Small stand-ins for the image encoder/decoder pair and for the frozen loss network.

Images are channels-last arrays of shape (batch, height, width, 3).
"""

from __future__ import annotations

import numpy as np

from .attention import AttentionWeights, WindowPlan, multi_head_attention
from .features import FeatureMap
from .params import OTHER, ParamStore, make_rng, uniform_init
from .style_transformer import _mlp_params, mlp
from .tensor import Tensor, as_tensor, avg_pool2, conv3x3, matmul, upsample2

LOSS_CHANNELS = (16, 32, 64, 128)
LOSS_LEVELS = (2, 3, 4, 5)


def _as_images(images) -> Tensor:
    t = as_tensor(images)
    if t.ndim == 3:
        t = t.reshape(1, *t.shape)
    if t.ndim != 4 or t.shape[-1] != 3:
        raise ValueError(f"expected (batch, H, W, 3) images, got {t.shape}")
    return t


class ImageEncoder:
    """4x4 patch embedding, window attention, 2x2 patch merging, shifted window attention.

    Output grid is 1/8 of the image in each direction.
    """

    def __init__(self, d_model: int = 32, heads: int = 4, window: int = 4, shift: int = 2, mlp_ratio: int = 2):
        self.d_model, self.heads, self.window, self.shift = d_model, heads, window, shift
        self.hidden = mlp_ratio * d_model

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        d = self.d_model
        store.add("enc.patch.w", uniform_init(rng, (48, d), 48), OTHER)
        store.add("enc.patch.b", uniform_init(rng, (d,), 48), OTHER)
        for blk in ("enc.block1", "enc.block2"):
            AttentionWeights.create(store, f"{blk}.attn", d, self.heads, rng, OTHER)
            _mlp_params(store, f"{blk}.mlp", d, self.hidden, rng, OTHER)
            if blk == "enc.block1":
                store.add("enc.merge.w", uniform_init(rng, (4 * d, d), 4 * d), OTHER)
                store.add("enc.merge.b", uniform_init(rng, (d,), 4 * d), OTHER)

    def _block(self, store: ParamStore, prefix: str, x: Tensor, h: int, w: int, shift: int) -> Tensor:
        f = FeatureMap(x, h, w)
        attn = AttentionWeights.from_store(store, f"{prefix}.attn", self.heads)
        sa, _ = multi_head_attention(f, f, f, attn, WindowPlan.fit(h, w, self.window, shift))
        x = x + sa.tokens
        return x + mlp(store, f"{prefix}.mlp", x)

    def __call__(self, store: ParamStore, images) -> FeatureMap:
        x = _as_images(images)
        B, H, W, _ = x.shape
        if H % 8 or W % 8:
            raise ValueError(f"image size {H}x{W} is not divisible by 8")
        d = self.d_model
        h, w = H // 4, W // 4
        patches = x.reshape(B, h, 4, w, 4, 3).transpose(0, 1, 3, 2, 4, 5).reshape(B, h * w, 48)
        t = matmul(patches, store["enc.patch.w"]) + store["enc.patch.b"]
        t = self._block(store, "enc.block1", t, h, w, 0)
        merged = t.reshape(B, h // 2, 2, w // 2, 2, d).transpose(0, 1, 3, 2, 4, 5).reshape(B, (h // 2) * (w // 2), 4 * d)
        h, w = h // 2, w // 2
        t = matmul(merged, store["enc.merge.w"]) + store["enc.merge.b"]
        t = self._block(store, "enc.block2", t, h, w, self.shift)
        return FeatureMap(t, h, w)


class ImageDecoder:
    """Three (2x nearest upsample, 3x3 conv, ReLU) blocks and a final 3x3 conv to RGB.

    Channels halve at the second and third block (floored at 8), mirroring the
    tapering of the usual AdaIN decoder.
    """

    def __init__(self, d_model: int = 32):
        self.d_model = d_model
        self.widths = (d_model, max(d_model // 2, 8), max(d_model // 4, 8))

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        c_in = self.d_model
        for i, c in enumerate(self.widths):
            store.add(f"dec.conv{i}.w", uniform_init(rng, (9 * c_in, c), 9 * c_in), OTHER)
            store.add(f"dec.conv{i}.b", uniform_init(rng, (c,), 9 * c_in), OTHER)
            c_in = c
        store.add("dec.out.w", uniform_init(rng, (9 * c_in, 3), 9 * c_in), OTHER)
        store.add("dec.out.b", uniform_init(rng, (3,), 9 * c_in), OTHER)

    def __call__(self, store: ParamStore, f: FeatureMap) -> Tensor:
        if f.height is None:
            raise ValueError("decoding needs a feature map with a spatial grid")
        x = f.tokens.reshape(f.batch, f.height, f.width, f.channels)
        for i in range(3):
            x = conv3x3(upsample2(x), store[f"dec.conv{i}.w"], store[f"dec.conv{i}.b"]).relu()
        return conv3x3(x, store["dec.out.w"], store["dec.out.b"])


class LossNetwork:
    """Frozen random conv pyramid standing in for a pretrained VGG.

    Stage ``i`` is conv3x3 + ReLU + 2x average pool; the outputs after stages
    1..4 are returned as levels 2..5 (1/2 .. 1/16 resolution).  Weights are
    plain arrays drawn from ``seed`` and never registered in a ParamStore.
    """

    def __init__(self, seed: int = 7, channels=LOSS_CHANNELS):
        self.seed = seed
        self.channels = tuple(channels)
        rng = make_rng(seed, 99)
        self.weights: list[tuple[Tensor, Tensor]] = []
        c_in = 3
        for c in self.channels:
            fan_in = 9 * c_in
            bound = np.sqrt(6.0 / fan_in)
            w = Tensor(rng.uniform(-bound, bound, size=(fan_in, c)))
            b = Tensor(np.zeros(c))
            self.weights.append((w, b))
            c_in = c

    def __call__(self, images) -> dict[int, FeatureMap]:
        x = _as_images(images)
        B, H, W, _ = x.shape
        if H < 16 or W < 16:
            raise ValueError(f"image {H}x{W} is smaller than 16x16")
        out = {}
        for level, (w, b) in zip(LOSS_LEVELS, self.weights):
            x = avg_pool2(conv3x3(x, w, b).relu())
            _, h, wd, c = x.shape
            out[level] = FeatureMap(x.reshape(B, h * wd, c), h, wd)
        return out
