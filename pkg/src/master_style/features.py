"""Token-sequence feature maps and per-channel statistics over tokens."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, concat

IN_EPS = 1e-5


@dataclass
class FeatureMap:
    """``tokens`` has shape (batch, n_tokens, channels).

    ``height``/``width`` describe the row-major token grid; they are ``None``
    for token sets without spatial layout.
    """

    tokens: Tensor
    height: int | None = None
    width: int | None = None

    def __post_init__(self):
        if self.tokens.ndim != 3:
            raise ValueError(f"FeatureMap tokens must be 3-d, got {self.tokens.shape}")
        if self.height is not None and self.height * self.width != self.tokens.shape[1]:
            raise ValueError(f"grid {self.height}x{self.width} does not match {self.tokens.shape[1]} tokens")

    @property
    def batch(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[1]

    @property
    def channels(self) -> int:
        return self.tokens.shape[2]

    @property
    def shape(self) -> tuple:
        return self.tokens.shape

    def with_tokens(self, tokens: Tensor) -> "FeatureMap":
        return FeatureMap(tokens, self.height, self.width)

    @classmethod
    def from_array(cls, arr, height=None, width=None, requires_grad=False) -> "FeatureMap":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        return cls(Tensor(arr, requires_grad=requires_grad), height, width)

    def to_grid(self) -> np.ndarray:
        """(batch, height, width, channels) view of the raw values."""
        return self.tokens.data.reshape(self.batch, self.height, self.width, self.channels)


def channel_stats(f: FeatureMap) -> tuple[Tensor, Tensor]:
    """Per-sample, per-channel mean and population std over tokens, each (batch, channels)."""
    if f.n_tokens < 1:
        raise ValueError("channel_stats needs at least one token")
    x = f.tokens
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1)
    return mean.reshape(f.batch, f.channels), var.sqrt()


def instance_norm(f: FeatureMap, eps: float = IN_EPS) -> FeatureMap:
    """``(x - mean) / sqrt(var + eps)`` per sample and channel over tokens."""
    if f.n_tokens < 1:
        raise ValueError("instance_norm needs at least one token")
    x = f.tokens
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    return f.with_tokens(centered / (var + eps).sqrt())


def merge_token_sets(maps: list[FeatureMap]) -> FeatureMap:
    """Concatenate along the token axis.

    Grids of equal width stack vertically (row-major concatenation); anything
    else loses its spatial layout.
    """
    if not maps:
        raise ValueError("cannot merge an empty list of feature maps")
    widths = {m.channels for m in maps}
    if len(widths) != 1:
        raise ValueError(f"channel widths differ: {sorted(widths)}")
    if len(maps) == 1:
        return maps[0]
    tokens = concat([m.tokens for m in maps], axis=1)
    grid_w = {m.width for m in maps}
    if None not in grid_w and len(grid_w) == 1:
        return FeatureMap(tokens, sum(m.height for m in maps), maps[0].width)
    return FeatureMap(tokens)
