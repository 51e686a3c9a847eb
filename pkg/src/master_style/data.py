"""Procedural content and style images.

Content images are smooth two-colour gradients with a few filled shapes;
style images are periodic textures (stripes, checkers, rings) or blotchy
noise in a random palette.  Everything is driven by one PCG64 stream per
(kind, seed), so the same arguments always give the same bytes.
"""

from __future__ import annotations

import numpy as np

from .params import make_rng

KINDS = ("content", "style")
_KIND_STREAM = {"content": 11, "style": 12}


def _grid(size: int):
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    return y, x


def _content_image(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = _grid(size)
    angle = rng.uniform(0, 2 * np.pi)
    t = np.clip(0.5 + (np.cos(angle) * (x - 0.5) + np.sin(angle) * (y - 0.5)), 0, 1)[..., None]
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
    img = (1 - t) * c0 + t * c1
    for _ in range(rng.integers(2, 5)):
        colour = rng.uniform(0, 1, size=3)
        cx, cy = rng.uniform(0.15, 0.85, size=2)
        r = rng.uniform(0.08, 0.25)
        shape = rng.integers(3)
        if shape == 0:
            mask = (x - cx) ** 2 + (y - cy) ** 2 < r**2
        elif shape == 1:
            mask = (np.abs(x - cx) < r) & (np.abs(y - cy) < r * rng.uniform(0.5, 1.5))
        else:
            # triangle: below two lines through the apex
            mask = (y > cy - r) & (y < cy + r) & (np.abs(x - cx) < (y - (cy - r)) * 0.6)
        img[mask] = colour
    return img


def _style_image(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = _grid(size)
    palette = rng.uniform(0, 1, size=(3, 3))
    kind = rng.integers(4)
    freq = rng.uniform(3, 10)
    if kind == 0:
        angle = rng.uniform(0, np.pi)
        t = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (np.cos(angle) * x + np.sin(angle) * y))
    elif kind == 1:
        t = ((np.floor(x * freq) + np.floor(y * freq)) % 2).astype(float)
    elif kind == 2:
        cx, cy = rng.uniform(0.2, 0.8, size=2)
        t = 0.5 + 0.5 * np.cos(2 * np.pi * freq * np.hypot(x - cx, y - cy))
    else:
        coarse = rng.uniform(0, 1, size=(8, 8))
        t = np.kron(coarse, np.ones((-(-size // 8), -(-size // 8))))[:size, :size]
        t = 0.7 * t + 0.3 * rng.uniform(0, 1, size=(size, size))
    t = t[..., None]
    img = np.where(t < 0.5, (1 - 2 * t) * palette[0] + 2 * t * palette[1], (2 - 2 * t) * palette[1] + (2 * t - 1) * palette[2])
    return np.clip(img, 0.0, 1.0)


def gen_synthetic(kind: str, n: int, seed: int, size: int = 64) -> np.ndarray:
    """``n`` images of shape (size, size, 3) with values in [0, 1], stacked."""
    if kind not in KINDS:
        raise ValueError(f"unsupported kind {kind!r}; expected one of {KINDS}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, _KIND_STREAM[kind])
    make = _content_image if kind == "content" else _style_image
    return np.stack([make(rng, size) for _ in range(n)])
