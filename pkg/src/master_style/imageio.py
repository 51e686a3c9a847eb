"""Binary PPM (P6) reading/writing, plus PNG reading through Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def to_bytes(img: np.ndarray) -> np.ndarray:
    """[0, 1] floats -> uint8 via round(v * 255), clamped."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + to_bytes(img).tobytes()


def write_ppm(path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(img))


def _tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping # comments."""
    out, pos = [], 0
    while len(out) < count:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(buf):
            raise ImageFormatError("truncated PPM header")
        if buf[pos : pos + 1] == b"#":
            end = buf.find(b"\n", pos)
            pos = len(buf) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        out.append(buf[start:pos])
    return out, pos


def decode_ppm(buf: bytes) -> np.ndarray:
    (magic, w, h, maxval), pos = _tokens(buf, 4)
    if magic != b"P6":
        raise ImageFormatError(f"not a binary PPM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as e:
        raise ImageFormatError(f"malformed PPM header: {e}") from None
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad PPM dimensions {w}x{h}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}; only 255 is supported")
    pos += 1  # single whitespace byte after maxval
    need = w * h * 3
    payload = buf[pos : pos + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated PPM payload: {len(payload)} of {need} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def read_image(path) -> np.ndarray:
    """Read a P6 PPM or a PNG into an (H, W, 3) float array in [0, 1]."""
    path = Path(path)
    buf = path.read_bytes()
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return decode_ppm(buf)
