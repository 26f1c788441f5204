"""Raster I/O: PFM for lossless float maps, PNG (via Pillow) for 8-bit
previews and the RGB channel of stored samples.

PFM files use the "Pf" (one channel) / "PF" (three channel) headers, a
negative scale marking little-endian payloads, and bottom-up row order.
Arrays are channel-first: (h, w) for grayscale, (3, h, w) for color.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

_WHITESPACE = b" \t\r\n"


def save_pfm(image: np.ndarray, path):
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        magic = b"Pf"
        h, w = image.shape
        rows = image
    elif image.ndim == 3 and image.shape[0] == 3:
        magic = b"PF"
        _, h, w = image.shape
        rows = image.transpose(1, 2, 0)
    else:
        raise ValueError(f"PFM stores (h,w) or (3,h,w) arrays, got shape {image.shape}")
    payload = np.ascontiguousarray(rows[::-1]).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(payload)


def _token(data: bytes, pos: int, what: str):
    while pos < len(data) and data[pos] in _WHITESPACE:
        pos += 1
    if pos >= len(data):
        raise ValueError(f"byte {pos}: expected {what}, hit end of file")
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE:
        pos += 1
    return data[start:pos], pos


def load_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    magic, pos = _token(data, 0, "PFM magic")
    if magic not in (b"Pf", b"PF"):
        raise ValueError(f"byte 0: bad magic {magic!r}, expected 'Pf' or 'PF'")
    channels = 1 if magic == b"Pf" else 3

    wtok, pos = _token(data, pos, "width")
    htok, pos = _token(data, pos, "height")
    try:
        w, h = int(wtok), int(htok)
    except ValueError:
        raise ValueError(f"byte {pos}: dimensions {wtok!r} x {htok!r} are not integers") from None
    if w <= 0 or h <= 0:
        raise ValueError(f"byte {pos}: non-positive dimensions {w}x{h}")

    stok, pos = _token(data, pos, "scale")
    try:
        scale = float(stok)
    except ValueError:
        raise ValueError(f"byte {pos}: scale {stok!r} is not a number") from None
    if scale == 0.0:
        raise ValueError(f"byte {pos}: scale must be nonzero")
    # exactly one whitespace byte separates the scale from the payload
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ValueError(f"byte {pos}: expected whitespace before payload")
    pos += 1

    count = w * h * channels
    need = count * 4
    have = len(data) - pos
    if have < need:
        raise ValueError(f"byte {pos}: payload truncated, need {need} bytes, have {have}")
    dtype = "<f4" if scale < 0 else ">f4"
    flat = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float32)
    factor = abs(scale)
    if factor != 1.0:
        flat = flat * np.float32(factor)
    if channels == 1:
        return flat.reshape(h, w)[::-1].copy()
    return flat.reshape(h, w, 3)[::-1].transpose(2, 0, 1).copy()


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a [0,1] float image to 8 bits (round-to-nearest)."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return (raw.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def save_png(image: np.ndarray, path):
    """Write a [0,1] float image, (h,w) grayscale or (3,h,w) color."""
    image = np.asarray(image)
    if image.ndim == 2:
        arr = to_uint8(image)
    elif image.ndim == 3 and image.shape[0] == 3:
        arr = to_uint8(image).transpose(1, 2, 0)
    else:
        raise ValueError(f"PNG export takes (h,w) or (3,h,w) arrays, got shape {image.shape}")
    Image.fromarray(arr).save(path, format="PNG")


def load_png(path, size: int | None = None) -> np.ndarray:
    """Read a PNG back to [0,1] floats, (h,w) or (3,h,w).

    With `size` set, non-matching images are resampled bilinearly to
    (size, size) before conversion.
    """
    with Image.open(path) as im:
        grayscale = im.mode in ("L", "I;16")
        im = im.convert("L") if grayscale else im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.uint8)
    if grayscale:
        return from_uint8(arr)
    return from_uint8(arr.transpose(2, 0, 1))
