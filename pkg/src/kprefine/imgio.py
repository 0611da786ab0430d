"""Grayscale image loading and saving (PNG via Pillow, PGM natively).

Images are float64 arrays in [0, 1], shape (H, W). Color inputs are reduced
with luma weights 0.299 / 0.587 / 0.114 in floating point (no 8-bit
re-quantization).
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError

LUMA = np.array([0.299, 0.587, 0.114])


def load_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm"):
        return _read_pnm(path)
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return arr / 65535.0
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        if im.mode in ("LA", "RGBA", "P"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
        if arr.ndim == 2:
            return arr
        return arr[..., :3] @ LUMA


def save_image(img: np.ndarray, path) -> None:
    """Write a [0, 1] grayscale image as 8-bit PNG or PGM."""
    path = Path(path)
    q = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if path.suffix.lower() == ".pgm":
        _write_pgm(q, path, maxval=255)
    else:
        Image.fromarray(q, mode="L").save(path)


def save_density_pgm(values: np.ndarray, path) -> None:
    """Debug dump of a density grid, min-max normalized to 16-bit PGM."""
    lo = float(values.min()) if values.size else 0.0
    hi = float(values.max()) if values.size else 0.0
    span = hi - lo
    if span <= 0:
        q = np.zeros(values.shape, dtype=np.uint16)
    else:
        q = np.rint((values - lo) / span * 65535.0).astype(np.uint16)
    _write_pgm(q, Path(path), maxval=65535)


def _write_pgm(data: np.ndarray, path: Path, maxval: int) -> None:
    h, w = data.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval > 255:
        payload = data.astype(">u2").tobytes()
    else:
        payload = data.astype(np.uint8).tobytes()
    path.write_bytes(header + payload)


def _read_pnm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:2] not in (b"P2", b"P5", b"P3", b"P6"):
        raise ParseError(f"not a PGM/PPM file (magic {raw[:2]!r})", path=str(path))
    magic = raw[:2].decode("ascii")

    # Header tokens: magic, width, height, maxval; '#' starts a comment.
    tokens = []
    pos = 2
    while len(tokens) < 3 and pos < len(raw):
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(raw, pos)
        if m is None:
            break
        pos = m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    if len(tokens) < 3:
        raise ParseError("truncated PNM header", path=str(path))
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ParseError(f"bad PNM header: {exc}", path=str(path)) from exc
    if maxval <= 0:
        raise ParseError(f"bad PNM maxval {maxval}", path=str(path))

    channels = 3 if magic in ("P3", "P6") else 1
    count = width * height * channels
    if magic in ("P5", "P6"):
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    else:
        data = np.array(raw[pos:].split()[:count], dtype=np.float64)
    if data.size < count:
        raise ParseError("truncated PNM payload", path=str(path))

    arr = data.astype(np.float64).reshape(height, width, channels) / float(maxval)
    if channels == 3:
        return arr @ LUMA
    return arr[..., 0]
