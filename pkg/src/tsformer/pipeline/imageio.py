"""PNG (8-bit RGB) and binary PPM (P6) reading and writing.

Images move through the library as float32 arrays ``[1, 3, H, W]`` in
``[0, 1]``. Saving clamps to that range and quantizes with round-half-up.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..tensor import Tensor


class ImageFormatError(ValueError):
    """Unsupported, malformed or truncated image file."""


def _to_tensor(u8: np.ndarray) -> Tensor:
    return Tensor((u8.astype(np.float32) / 255.0).transpose(2, 0, 1)[None])


def quantize(img) -> np.ndarray:
    """``[1, 3, H, W]`` (or ``[3, H, W]``) floats to ``[H, W, 3]`` uint8."""
    a = np.asarray(getattr(img, "data", img), dtype=np.float64)
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise ValueError(f"can only save a single image, got batch {a.shape[0]}")
        a = a[0]
    if a.ndim != 3 or a.shape[0] != 3:
        raise ValueError(f"expected 3 channels, got shape {a.shape}")
    a = np.clip(a, 0.0, 1.0)
    return np.floor(a * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def _read_ppm(buf: bytes) -> np.ndarray:
    # header: P6 <ws> width <ws> height <ws> maxval <single ws> raster
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(buf[start:pos])
    if pos >= len(buf):
        raise ImageFormatError("truncated PPM header")
    pos += 1
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ImageFormatError(f"bad PPM header: {exc}") from exc
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM is supported, maxval={maxval}")
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad PPM size {w}x{h}")
    n = w * h * 3
    raster = buf[pos:pos + n]
    if len(raster) < n:
        raise ImageFormatError(f"truncated PPM raster: {len(raster)} of {n} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3)


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise ImageFormatError(f"{path}: expected PNG, found {im.format}")
            if im.mode != "RGB":
                raise ImageFormatError(f"{path}: only 8-bit RGB PNG is supported, found mode {im.mode}")
            im.load()
            return np.asarray(im, dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: cannot decode PNG ({exc})") from exc


def load_image(path) -> Tensor:
    """Read a PNG or P6 PPM as a ``[1, 3, H, W]`` tensor in ``[0, 1]``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    buf = path.read_bytes()
    if buf[:2] == b"P6":
        return _to_tensor(_read_ppm(buf))
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _to_tensor(_read_png(path))
    raise ImageFormatError(f"{path}: unsupported image format")


def save_image(img, path) -> None:
    """Write PNG or PPM depending on the suffix (``.ppm`` means P6)."""
    path = Path(path)
    u8 = quantize(img)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        h, w, _ = u8.shape
        path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + u8.tobytes())
    elif suffix == ".png":
        Image.fromarray(u8).save(path, format="PNG")
    else:
        raise ImageFormatError(f"cannot save {path}: use .png or .ppm")
