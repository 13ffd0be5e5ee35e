"""Overlapping-tile inference with linear-ramp blending."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..tensor import Tensor


def tile_starts(n: int, tile: int, overlap: int) -> list[int]:
    """Tile origins along one axis; the last tile is flush with the edge."""
    if n <= tile:
        return [0]
    starts = list(range(0, n - tile, tile - overlap))
    starts.append(n - tile)
    return starts


def _ramp(length: int, overlap: int, rise: bool, fall: bool) -> np.ndarray:
    w = np.ones(length)
    if overlap > 0:
        edge = (np.arange(overlap) + 1.0) / (overlap + 1.0)
        if rise:
            w[:overlap] = np.minimum(w[:overlap], edge)
        if fall:
            w[-overlap:] = np.minimum(w[-overlap:], edge[::-1])
    return w


def tile_inference(img, model: Callable[[Tensor], Tensor], tile: int, overlap: int) -> Tensor:
    """Run ``model`` over overlapping ``tile x tile`` windows and blend.

    Each tile's weight ramps linearly from the tile edge across ``overlap``
    pixels on every side that borders another tile; the blended output is
    divided by the summed weights, so weights form a partition of unity.
    Images no larger than one tile get a single full-frame pass.
    """
    if tile <= 2 * overlap:
        raise ValueError(f"tile ({tile}) must exceed twice the overlap ({overlap})")
    if overlap < 0:
        raise ValueError("overlap must be nonnegative")
    x = img if isinstance(img, Tensor) else Tensor(np.asarray(img, dtype=np.float32))
    B, C, H, W = x.shape
    if H <= tile and W <= tile:
        return model(x)
    th, tw = min(tile, H), min(tile, W)
    ys, xs = tile_starts(H, th, overlap), tile_starts(W, tw, overlap)
    acc = np.zeros((B, C, H, W), dtype=np.float64)
    wsum = np.zeros((H, W), dtype=np.float64)
    for y0 in ys:
        wy = _ramp(th, overlap, y0 > 0, y0 + th < H)
        for x0 in xs:
            wx = _ramp(tw, overlap, x0 > 0, x0 + tw < W)
            w = wy[:, None] * wx[None, :]
            out = model(Tensor(x.data[:, :, y0:y0 + th, x0:x0 + tw]))
            acc[:, :, y0:y0 + th, x0:x0 + tw] += w * out.data
            wsum[y0:y0 + th, x0:x0 + tw] += w
    return Tensor((acc / wsum).astype(x.dtype))
