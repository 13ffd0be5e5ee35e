"""Image-quality metrics and FLOP bookkeeping."""
from __future__ import annotations

import contextvars
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "FlopLedger",
    "count_flops",
    "flops_report",
    "psnr",
    "ssim",
    "luminance",
]

CATEGORIES = ("conv", "fft", "spectral_product", "attention", "attention_skipped")
# attention_skipped records work avoided, not work done
WORK_CATEGORIES = ("conv", "fft", "spectral_product", "attention")

_LEDGER: contextvars.ContextVar["FlopLedger | None"] = contextvars.ContextVar(
    "tsformer_flop_ledger", default=None
)


@dataclass
class FlopLedger:
    """Multiply-accumulate counters per op category.

    Use as a context manager to collect counts from every op run inside it::

        with FlopLedger() as ledger:
            model(img)
    """

    counts: dict[str, int] = field(default_factory=lambda: {c: 0 for c in CATEGORIES})

    def add(self, category: str, n: int) -> None:
        if category not in self.counts:
            raise KeyError(f"unknown FLOP category {category!r}")
        if n < 0:
            raise ValueError("FLOP counts are nonnegative")
        self.counts[category] += int(n)

    def merge(self, other: "FlopLedger") -> "FlopLedger":
        return FlopLedger({c: self.counts[c] + other.counts[c] for c in CATEGORIES})

    @property
    def total(self) -> int:
        return sum(self.counts[c] for c in WORK_CATEGORIES)

    def __getitem__(self, category: str) -> int:
        return self.counts[category]

    def __enter__(self) -> "FlopLedger":
        self._token = _LEDGER.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _LEDGER.reset(self._token)


def count_flops(category: str, n: int) -> None:
    ledger = _LEDGER.get()
    if ledger is not None:
        ledger.add(category, n)


def _reduction(sparse: int, dense: int) -> float:
    return 0.0 if dense == 0 else 1.0 - sparse / dense


def flops_report(ledger: FlopLedger, dense_baseline: FlopLedger) -> dict[str, float]:
    """Fractional reduction ``1 - sparse/dense`` per work category plus ``total``.

    The ``attention`` entry equals the fraction of attention entries that the
    mask zeroed, since the dense baseline performs one multiply per entry.
    """
    report = {c: _reduction(ledger[c], dense_baseline[c]) for c in WORK_CATEGORIES}
    report["total"] = _reduction(ledger.total, dense_baseline.total)
    return report


def _as_array(x) -> np.ndarray:
    data = getattr(x, "data", x)
    return np.asarray(data, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``math.inf``."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


_BT601 = np.array([0.299, 0.587, 0.114])


def luminance(img: np.ndarray) -> np.ndarray:
    """Collapse images to ``[N, H, W]`` luminance planes.

    Accepts ``[H, W]``, ``[C, H, W]`` or ``[B, C, H, W]``; three-channel
    inputs are weighted with BT.601 coefficients, single-channel ones pass
    through.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[None]
    if img.ndim == 3:
        img = img[None]
    if img.ndim != 4:
        raise ValueError(f"expected a 2-, 3- or 4-D image, got rank {img.ndim}")
    if img.shape[1] == 3:
        return np.tensordot(img, _BT601, axes=([1], [0]))
    if img.shape[1] == 1:
        return img[:, 0]
    raise ValueError(f"expected 1 or 3 channels, got {img.shape[1]}")


def _gaussian_1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = g.size
    x = sliding_window_view(x, n, axis=-1) @ g
    return np.swapaxes(sliding_window_view(np.swapaxes(x, -1, -2), n, axis=-1) @ g, -1, -2)


def _block_mean(x: np.ndarray, size: int) -> np.ndarray:
    N, H, W = x.shape
    hb, wb = H // size, W // size
    return x[:, :hb * size, :wb * size].reshape(N, hb, size, wb, size).mean(axis=(2, 4))


def ssim(a, b, window: str = "gaussian", peak: float = 1.0,
         c1: float | None = None, c2: float | None = None) -> float:
    """Single-scale SSIM on the luminance channel.

    ``window="gaussian"`` uses the 11x11, sigma=1.5 window over all valid
    positions; ``window="block8"`` averages over non-overlapping 8x8 blocks.
    Constants default to ``(0.01*peak)**2`` and ``(0.03*peak)**2``.
    """
    ya, yb = luminance(_as_array(a)), luminance(_as_array(b))
    if ya.shape != yb.shape:
        raise ValueError(f"shape mismatch: {ya.shape} vs {yb.shape}")
    c1 = (0.01 * peak) ** 2 if c1 is None else c1
    c2 = (0.03 * peak) ** 2 if c2 is None else c2
    H, W = ya.shape[-2:]
    if window == "gaussian":
        size = 11
        if H < size or W < size:
            raise ValueError(f"image {H}x{W} smaller than the {size}x{size} window")
        g = _gaussian_1d(size, 1.5)

        def smooth(x):
            return _filter_valid(x, g)

    elif window == "block8":
        size = 8
        if H < size or W < size:
            raise ValueError(f"image {H}x{W} smaller than the {size}x{size} window")

        def smooth(x):
            return _block_mean(x, size)

    else:
        raise ValueError(f"unknown window {window!r}")

    mu_a, mu_b = smooth(ya), smooth(yb)
    var_a = smooth(ya * ya) - mu_a * mu_a
    var_b = smooth(yb * yb) - mu_b * mu_b
    cov = smooth(ya * yb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
