"""Radix-2 FFTs over the trailing two axes of an array.

Every transform acts on the last two axes and broadcasts over any leading
axes, so a whole grid of attention patches is transformed in one call.
Forward transforms are unnormalized; the inverse carries the ``1/(h*w)``
factor.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "is_power_of_two",
    "fft",
    "ifft",
    "fft2",
    "ifft2",
    "complex_hadamard",
    "naive_dft2",
    "fft2_butterflies",
]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_size(n: int, axis_name: str) -> None:
    if not is_power_of_two(n):
        raise ValueError(f"{axis_name} size {n} is not a power of two")


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(n: int, inverse: bool) -> tuple[np.ndarray, ...]:
    # one table per stage; stage with butterfly span `half` uses exp(-+2*pi*i*k/(2*half))
    sign = 1.0 if inverse else -1.0
    tables = []
    half = 1
    while half < n:
        k = np.arange(half)
        tables.append(np.exp(sign * 2j * np.pi * k / (2 * half)))
        half *= 2
    return tuple(tables)


def _fft_axis(x: np.ndarray, inverse: bool, axis: int) -> np.ndarray:
    """Iterative radix-2 transform along ``axis`` (-1 or -2), unnormalized."""
    n = x.shape[axis]
    _check_size(n, "width" if axis == -1 else "height")
    rev = _bit_reverse(n)
    a = np.asarray(x, dtype=np.complex128)
    a = a[..., rev] if axis == -1 else a[..., rev, :]
    if n == 1:
        return a.copy()
    lead = a.shape[:-1] if axis == -1 else a.shape[:-2]
    tail = () if axis == -1 else (a.shape[-1],)
    buf = np.empty_like(a)
    half = 1
    for w in _twiddles(n, inverse):
        tw = w if axis == -1 else w[:, None]
        blocks = a.reshape(*lead, n // (2 * half), 2, half, *tail)
        out = buf.reshape(*lead, n // (2 * half), 2, half, *tail)
        odd = blocks[..., 1, :, :] * tw if tail else blocks[..., 1, :] * tw
        even = blocks[..., 0, :, :] if tail else blocks[..., 0, :]
        if tail:
            np.add(even, odd, out=out[..., 0, :, :])
            np.subtract(even, odd, out=out[..., 1, :, :])
        else:
            np.add(even, odd, out=out[..., 0, :])
            np.subtract(even, odd, out=out[..., 1, :])
        a, buf = buf, a
        half *= 2
    return a


def _fft_last_axis(x: np.ndarray, inverse: bool) -> np.ndarray:
    return _fft_axis(x, inverse, -1)


def _out_dtype(x: np.ndarray):
    if x.dtype in (np.float32, np.complex64):
        return np.complex64
    return np.complex128


def fft(x: np.ndarray) -> np.ndarray:
    """Unnormalized 1-D DFT along the last axis."""
    x = np.asarray(x)
    return _fft_last_axis(x, inverse=False).astype(_out_dtype(x), copy=False)


def ifft(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft` (divides by the length)."""
    x = np.asarray(x)
    n = x.shape[-1]
    return (_fft_last_axis(x, inverse=True) / n).astype(_out_dtype(x), copy=False)


def _transform2(x: np.ndarray, inverse: bool) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError("2-D transform needs at least two axes")
    h, w = x.shape[-2:]
    _check_size(h, "height")
    _check_size(w, "width")
    out = _fft_axis(_fft_axis(x, inverse, -1), inverse, -2)
    if inverse:
        out = out / (h * w)
    return out.astype(_out_dtype(x), copy=False)


def fft2(x: np.ndarray) -> np.ndarray:
    """Unnormalized 2-D DFT over the last two axes.

    Accepts real or complex input with power-of-two trailing dimensions;
    anything else raises ``ValueError``. Arithmetic runs in double precision
    and the result is returned as complex64 for 32-bit inputs.
    """
    return _transform2(x, inverse=False)


def ifft2(x: np.ndarray) -> np.ndarray:
    """Inverse 2-D DFT with ``1/(h*w)`` normalization."""
    return _transform2(x, inverse=True)


def complex_hadamard(a: np.ndarray, b: np.ndarray, conjugate_b: bool = False) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    # explicit real/imaginary parts so results match textbook scalar arithmetic bit for bit
    ar, ai = a.real, a.imag
    br, bi = b.real, (-b.imag if conjugate_b else b.imag)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b, np.complex64))
    out.real = ar * br - ai * bi
    out.imag = ar * bi + ai * br
    return out


def naive_dft2(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Direct double-sum DFT of one 2-D array, O(h^2 w^2). Test oracle.

    Each output row is the full sum over every input sample with its own
    complex exponential; no factorization of the transform is used.
    """
    x = np.asarray(x, dtype=np.complex128)
    h, w = x.shape
    sign = 1.0 if inverse else -1.0
    r = np.arange(h)[None, :, None]
    c = np.arange(w)[None, None, :]
    v = np.arange(w)[:, None, None]
    out = np.empty((h, w), dtype=np.complex128)
    for u in range(h):
        phase = np.exp(sign * 2j * np.pi * (u * r / h + v * c / w))
        out[u] = (phase * x[None]).sum(axis=(1, 2))
    if inverse:
        out /= h * w
    return out


def fft2_butterflies(h: int, w: int) -> int:
    """Butterfly count of one ``h x w`` 2-D transform (rows then columns)."""
    return h * (w // 2) * int(np.log2(w)) + w * (h // 2) * int(np.log2(h))
