"""Differentiable operations on :class:`~tsformer.tensor.core.Tensor`.

Each op computes its forward result with numpy and, when recording on a
tape, registers a vector-Jacobian product closure. Only the shapes the
restoration network needs are supported; broadcasting is limited to what
``numpy`` does for bias-like operands and is undone in the backward pass.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .. import spectral
from ..metrics import count_flops
from .core import Tensor, as_tensor, make_result

CONV_MODES = ("standard", "pointwise", "depthwise")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _like(value, ref: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=ref.dtype))


# ----------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = _like(b, a)
    out = a.data + b.data
    return make_result(
        "add", out, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = _like(b, a)
    out = a.data - b.data
    return make_result(
        "sub", out, (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = _like(b, a)
    out = a.data * b.data
    return make_result(
        "mul", out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return make_result("scale", a.data * c, (a,), lambda g: (g * c,))


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.dtype)
    return make_result("sum", out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.dtype)
    return make_result(
        "mean", out, (a,), lambda g: (np.full(a.shape, g / n, dtype=a.dtype),)
    )


# ------------------------------------------------------------------ reshaping

def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)
    return make_result("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return make_result("transpose", out, (a,), lambda g: (g.transpose(inv),))


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return make_result("concat", out, tuple(tensors), vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries of ``axis`` starting at ``start``."""
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = a.data[index].copy()

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make_result("narrow", out, (a,), vjp)


def pad_zero(a: Tensor, bottom: int, right: int) -> Tensor:
    """Zero-pad the last two axes on the bottom and right."""
    if bottom == 0 and right == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 2) + [(0, bottom), (0, right)]
    out = np.pad(a.data, widths)
    h, w = a.shape[-2:]
    return make_result("pad_zero", out, (a,), lambda g: (g[..., :h, :w].copy(),))


def crop(a: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    out = a.data[..., top:top + height, left:left + width].copy()

    def vjp(g):
        full = np.zeros_like(a.data)
        full[..., top:top + height, left:left + width] = g
        return (full,)

    return make_result("crop", out, (a,), vjp)


def _reflect_index(n: int, before: int, after: int) -> np.ndarray:
    idx = np.arange(-before, n + after)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period if period else np.zeros_like(idx)
    return np.where(idx >= n, period - idx, idx)


def _scatter_axis(g: np.ndarray, idx: np.ndarray, n: int, axis: int) -> np.ndarray:
    shape = list(g.shape)
    shape[axis] = n
    out = np.zeros(shape, dtype=g.dtype)
    np.add.at(np.moveaxis(out, axis, 0), idx, np.moveaxis(g, axis, 0))
    return out


def pad_reflect(a: Tensor, bottom: int, right: int) -> Tensor:
    """Reflection-pad the last two axes on the bottom and right."""
    if bottom == 0 and right == 0:
        return a
    h, w = a.shape[-2:]
    if bottom >= h or right >= w:
        raise ValueError(f"reflection pad ({bottom}, {right}) too large for {h}x{w} input")
    ri = _reflect_index(h, 0, bottom)
    ci = _reflect_index(w, 0, right)
    out = a.data[..., ri, :][..., ci]

    def vjp(g):
        g = _scatter_axis(g, ci, w, g.ndim - 1)
        return (_scatter_axis(g, ri, h, g.ndim - 2),)

    return make_result("pad_reflect", out, (a,), vjp)


def upsample_nearest2x(a: Tensor) -> Tensor:
    out = a.data.repeat(2, axis=-2).repeat(2, axis=-1)

    def vjp(g):
        *lead, h2, w2 = g.shape
        return (g.reshape(*lead, h2 // 2, 2, w2 // 2, 2).sum(axis=(-1, -3)),)

    return make_result("upsample_nearest2x", out, (a,), vjp)


# --------------------------------------------------------------- convolution

def _check_conv(x: Tensor, weight: Tensor, bias: Tensor | None, mode: str) -> int:
    if mode not in CONV_MODES:
        raise ValueError(f"unknown conv mode {mode!r}; expected one of {CONV_MODES}")
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be [B, C, H, W], got rank {x.ndim}")
    if weight.ndim != 4:
        raise ValueError(f"conv2d weight must be rank 4, got rank {weight.ndim}")
    cin = x.shape[1]
    cout, wcin, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"kernel height/width must be equal and odd, got {kh}x{kw}")
    if mode == "pointwise" and kh != 1:
        raise ValueError(f"pointwise mode needs a 1x1 kernel, got kernel size {kh}")
    if mode == "depthwise":
        if wcin != 1:
            raise ValueError(f"depthwise weight input-channel dimension must be 1, got {wcin}")
        if cout != cin:
            raise ValueError(
                f"depthwise output-channel dimension {cout} != input channel dimension {cin}"
            )
    elif wcin != cin:
        raise ValueError(f"weight input-channel dimension {wcin} != input channel dimension {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias length {bias.shape} != output channel dimension {cout}")
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise ValueError(f"spatial dimensions must be >= 1, got {x.shape[2:]}")
    return kh


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           mode: str = "standard", stride: int = 1) -> Tensor:
    """Same-padded 2-D convolution (cross-correlation, zero padding).

    ``mode`` selects the weight layout: ``standard`` ``[Cout, Cin, k, k]``,
    ``pointwise`` ``[Cout, Cin, 1, 1]``, ``depthwise`` ``[C, 1, k, k]``.
    With ``stride=2`` the output is ``ceil(H/2) x ceil(W/2)``.
    """
    k = _check_conv(x, weight, bias, mode)
    B, C, H, W = x.shape
    cout = weight.shape[0]
    Ho, Wo = -(-H // stride), -(-W // stride)
    pad = k // 2
    w = weight.data

    if mode == "pointwise":
        xs = x.data[:, :, ::stride, ::stride]
        out = np.tensordot(w[:, :, 0, 0], xs, axes=([1], [1])).transpose(1, 0, 2, 3)
        count_flops("conv", B * Ho * Wo * cout * C)

        def vjp_main(g):
            dxs = np.tensordot(w[:, :, 0, 0], g, axes=([0], [1])).transpose(1, 0, 2, 3)
            if stride == 1:
                dx = dxs
            else:
                dx = np.zeros_like(x.data)
                dx[:, :, ::stride, ::stride] = dxs
            dw = np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
            return dx, dw

    elif mode == "depthwise":
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        span_h, span_w = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
        out = np.zeros((B, C, Ho, Wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                out += xp[:, :, i:i + span_h:stride, j:j + span_w:stride] * w[None, :, 0, i, j, None, None]
        count_flops("conv", B * C * Ho * Wo * k * k)

        def vjp_main(g):
            dxp = np.zeros_like(xp)
            dw = np.zeros_like(w)
            for i in range(k):
                for j in range(k):
                    win = xp[:, :, i:i + span_h:stride, j:j + span_w:stride]
                    dw[:, 0, i, j] = (g * win).sum(axis=(0, 2, 3))
                    dxp[:, :, i:i + span_h:stride, j:j + span_w:stride] += g * w[None, :, 0, i, j, None, None]
            return dxp[:, :, pad:pad + H, pad:pad + W], dw

    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
        # [B, Ho, Wo, Cin*k*k] @ [Cin*k*k, Cout]
        cols2 = np.ascontiguousarray(cols.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, C * k * k)
        wmat = w.reshape(cout, C * k * k)
        out = (cols2 @ wmat.T).reshape(B, Ho, Wo, cout).transpose(0, 3, 1, 2)
        count_flops("conv", B * Ho * Wo * cout * C * k * k)

        def vjp_main(g):
            g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(B * Ho * Wo, cout)
            dw = (g2.T @ cols2).reshape(w.shape)
            dcols = (g2 @ wmat).reshape(B, Ho, Wo, C, k, k)
            dxp = np.zeros_like(xp)
            span_h, span_w = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + span_h:stride, j:j + span_w:stride] += dcols[..., i, j].transpose(0, 3, 1, 2)
            return dxp[:, :, pad:pad + H, pad:pad + W], dw

    out = np.ascontiguousarray(out, dtype=x.dtype)
    if bias is not None:
        out += bias.data[None, :, None, None]

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        dx, dw = vjp_main(g)
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3))

    return make_result(f"conv2d_{mode}", out, inputs, vjp)


# ------------------------------------------------------------- normalization

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the channel axis at every spatial position."""
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"gamma/beta must have shape ({C},)")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def vjp(g):
        dxhat = g * gamma.data[None, :, None, None]
        dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return dx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_result("layer_norm", out.astype(x.dtype, copy=False), (x, gamma, beta), vjp)


# ------------------------------------------------------------ nonlinearities

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + special.erf(x.data * _INV_SQRT2))
    out = (x.data * cdf).astype(x.dtype, copy=False)

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        return ((g * (cdf + x.data * pdf)).astype(x.dtype, copy=False),)

    return make_result("gelu", out, (x,), vjp)


def prelu(x: Tensor, alpha: Tensor) -> Tensor:
    """PReLU with one slope per channel (``alpha`` of shape ``[C]``) or a shared slope ``[1]``."""
    a = alpha.data
    if a.shape not in ((x.shape[1],), (1,)):
        raise ValueError(f"alpha shape {a.shape} does not match channel dimension {x.shape[1]}")
    a4 = a[None, :, None, None]
    pos = x.data >= 0
    out = np.where(pos, x.data, a4 * x.data)

    def vjp(g):
        dx = np.where(pos, g, a4 * g)
        da = np.where(pos, 0.0, g * x.data).sum(axis=(0, 2, 3))
        if a.shape == (1,):
            da = da.sum(keepdims=True)
        return dx, da.astype(a.dtype)

    return make_result("prelu", out, (x, alpha), vjp)


def sigmoid(x: Tensor) -> Tensor:
    s = special.expit(x.data)
    return make_result("sigmoid", s, (x,), lambda g: (g * s * (1 - s),))


def softmax(x: Tensor, axis: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax axis {axis} invalid for rank {x.ndim}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", s, (x,), vjp)


# ------------------------------------------------------------------ resizing

def bilinear_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Corner-aligned linear interpolation weights, shape ``[n_out, n_in]``."""
    R = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1 or n_out == 1:
        R[:, 0] = 1.0
        return R
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    R[np.arange(n_out), lo] = 1.0 - frac
    R[np.arange(n_out), lo + 1] += frac
    return R


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Corner-aligned bilinear resize of the last two axes."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be >= 1, got {out_h}x{out_w}")
    h, w = x.shape[-2:]
    if (h, w) == (out_h, out_w):
        return make_result("bilinear_resize", x.data.copy(), (x,), lambda g: (g,))
    Ry = bilinear_matrix(h, out_h, x.dtype)
    Rx = bilinear_matrix(w, out_w, x.dtype)
    out = np.matmul(np.matmul(Ry, x.data), Rx.T)
    return make_result(
        "bilinear_resize", out, (x,),
        lambda g: (np.matmul(np.matmul(Ry.T, g), Rx),),
    )


# --------------------------------------------------------------------- loss

def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray(np.abs(diff).mean(), dtype=pred.dtype)

    def vjp(g):
        s = np.sign(diff) * (g / n)
        return s, -s

    return make_result("l1_loss", out, (pred, target), vjp)


# ------------------------------------------------------- frequency attention

RESIDUE_LIMIT = 1e-4


def freq_correlate(q: Tensor, k: Tensor) -> Tensor:
    """Circular cross-correlation of ``q`` with ``k`` over the last two axes.

    Computed as ``real(ifft2(fft2(q) * conj(fft2(k))))``, i.e.
    ``M[s] = sum_t q[t + s] k[t]`` with indices taken modulo the patch size.
    """
    if q.shape != k.shape:
        raise ValueError(f"shape mismatch: {q.shape} vs {k.shape}")
    h, w = q.shape[-2:]
    Qf = spectral.fft2(q.data.astype(np.float64))
    Kf = spectral.fft2(k.data.astype(np.float64))
    full = spectral.ifft2(spectral.complex_hadamard(Qf, Kf, conjugate_b=True))
    residue = float(np.abs(full.imag).max()) if full.size else 0.0
    if residue > RESIDUE_LIMIT:
        raise FloatingPointError(f"imaginary residue {residue:.3g} exceeds {RESIDUE_LIMIT}")
    out = full.real.astype(q.dtype)
    n_patches = q.data.size // (h * w)
    count_flops("fft", 3 * n_patches * spectral.fft2_butterflies(h, w))
    count_flops("spectral_product", n_patches * h * w)

    def vjp(g):
        G = spectral.fft2(g.astype(np.float64))
        dq = spectral.ifft2(G * Kf).real.astype(q.dtype)
        dk = spectral.ifft2(Qf * np.conj(G)).real.astype(k.dtype)
        return dq, dk

    return make_result("freq_correlate", out, (q, k), vjp)
