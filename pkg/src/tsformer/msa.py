"""Min-p sparse attention scored by frequency-domain patch correlation.

Attention maps live on a patch grid: for a feature map ``[B, C, H, W]`` and
patch size ``p`` the maps have shape ``[B, C, nh, nw, p, p]`` where
``(nh, nw)`` indexes the source patch. A "row" is the last axis of a map,
so thresholds are taken per ``(b, c, i, j, row)``.
"""
from __future__ import annotations

import contextvars
from dataclasses import dataclass, field

import numpy as np

from . import rmt
from .layers import Module, make_conv3x3
from .metrics import count_flops
from .rmt import IsaState, TrustConfig
from .spectral import is_power_of_two
from .tensor import Tensor, crop, freq_correlate, pad_zero, reshape, transpose
from .tensor.core import make_result

STRATEGIES = ("dense", "min_p", "min_p_trusted", "top_k", "fed", "isa")


@dataclass(frozen=True)
class SparsityConfig:
    p_base: float = 0.1
    strategy: str = "min_p_trusted"
    k: int | None = None
    trust: TrustConfig = field(default_factory=TrustConfig)

    def __post_init__(self):
        if not 0.0 <= self.p_base <= 1.0:
            raise ValueError(f"p_base must lie in [0, 1], got {self.p_base}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy == "top_k" and (self.k is None or self.k < 1):
            raise ValueError("top_k strategy needs k >= 1")


# ------------------------------------------------------------------ patches

@dataclass
class PatchGrid:
    patches: Tensor
    origin: tuple[int, ...]
    patch_size: int

    @property
    def grid(self) -> tuple[int, int]:
        return self.patches.shape[2], self.patches.shape[3]


def patchify(x: Tensor, patch_size: int) -> PatchGrid:
    """Zero-pad bottom/right to a multiple of ``patch_size`` and tile."""
    if not is_power_of_two(patch_size):
        raise ValueError(f"patch size {patch_size} is not a power of two")
    B, C, H, W = x.shape
    p = patch_size
    nh, nw = -(-H // p), -(-W // p)
    xp = pad_zero(x, nh * p - H, nw * p - W)
    tiles = transpose(reshape(xp, (B, C, nh, p, nw, p)), (0, 1, 2, 4, 3, 5))
    return PatchGrid(tiles, tuple(x.shape), p)


def unpatchify(g: PatchGrid) -> Tensor:
    B, C, H, W = g.origin
    nh, nw = g.grid
    p = g.patch_size
    full = reshape(transpose(g.patches, (0, 1, 2, 4, 3, 5)), (B, C, nh * p, nw * p))
    if (nh * p, nw * p) == (H, W):
        return full
    return crop(full, 0, 0, H, W)


# ---------------------------------------------------------------- scoring

def freq_attention(q_patch, k_patch) -> Tensor:
    """``M = real(ifft2(fft2(q) * conj(fft2(k))))`` for every patch."""
    q = q_patch if isinstance(q_patch, Tensor) else Tensor(q_patch)
    k = k_patch if isinstance(k_patch, Tensor) else Tensor(k_patch)
    return freq_correlate(q, k)


def min_p_keep(M: np.ndarray, p_base: float, trust=None) -> np.ndarray:
    """Boolean retained set of Min-p filtering, row-wise over the last axis.

    ``trust`` (scalar or broadcastable to ``M.shape[:-2]``) scales each
    threshold. Rows whose maximum is not positive pass through unmasked,
    and ``p_base == 0`` disables filtering altogether (negative entries
    included).
    """
    M = np.asarray(M)
    if p_base == 0:
        return np.ones(M.shape, dtype=bool)
    row_max = M.max(axis=-1, keepdims=True)
    threshold = p_base * row_max
    if trust is not None:
        t = np.asarray(trust, dtype=M.dtype)
        if t.ndim:
            t = t[..., None, None]
        threshold = rmt.adjust_threshold(threshold, t)
    return (M >= threshold) | (row_max <= 0)


def min_p_mask(M: np.ndarray, p_base: float, trust=None) -> np.ndarray:
    M = np.asarray(M)
    return np.where(min_p_keep(M, p_base, trust), M, 0)


def top_k_keep(M: np.ndarray, k: int) -> np.ndarray:
    """Retain the ``k`` largest entries per row; ties go to the lower column index."""
    M = np.asarray(M)
    n = M.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    order = np.argsort(-M, axis=-1, kind="stable")[..., :k]
    keep = np.zeros(M.shape, dtype=bool)
    np.put_along_axis(keep, order, True, axis=-1)
    return keep


def top_k_mask(M: np.ndarray, k: int) -> np.ndarray:
    M = np.asarray(M)
    return np.where(top_k_keep(M, k), M, 0)


def _patch_spectra(M: np.ndarray, cfg: TrustConfig):
    m = min(cfg.spectral_size, M.shape[-1])
    small = rmt.downsample_map(M, m) if m != M.shape[-1] else M
    return rmt.spectral_stats(small, cfg.beta)


def patch_trust(M: np.ndarray, cfg: TrustConfig) -> np.ndarray:
    """Trust scalar for every map in a ``[..., p, p]`` stack.

    Maps larger than ``cfg.spectral_size`` are bilinearly downsampled first;
    smaller ones are used as they are.
    """
    return _patch_spectra(M, cfg)[2]


def strategy_keep(M: np.ndarray, cfg: SparsityConfig, isa_state: IsaState | None = None):
    """Retained set for the configured strategy; ``None`` means dense."""
    s = cfg.strategy
    if s == "dense":
        return None
    if s == "min_p":
        return min_p_keep(M, cfg.p_base)
    if s == "min_p_trusted":
        return min_p_keep(M, cfg.p_base, patch_trust(M, cfg.trust))
    if s == "top_k":
        return top_k_keep(M, cfg.k)
    eig, lam, _ = _patch_spectra(M, cfg.trust)
    if s == "fed":
        stable = lam < cfg.trust.fed_tau
    else:
        if isa_state is None:
            isa_state = IsaState(cfg.trust.isa_alpha, cfg.trust.isa_initial_tau)
        stable = isa_state.step(eig, lam)
    return min_p_keep(M, cfg.p_base) & stable[..., None, None]


# ------------------------------------------------------------- modulation

def _modulate(M: Tensor, V: Tensor, keep: np.ndarray | None) -> Tensor:
    if M.shape != V.shape:
        raise ValueError(f"attention map shape {M.shape} != value shape {V.shape}")
    if keep is None:
        out = M.data * V.data
        count_flops("attention", out.size)

        def vjp(g):
            return g * V.data, g * M.data
    else:
        km = np.where(keep, M.data, 0).astype(M.dtype)
        out = km * V.data
        kept = int(np.count_nonzero(keep))
        count_flops("attention", kept)
        count_flops("attention_skipped", keep.size - kept)

        def vjp(g):
            gk = np.where(keep, g, 0).astype(g.dtype)
            return gk * V.data, gk * M.data

    return make_result("masked_modulate", out, (M, V), vjp)


def apply_attention(masked_M, v_patch) -> np.ndarray:
    """Elementwise modulation of the value patch by a masked map.

    Only nonzero map entries count as multiplies in the active FLOP ledger.
    """
    masked_M = np.asarray(getattr(masked_M, "data", masked_M))
    v = np.asarray(getattr(v_patch, "data", v_patch))
    if masked_M.shape != v.shape:
        raise ValueError(f"attention map shape {masked_M.shape} != value shape {v.shape}")
    return _modulate(Tensor(masked_M), Tensor(v), masked_M != 0).data


# ---------------------------------------------------------- mask recording

class MaskRecorder:
    """Record the retained sets of a forward pass, then replay them.

    Finite-difference checks evaluate the network at perturbed inputs; with
    masks replayed, every evaluation sees the same piecewise-linear branch.
    """

    def __init__(self):
        self.masks: list = []
        self.replaying = False
        self._cursor = 0

    def replay(self) -> "MaskRecorder":
        self.replaying = True
        self._cursor = 0
        return self

    def resolve(self, compute):
        if not self.replaying:
            keep = compute()
            self.masks.append(keep)
            return keep
        keep = self.masks[self._cursor]
        self._cursor += 1
        return keep

    def __enter__(self) -> "MaskRecorder":
        self._token = _RECORDER.set(self)
        self._cursor = 0
        return self

    def __exit__(self, *exc) -> None:
        _RECORDER.reset(self._token)


_RECORDER: contextvars.ContextVar[MaskRecorder | None] = contextvars.ContextVar(
    "tsformer_mask_recorder", default=None
)


# ------------------------------------------------------------------ layer

class MinPSparseAttention(Module):
    def __init__(self, channels: int, rng: np.random.Generator, patch_size: int = 8,
                 qkv_conv: str = "separable", sparsity: SparsityConfig | None = None):
        if not is_power_of_two(patch_size) or patch_size < 2:
            raise ValueError(f"patch size must be a power of two >= 2, got {patch_size}")
        self.q = make_conv3x3(channels, channels, rng, qkv_conv)
        self.k = make_conv3x3(channels, channels, rng, qkv_conv)
        self.v = make_conv3x3(channels, channels, rng, qkv_conv)
        self.patch_size = patch_size
        self.sparsity = sparsity or SparsityConfig()
        self.isa_state = IsaState(self.sparsity.trust.isa_alpha, self.sparsity.trust.isa_initial_tau)

    def qkv_project(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        return self.q(x), self.k(x), self.v(x)

    def forward(self, x: Tensor, sparsity: SparsityConfig | None = None) -> Tensor:
        return msa_forward(x, self, sparsity or self.sparsity)


def msa_forward(x: Tensor, attn: MinPSparseAttention, cfg: SparsityConfig) -> Tensor:
    q, k, v = attn.qkv_project(x)
    p = attn.patch_size
    qg, kg, vg = patchify(q, p), patchify(k, p), patchify(v, p)
    M = freq_attention(qg.patches, kg.patches)

    def compute():
        return strategy_keep(M.data, cfg, attn.isa_state)

    recorder = _RECORDER.get()
    keep = recorder.resolve(compute) if recorder is not None else compute()
    out = _modulate(M, vg.patches, keep)
    return unpatchify(PatchGrid(out, vg.origin, p))
