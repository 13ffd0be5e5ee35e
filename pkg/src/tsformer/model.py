"""The TSFormer encoder-decoder: trusted sparse blocks, fusion blocks, global residual."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import Conv2d, LayerNorm, Module, PReLU, make_conv3x3
from .msa import MinPSparseAttention, SparsityConfig
from .rmt import TrustConfig
from .tensor import (
    Tensor,
    add,
    concat,
    crop,
    gelu,
    mul,
    narrow,
    pad_reflect,
    reshape,
    softmax,
    upsample_nearest2x,
)


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 32
    block_counts: tuple[int, ...] = (1, 2, 2, 4)
    expansion: float = 2.0
    patch_size: int = 8
    qkv_conv: str = "separable"
    downsample_conv: str = "separable"
    in_channels: int = 3
    sparsity: SparsityConfig = field(default_factory=SparsityConfig)

    def __post_init__(self):
        object.__setattr__(self, "block_counts", tuple(int(n) for n in self.block_counts))
        if not self.block_counts:
            raise ValueError("block_counts must be nonempty")
        if any(n < 0 for n in self.block_counts):
            raise ValueError("block counts must be nonnegative")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.expansion <= 0:
            raise ValueError("expansion must be positive")

    @property
    def levels(self) -> int:
        return len(self.block_counts)

    @property
    def min_size(self) -> int:
        return 2 ** (self.levels - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["block_counts"] = list(self.block_counts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        sp = dict(d.pop("sparsity", {}))
        trust = TrustConfig(**sp.pop("trust", {}))
        d["sparsity"] = SparsityConfig(trust=trust, **sp)
        d["block_counts"] = tuple(d.get("block_counts", (1, 2, 2, 4)))
        return cls(**d)


class FeedForward(Module):
    """Gated feed-forward: ``project(GELU(dw3x3(e)) * pw1x1(e))`` with ``e = expand(x)``."""

    def __init__(self, channels: int, expansion: float, rng: np.random.Generator):
        hidden = int(expansion * channels)
        if hidden < 1:
            raise ValueError("expansion leaves no hidden channels")
        self.expand = Conv2d(channels, hidden, 1, rng, mode="pointwise")
        self.dwconv = Conv2d(hidden, hidden, 3, rng, mode="depthwise")
        self.pwconv = Conv2d(hidden, hidden, 1, rng, mode="pointwise")
        self.project = Conv2d(hidden, channels, 1, rng, mode="pointwise")

    def forward(self, x: Tensor) -> Tensor:
        e = self.expand(x)
        return self.project(mul(gelu(self.dwconv(e)), self.pwconv(e)))


class FeatureFusion(Module):
    """Softmax-weighted blend of an encoder skip ``x`` and a decoder feature ``y``."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv_x = Conv2d(channels, channels, 1, rng, mode="pointwise")
        self.act_x = PReLU(channels)
        self.conv_y = Conv2d(channels, channels, 1, rng, mode="pointwise")
        self.act_y = PReLU(channels)
        self.attn = Conv2d(2 * channels, 2 * channels, 1, rng, mode="pointwise")

    def weights(self, x: Tensor, y: Tensor) -> tuple[Tensor, Tensor]:
        B, C, H, W = x.shape
        xf = self.act_x(self.conv_x(x))
        yf = self.act_y(self.conv_y(y))
        logits = reshape(self.attn(concat([xf, yf], axis=1)), (B, 2, C, H, W))
        a = softmax(logits, axis=1)
        a_x = reshape(narrow(a, 1, 0, 1), (B, C, H, W))
        a_y = reshape(narrow(a, 1, 1, 1), (B, C, H, W))
        return a_x, a_y

    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        if x.shape != y.shape:
            raise ValueError(f"fusion inputs differ in shape: {x.shape} vs {y.shape}")
        a_x, a_y = self.weights(x, y)
        return add(mul(a_x, x), mul(a_y, y))


class TrustedSparseBlock(Module):
    def __init__(self, channels: int, cfg: ModelConfig, rng: np.random.Generator):
        self.norm1 = LayerNorm(channels)
        self.attn = MinPSparseAttention(channels, rng, cfg.patch_size, cfg.qkv_conv, cfg.sparsity)
        self.norm2 = LayerNorm(channels)
        self.ffn = FeedForward(channels, cfg.expansion, rng)

    def forward(self, x: Tensor, sparsity: SparsityConfig | None = None) -> Tensor:
        x = add(x, self.attn(self.norm1(x), sparsity))
        return add(x, self.ffn(self.norm2(x)))


class Upsample(Module):
    """Nearest-neighbour x2 followed by a pointwise conv halving the channels."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.conv = Conv2d(cin, cout, 1, rng, mode="pointwise")

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(upsample_nearest2x(x))


class TSFormer(Module):
    """Symmetric encoder-decoder with a global residual.

    Level ``i`` runs at ``base_channels * 2**i`` channels and ``1/2**i``
    resolution. The deepest level is shared by both halves, so the decoder
    mirrors block counts ``N[L-2], ..., N[0]`` after it.
    """

    def __init__(self, cfg: ModelConfig = ModelConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        C = cfg.base_channels
        L = cfg.levels
        ch = [C * 2 ** i for i in range(L)]
        self.tokenizer = Conv2d(cfg.in_channels, C, 3, rng)
        self.encoder = [_Stage(ch[i], cfg.block_counts[i], cfg, rng) for i in range(L)]
        self.down = [make_conv3x3(ch[i], ch[i + 1], rng, cfg.downsample_conv, stride=2)
                     for i in range(L - 1)]
        self.up = [Upsample(ch[i + 1], ch[i], rng) for i in range(L - 1)]
        self.fuse = [FeatureFusion(ch[i], rng) for i in range(L - 1)]
        self.decoder = [_Stage(ch[i], cfg.block_counts[i], cfg, rng) for i in range(L - 1)]
        self.output = Conv2d(C, cfg.in_channels, 3, rng)
        if len(self.down) != len(self.up):
            raise AssertionError("encoder/decoder resampling counts differ")
        self.assign_names()

    def features(self, x: Tensor, sparsity: SparsityConfig | None = None) -> Tensor:
        h = self.tokenizer(x)
        skips = []
        L = self.cfg.levels
        for i in range(L):
            h = self.encoder[i](h, sparsity)
            if i < L - 1:
                skips.append(h)
                h = self.down[i](h)
        for i in reversed(range(L - 1)):
            h = self.up[i](h)
            if h.shape != skips[i].shape:
                raise AssertionError(f"level {i}: decoder {h.shape} vs encoder {skips[i].shape}")
            h = self.fuse[i](skips[i], h)
            h = self.decoder[i](h, sparsity)
        return self.output(h)

    def forward(self, img: Tensor, sparsity: SparsityConfig | None = None) -> Tensor:
        return model_forward(img, self, sparsity)


class _Stage(Module):
    def __init__(self, channels: int, count: int, cfg: ModelConfig, rng: np.random.Generator):
        self.blocks = [TrustedSparseBlock(channels, cfg, rng) for _ in range(count)]

    def forward(self, x: Tensor, sparsity: SparsityConfig | None = None) -> Tensor:
        for block in self.blocks:
            x = block(x, sparsity)
        return x


def model_forward(img: Tensor, model: TSFormer, sparsity: SparsityConfig | None = None) -> Tensor:
    """Restore ``img`` as ``F(img) + img``.

    Inputs are reflection-padded on the bottom/right to a multiple of the
    total downsampling factor and cropped back afterwards.
    """
    if not isinstance(img, Tensor):
        img = Tensor(np.asarray(img, dtype=np.float32))
    if img.ndim != 4 or img.shape[1] != model.cfg.in_channels:
        raise ValueError(f"expected [B, {model.cfg.in_channels}, H, W], got {img.shape}")
    B, _, H, W = img.shape
    f = model.cfg.min_size
    if H < f or W < f:
        raise ValueError(f"input {H}x{W} is smaller than the minimum size {f}x{f}")
    ph, pw = -H % f, -W % f
    x = pad_reflect(img, ph, pw)
    out = add(model.features(x, sparsity), x)
    if ph or pw:
        out = crop(out, 0, 0, H, W)
    return out


def param_count(model: Module) -> int:
    return int(sum(p.data.size for p in model.parameters()))
