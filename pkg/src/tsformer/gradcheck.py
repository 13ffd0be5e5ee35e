"""Central finite-difference checks for every differentiable op.

Each case builds a small random problem, reduces the op output to a scalar
with a fixed random projection, and compares tape gradients against
``(f(x + h) - f(x - h)) / 2h`` for every input element. Checks run in
float64. Cases that contain Min-p masking record the masks on the analytic
pass and replay them for every perturbed evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .layers import Module
from .model import FeatureFusion, FeedForward, ModelConfig, TrustedSparseBlock
from .msa import MaskRecorder, MinPSparseAttention, SparsityConfig
from .tensor import Tape, Tensor, ops

H = 1e-3
RTOL = 1e-3
ATOL = 1e-6


@dataclass
class GradCheckResult:
    op: str
    seed: int
    max_rel_error: float
    passed: bool


@dataclass
class Case:
    forward: Callable[[], Tensor]
    leaves: list[Tensor]
    masked: bool = False


def _leaf(rng: np.random.Generator, shape, low: float | None = None) -> Tensor:
    x = rng.standard_normal(shape)
    if low is not None:
        # keep samples clear of kinks at zero
        x = np.sign(x) * (low + np.abs(x))
    return Tensor(x.astype(np.float64), requires_grad=True)


def _promote(module: Module) -> list[Tensor]:
    params = module.parameters()
    for p in params:
        p.data = p.data.astype(np.float64)
        p.grad = np.zeros_like(p.data)
    return params


def _randomize(params, rng: np.random.Generator) -> None:
    # perturb gains/biases away from their init so every branch is exercised
    for p in params:
        p.data = p.data + 0.1 * rng.standard_normal(p.data.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = ATOL) -> float:
    denom = max(float(np.abs(analytic).max(initial=0.0)), float(np.abs(numeric).max(initial=0.0)), atol)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / denom


def check_case(case: Case, rng: np.random.Generator, h: float = H) -> float:
    """Largest relative error over all leaves of ``case``."""
    recorder = MaskRecorder() if case.masked else None

    def evaluate(record: bool = False):
        if recorder is None:
            return case.forward()
        with (recorder if record else recorder.replay()):
            return case.forward()

    for leaf in case.leaves:
        leaf.grad = np.zeros_like(leaf.data)
    with Tape() as tape:
        out = evaluate(record=True)
        proj = Tensor(rng.standard_normal(out.shape))
        loss = ops.sum_all(ops.mul(out, proj))
    tape.backward(loss)
    analytic = [leaf.grad.copy() for leaf in case.leaves]

    def scalar() -> float:
        return float((evaluate().data * proj.data).sum())

    worst = 0.0
    for leaf, grad in zip(case.leaves, analytic):
        numeric = np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = scalar()
            flat[i] = orig - h
            fm = scalar()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * h)
        worst = max(worst, relative_error(grad, numeric))
    return worst


# ------------------------------------------------------------------ cases

def _unary(op, shape=(2, 3, 4, 4), low=None):
    def build(rng):
        x = _leaf(rng, shape, low)
        return Case(lambda: op(x), [x])
    return build


def _case_conv(mode: str, stride: int):
    def build(rng):
        x = _leaf(rng, (2, 3, 5, 6))
        if mode == "depthwise":
            w = _leaf(rng, (3, 1, 3, 3))
            cout = 3
        elif mode == "pointwise":
            w = _leaf(rng, (4, 3, 1, 1))
            cout = 4
        else:
            w = _leaf(rng, (4, 3, 3, 3))
            cout = 4
        b = _leaf(rng, (cout,))
        return Case(lambda: ops.conv2d(x, w, b, mode, stride), [x, w, b])
    return build


def _case_layer_norm(rng):
    x = _leaf(rng, (2, 4, 3, 3))
    g = _leaf(rng, (4,))
    b = _leaf(rng, (4,))
    return Case(lambda: ops.layer_norm(x, g, b, 1e-6), [x, g, b])


def _case_prelu(rng):
    x = _leaf(rng, (2, 3, 4, 4), low=0.05)
    a = Tensor(rng.uniform(0.1, 0.4, size=3), requires_grad=True)
    return Case(lambda: ops.prelu(x, a), [x, a])


def _case_binary(op):
    def build(rng):
        a = _leaf(rng, (2, 3, 4, 4))
        b = _leaf(rng, (2, 3, 4, 4))
        return Case(lambda: op(a, b), [a, b])
    return build


def _case_bias_add(rng):
    a = _leaf(rng, (2, 3, 4, 4))
    b = _leaf(rng, (1, 3, 1, 1))
    return Case(lambda: ops.add(a, b), [a, b])


def _case_l1(rng):
    p = _leaf(rng, (2, 3, 4, 4))
    t = Tensor(p.data + np.sign(rng.standard_normal(p.shape)) * (0.05 + rng.random(p.shape)),
               requires_grad=True)
    return Case(lambda: ops.l1_loss(p, t), [p, t])


def _case_concat(rng):
    a = _leaf(rng, (2, 2, 3, 3))
    b = _leaf(rng, (2, 3, 3, 3))
    return Case(lambda: ops.concat([a, b], axis=1), [a, b])


def _case_freq(rng):
    q = _leaf(rng, (2, 2, 8, 8))
    k = _leaf(rng, (2, 2, 8, 8))
    return Case(lambda: ops.freq_correlate(q, k), [q, k])


def _case_modulate(rng):
    from .msa import _modulate
    m = _leaf(rng, (2, 2, 4, 4))
    v = _leaf(rng, (2, 2, 4, 4))
    keep = rng.random((2, 2, 4, 4)) > 0.4
    return Case(lambda: _modulate(m, v, keep), [m, v])


def _small_cfg() -> ModelConfig:
    return ModelConfig(base_channels=4, block_counts=(1,), patch_size=4,
                       sparsity=SparsityConfig(p_base=0.3, strategy="min_p_trusted"))


def _case_msa(rng):
    cfg = _small_cfg()
    attn = MinPSparseAttention(4, rng, cfg.patch_size, cfg.qkv_conv, cfg.sparsity)
    params = _promote(attn)
    _randomize(params, rng)
    x = _leaf(rng, (1, 4, 8, 8))
    return Case(lambda: attn(x), [x] + params, masked=True)


def _case_ffn(rng):
    ffn = FeedForward(4, 2.0, rng)
    params = _promote(ffn)
    _randomize(params, rng)
    x = _leaf(rng, (1, 4, 5, 5))
    return Case(lambda: ffn(x), [x] + params)


def _case_ffb(rng):
    ffb = FeatureFusion(3, rng)
    params = _promote(ffb)
    _randomize(params, rng)
    x = _leaf(rng, (1, 3, 4, 4))
    y = _leaf(rng, (1, 3, 4, 4))
    return Case(lambda: ffb(x, y), [x, y] + params)


def _case_tsb(rng):
    cfg = _small_cfg()
    block = TrustedSparseBlock(4, cfg, rng)
    params = _promote(block)
    _randomize(params, rng)
    x = _leaf(rng, (1, 4, 8, 8))
    return Case(lambda: block(x), [x] + params, masked=True)


CASES: dict[str, Callable[[np.random.Generator], Case]] = {
    "add": _case_binary(lambda a, b: ops.add(a, b)),
    "add_broadcast": _case_bias_add,
    "sub": _case_binary(lambda a, b: ops.sub(a, b)),
    "mul": _case_binary(lambda a, b: ops.mul(a, b)),
    "scale": _unary(lambda x: ops.scale(x, -1.7)),
    "sum": _unary(lambda x: ops.sum_all(x)),
    "mean": _unary(lambda x: ops.mean_all(x)),
    "reshape": _unary(lambda x: ops.reshape(x, (2, 3, 16))),
    "transpose": _unary(lambda x: ops.transpose(x, (0, 2, 3, 1))),
    "concat": _case_concat,
    "narrow": _unary(lambda x: ops.narrow(x, 1, 1, 2)),
    "pad_zero": _unary(lambda x: ops.pad_zero(x, 2, 3)),
    "crop": _unary(lambda x: ops.crop(x, 1, 0, 2, 3)),
    "pad_reflect": _unary(lambda x: ops.pad_reflect(x, 3, 2)),
    "upsample_nearest2x": _unary(lambda x: ops.upsample_nearest2x(x)),
    "conv2d_standard": _case_conv("standard", 1),
    "conv2d_standard_stride2": _case_conv("standard", 2),
    "conv2d_pointwise": _case_conv("pointwise", 1),
    "conv2d_depthwise": _case_conv("depthwise", 1),
    "conv2d_depthwise_stride2": _case_conv("depthwise", 2),
    "layer_norm": _case_layer_norm,
    "gelu": _unary(lambda x: ops.gelu(x)),
    "prelu": _case_prelu,
    "sigmoid": _unary(lambda x: ops.sigmoid(x)),
    "softmax": _unary(lambda x: ops.softmax(x, axis=1)),
    "bilinear_resize": _unary(lambda x: ops.bilinear_resize(x, 7, 3)),
    "l1_loss": _case_l1,
    "freq_correlate": _case_freq,
    "masked_modulate": _case_modulate,
    "msa": _case_msa,
    "ffn": _case_ffn,
    "ffb": _case_ffb,
    "tsb": _case_tsb,
}


def run_suite(seeds=range(5), cases: dict | None = None, h: float = H,
              rtol: float = RTOL) -> list[GradCheckResult]:
    cases = CASES if cases is None else cases
    results = []
    for name, build in cases.items():
        for seed in seeds:
            rng = np.random.default_rng(seed)
            err = check_case(build(rng), rng, h)
            results.append(GradCheckResult(name, seed, err, err <= rtol))
    return results


def summarize(results: list[GradCheckResult]) -> dict[str, tuple[float, bool]]:
    """Worst error and pass flag per op."""
    table: dict[str, tuple[float, bool]] = {}
    for r in results:
        err, ok = table.get(r.op, (0.0, True))
        table[r.op] = (max(err, r.max_rel_error), ok and r.passed)
    return table
