import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsformer.metrics import FlopLedger, flops_report, psnr, ssim


def test_psnr_examples(rng):
    a = rng.random((3, 8, 8))
    assert psnr(a, a) == math.inf
    x = np.full((4, 4), 100.0)
    assert psnr(x, x + 10, peak=255) == pytest.approx(28.13, abs=0.01)
    b = rng.random((3, 8, 8))
    acc = 0.0
    for v, w in zip(a.ravel(), b.ravel()):
        acc += (v - w) ** 2
    ref = 10 * math.log10(1.0 / (acc / a.size))
    assert psnr(a, b) == pytest.approx(ref, abs=1e-6)


@given(st.integers(0, 2 ** 32 - 1), st.floats(-5, 5))
def test_psnr_shift_invariant(seed, c):
    r = np.random.default_rng(seed)
    a, b = r.random((2, 6, 6))
    assert psnr(a + c, b + c) == pytest.approx(psnr(a, b), abs=1e-6)


def test_ssim_examples(rng):
    a = rng.random((3, 16, 16))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)
    assert ssim(np.zeros((16, 16)), np.ones((16, 16))) < 0.01
    assert ssim(np.zeros((16, 16)), np.ones((16, 16)), window="block8") < 0.01


@given(st.integers(0, 2 ** 32 - 1))
def test_ssim_symmetric_and_bounded(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((2, 3, 16, 16))
    s = ssim(a, b)
    assert ssim(b, a) == pytest.approx(s, abs=1e-9)
    assert -1 <= s <= 1


def test_ssim_block_window_closed_form():
    # one 8x8 block: SSIM reduces to the global formula
    r = np.random.default_rng(0)
    a, b = r.random((2, 8, 8))
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(), b.var()
    cov = ((a - ma) * (b - mb)).mean()
    ref = (2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2))
    assert ssim(a, b, window="block8") == pytest.approx(ref, abs=1e-12)


def test_flops_report_examples():
    dense = FlopLedger()
    dense.add("attention", 100)
    dense.add("conv", 50)
    same = flops_report(dense, dense)
    assert all(v == 0 for v in same.values())
    half = FlopLedger()
    half.add("attention", 50)
    half.add("attention_skipped", 50)
    half.add("conv", 50)
    assert flops_report(half, dense)["attention"] == pytest.approx(0.5)


def test_ledger_rejects_unknown_category():
    with pytest.raises(KeyError):
        FlopLedger().add("matmul", 1)


def test_dense_attention_count_formula(rng):
    from tsformer.msa import MinPSparseAttention, SparsityConfig
    from tsformer.tensor import Tensor
    attn = MinPSparseAttention(3, rng, 4)
    with FlopLedger() as ledger:
        attn(Tensor(rng.random((2, 3, 8, 12), dtype=np.float32)), SparsityConfig(strategy="dense"))
    assert ledger["attention"] == 2 * 3 * (2 * 3) * 4 * 4
