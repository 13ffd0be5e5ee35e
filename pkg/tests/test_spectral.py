import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsformer.spectral import complex_hadamard, fft, fft2, fft2_butterflies, ifft, ifft2, naive_dft2

SIZES = [4, 8, 16, 32, 64]


def test_impulse_and_constant():
    d = np.zeros((8, 8))
    d[0, 0] = 1
    np.testing.assert_allclose(fft2(d), np.ones((8, 8)), atol=1e-12)
    c = np.full((8, 8), 2.5)
    X = fft2(c)
    assert X[0, 0] == pytest.approx(64 * 2.5)
    X[0, 0] = 0
    assert np.abs(X).max() < 1e-5


def test_inverse_of_flat_spectrum_is_impulse():
    x = ifft2(np.ones((8, 8), dtype=complex))
    ref = np.zeros((8, 8))
    ref[0, 0] = 1
    np.testing.assert_allclose(x, ref, atol=1e-12)


def test_matches_naive_dft_16(rng):
    x = rng.standard_normal((16, 16))
    assert np.abs(fft2(x) - naive_dft2(x)).max() < 1e-4


@pytest.mark.parametrize("n", SIZES)
def test_roundtrip_and_parseval(rng, n):
    x = rng.standard_normal((n, n)).astype(np.float32)
    assert np.abs(ifft2(fft2(x)) - x).max() < 1e-5
    X = fft2(x.astype(np.float64))
    e_space = np.sum(np.abs(x.astype(np.float64)) ** 2)
    assert np.sum(np.abs(X) ** 2) / n / n == pytest.approx(e_space, rel=1e-5)


def test_naive_oracle_agrees_with_numpy(rng):
    # the oracle itself is checked against an independent implementation
    x = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
    np.testing.assert_allclose(naive_dft2(x), np.fft.fft2(x), atol=1e-10)
    np.testing.assert_allclose(naive_dft2(x, inverse=True), np.fft.ifft2(x), atol=1e-12)


def test_rectangular_and_batched(rng):
    x = rng.standard_normal((3, 2, 4, 16))
    np.testing.assert_allclose(fft2(x), np.fft.fft2(x), atol=1e-10)
    np.testing.assert_allclose(fft(x[0, 0, 0]), np.fft.fft(x[0, 0, 0]), atol=1e-12)
    np.testing.assert_allclose(ifft(fft(x)), x, atol=1e-12)


def test_dtype_follows_precision(rng):
    assert fft2(rng.standard_normal((4, 4)).astype(np.float32)).dtype == np.complex64
    assert fft2(rng.standard_normal((4, 4))).dtype == np.complex128


@pytest.mark.parametrize("shape", [(6, 8), (8, 12), (3, 3)])
def test_non_power_of_two_rejected(shape):
    with pytest.raises(ValueError, match="power of two"):
        fft2(np.zeros(shape))


def test_hadamard_examples(rng):
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    np.testing.assert_array_equal(complex_hadamard(a, np.ones((4, 4), complex)), a)
    i = np.full((4, 4), 1j)
    np.testing.assert_array_equal(complex_hadamard(i, i, conjugate_b=True), np.ones((4, 4)))
    b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    out = complex_hadamard(a, b, conjugate_b=True)
    for u in range(4):
        for v in range(4):
            ar, ai = a[u, v].real, a[u, v].imag
            br, bi = b[u, v].real, -b[u, v].imag
            assert out[u, v] == complex(ar * br - ai * bi, ar * bi + ai * br)


def test_butterfly_count():
    # 8 rows of an 8-point transform plus 8 columns, 4 butterflies x 3 stages each
    assert fft2_butterflies(8, 8) == 2 * 8 * 4 * 3


@given(st.sampled_from([4, 8, 16]), st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(n, seed, alpha, beta):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2, n, n))
    lhs = fft2(alpha * x + beta * y)
    rhs = alpha * fft2(x) + beta * fft2(y)
    assert np.abs(lhs - rhs).max() < 1e-5


@given(st.sampled_from([4, 8, 16, 32]), st.integers(0, 2 ** 32 - 1))
def test_real_input_conjugate_symmetry(n, seed):
    x = np.random.default_rng(seed).standard_normal((n, n))
    X = fft2(x)
    idx = (-np.arange(n)) % n
    assert np.abs(X - np.conj(X[idx][:, idx])).max() < 1e-5
