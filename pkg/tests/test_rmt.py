import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import expit

from tsformer.rmt import (
    IsaState,
    TrustConfig,
    adjust_threshold,
    downsample_map,
    fed_filter,
    isa_threshold,
    jacobi_eigvalsh,
    spectral_summary,
    trust_from_lambda,
)
from tsformer.tensor import Tensor, bilinear_resize


def test_downsample_examples(rng):
    M = rng.standard_normal((16, 16))
    np.testing.assert_array_equal(downsample_map(M, 16), M)
    np.testing.assert_allclose(downsample_map(np.full((32, 32), 3.0), 16), 3.0)
    big = rng.standard_normal((64, 64))
    np.testing.assert_array_equal(downsample_map(big, 16), bilinear_resize(Tensor(big), 16, 16).data)


def test_rank_one_closed_form(rng):
    u = rng.standard_normal(16)
    u -= u.mean()
    s = spectral_summary(np.outer(u, u))
    assert s.lambda_max == pytest.approx(16.0, abs=1e-9)
    assert s.trust == pytest.approx(expit(-3.0), abs=1e-4)
    assert s.mp_edge == 4.0


def test_constant_map_branch():
    s = spectral_summary(np.full((16, 16), 2.0))
    assert s.lambda_max == 0.0
    assert s.trust == pytest.approx(0.7311, abs=1e-4)


def test_noise_trust_band():
    trusts = [spectral_summary(np.random.default_rng(s).standard_normal((16, 16))).trust for s in range(100)]
    assert abs(np.mean(trusts) - 0.5) < 0.15


def test_structure_vs_noise_gap():
    noise, rank1 = [], []
    for s in range(100):
        r = np.random.default_rng(s)
        noise.append(spectral_summary(r.standard_normal((16, 16))).trust)
        u = r.standard_normal(16)
        rank1.append(spectral_summary(np.outer(u, u) + 0.05 * r.standard_normal((16, 16))).trust)
    assert np.mean(noise) - np.mean(rank1) >= 0.2


def test_rejects_non_square():
    with pytest.raises(ValueError):
        spectral_summary(np.zeros((4, 5)))


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100) | st.floats(-100, -0.01))
def test_scale_invariance(seed, c):
    M = np.random.default_rng(seed).standard_normal((8, 8))
    a, b = spectral_summary(M), spectral_summary(c * M)
    assert b.lambda_max == pytest.approx(a.lambda_max, rel=1e-9)
    assert b.trust == pytest.approx(a.trust, rel=1e-9)


@given(st.floats(0, 50), st.floats(0, 50))
def test_trust_strictly_decreasing(a, b):
    if a < b and b - a > 1e-6:
        assert trust_from_lambda(a) > trust_from_lambda(b)


def _char_poly_roots(A):
    # eigenvalues as roots of det(A - tI), from Faddeev-LeVerrier coefficients
    n = A.shape[0]
    M = np.zeros_like(A)
    coeffs = [1.0]
    for k in range(1, n + 1):
        M = A @ M + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(A @ M) / k)
    return np.sort(np.roots(coeffs).real)[::-1]


@pytest.mark.parametrize("n", [3, 4])
def test_jacobi_matches_characteristic_polynomial(rng, n):
    for _ in range(10):
        X = rng.standard_normal((n, n))
        A = X + X.T
        np.testing.assert_allclose(jacobi_eigvalsh(A), _char_poly_roots(A), atol=1e-5)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 17))
def test_jacobi_matches_lapack(seed, n):
    X = np.random.default_rng(seed).standard_normal((n, n))
    A = X @ X.T
    np.testing.assert_allclose(jacobi_eigvalsh(A), np.linalg.eigvalsh(A)[::-1], atol=1e-9)


def test_jacobi_batched_diagonal():
    A = np.stack([np.diag([1.0, 3.0, 2.0]), np.diag([0.0, -1.0, 5.0])])
    np.testing.assert_array_equal(jacobi_eigvalsh(A), [[3, 2, 1], [5, 0, -1]])


def test_adjust_threshold_examples():
    assert adjust_threshold(0.8, 0.5) == pytest.approx(0.4)
    assert adjust_threshold(0.8, expit(50.0)) <= 0.8
    assert adjust_threshold(0.8, 0.3) < adjust_threshold(0.8, 0.6)


@given(st.floats(1e-3, 10), st.floats(0, 30))
def test_adjusted_threshold_below_base(base, lam):
    assert adjust_threshold(base, trust_from_lambda(lam)) < base


def test_fed_filter_examples():
    # identity-structured map: Gram eigenvalues of the standardized identity
    eye = np.eye(16)
    lam = spectral_summary(eye).lambda_max
    assert lam == pytest.approx(16 / 15)
    assert fed_filter([eye], tau=2.0).tolist() == [True]
    assert fed_filter([eye], tau=0.5).tolist() == [False]
    assert fed_filter([], tau=1.0).shape == (0,)


def test_isa_threshold_examples(rng):
    assert isa_threshold([1.0, 1.0, 1.0], 4.0, previous_tau=4.0) == 4.0
    assert isa_threshold([0.0, 2.0], 1.0, previous_tau=9.0) == pytest.approx(1.0)
    vals = rng.random(25) * 5
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    assert isa_threshold(vals, 2.0, 4.0) == pytest.approx(2.0 * var, abs=1e-6)


def test_isa_state_keeps_tau_when_nothing_stable():
    st_ = IsaState(4.0, 4.0)
    stable = st_.step(np.full((2, 3), 9.0), np.array([9.0, 9.5]))
    assert not stable.any()
    assert st_.tau == 4.0
    assert st_.history == [4.0]


def test_trust_config_validation():
    with pytest.raises(ValueError):
        TrustConfig(spectral_size=1)
    with pytest.raises(ValueError):
        TrustConfig(beta=0)
