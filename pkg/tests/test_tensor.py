import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tsformer.tensor import (
    OptimizerState,
    Parameter,
    Tape,
    Tensor,
    adamw_step,
    bilinear_resize,
    conv2d,
    gelu,
    l1_loss,
    layer_norm,
    mul,
    prelu,
    sigmoid,
    softmax,
    sum_all,
)
from tsformer.tensor.ops import bilinear_matrix


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


# ---------------------------------------------------------------- conv2d

def test_conv_ones_same_padding():
    x = T(np.ones((1, 1, 3, 3)))
    w = T(np.ones((1, 1, 3, 3)))
    out = conv2d(x, w, T(np.zeros(1))).data[0, 0]
    assert out[1, 1] == 9
    assert out[0, 0] == 4


def test_pointwise_identity(rng):
    x = T(rng.standard_normal((2, 3, 4, 5)))
    w = T(np.eye(3)[:, :, None, None])
    out = conv2d(x, w, T(np.zeros(3)), mode="pointwise")
    np.testing.assert_array_equal(out.data, x.data)


def _loop_conv(x, w, b, depthwise):
    B, C, H, W = x.shape
    cout = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((B, cout, H, W))
    for n in range(B):
        for o in range(cout):
            for i in range(H):
                for j in range(W):
                    if depthwise:
                        acc = sum(xp[n, o, i + a, j + c] * w[o, 0, a, c] for a in range(3) for c in range(3))
                    else:
                        acc = sum(xp[n, ci, i + a, j + c] * w[o, ci, a, c]
                                  for ci in range(C) for a in range(3) for c in range(3))
                    out[n, o, i, j] = acc + b[o]
    return out


def test_depthwise_matches_loop(rng):
    x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
    w = rng.standard_normal((2, 1, 3, 3)).astype(np.float32)
    b = rng.standard_normal(2).astype(np.float32)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), mode="depthwise").data
    np.testing.assert_allclose(out, _loop_conv(x, w, b, True), atol=1e-5)


def test_standard_matches_loop(rng):
    x = rng.standard_normal((2, 3, 4, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = conv2d(T(x), T(w), T(b)).data
    np.testing.assert_allclose(out, _loop_conv(x, w, b, False), atol=1e-10)


def test_stride2_subsamples_stride1(rng):
    x = T(rng.standard_normal((1, 2, 8, 6)))
    w = T(rng.standard_normal((3, 2, 3, 3)))
    full = conv2d(x, w, None).data
    half = conv2d(x, w, None, stride=2).data
    np.testing.assert_allclose(half, full[:, :, ::2, ::2], atol=1e-12)


def test_conv_channel_mismatch_names_dimension(rng):
    with pytest.raises(ValueError, match="channel"):
        conv2d(T(np.zeros((1, 2, 4, 4))), T(np.zeros((1, 3, 3, 3))), None)


# ----------------------------------------------------------- layer_norm

def test_layer_norm_constant_is_zero():
    x = T(np.full((1, 4, 2, 2), 3.0))
    out = layer_norm(x, T(np.ones(4)), T(np.zeros(4)))
    np.testing.assert_array_equal(out.data, 0.0)


def test_layer_norm_moments():
    x = T(np.array([1.0, 2, 3, 4]).reshape(1, 4, 1, 1))
    y = layer_norm(x, T(np.ones(4)), T(np.zeros(4))).data.ravel()
    assert abs(y.mean()) < 1e-6
    assert abs(y.var() - 1) < 1e-6


def test_layer_norm_matches_scalar_loop(rng):
    x = rng.standard_normal((2, 3, 2, 2))
    g, b = rng.standard_normal(3), rng.standard_normal(3)
    eps = 1e-6
    out = layer_norm(T(x), T(g), T(b), eps).data
    for n in range(2):
        for i in range(2):
            for j in range(2):
                v = [x[n, c, i, j] for c in range(3)]
                mu = sum(v) / 3
                var = sum((t - mu) ** 2 for t in v) / 3
                for c in range(3):
                    ref = (v[c] - mu) / (var + eps) ** 0.5 * g[c] + b[c]
                    assert abs(out[n, c, i, j] - ref) < 1e-9


# ---------------------------------------------------------- activations

def test_pointwise_examples():
    assert sigmoid(T([0.0])).data[0] == 0.5
    assert prelu(T(np.full((1, 1, 1, 1), -2.0)), T([0.25])).data.item() == -0.5
    np.testing.assert_allclose(softmax(T([[0.0, 0.0]]), axis=1).data, [[0.5, 0.5]])


def test_gelu_exact_erf_form():
    from scipy.special import erf
    x = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(gelu(T(x)).data, 0.5 * x * (1 + erf(x / np.sqrt(2))), atol=1e-12)


@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)))
def test_softmax_normalized_and_sigmoid_range(x):
    s = softmax(T(x), axis=1).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    sg = sigmoid(T(x)).data
    assert np.all((sg >= 0) & (sg <= 1))


# --------------------------------------------------------------- resize

def test_bilinear_examples():
    x = T(np.full((1, 1, 4, 4), 7.0))
    np.testing.assert_allclose(bilinear_resize(x, 2, 2).data, 7.0)
    r = T(np.arange(12.0).reshape(1, 1, 3, 4))
    np.testing.assert_array_equal(bilinear_resize(r, 3, 4).data, r.data)
    m = T(np.array([[0.0, 1.0], [1.0, 2.0]]).reshape(1, 1, 2, 2))
    assert bilinear_resize(m, 3, 3).data[0, 0, 1, 1] == pytest.approx(1.0)


@given(st.integers(2, 9), st.integers(1, 9))
def test_bilinear_rows_are_convex_weights(n_in, n_out):
    A = bilinear_matrix(n_in, n_out)
    assert np.all(A >= 0)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)


# ------------------------------------------------------------------ l1

def test_l1_examples():
    assert l1_loss(T([1.0, 2.0]), T([1.0, 2.0])).item() == 0.0
    assert l1_loss(T(np.ones((2, 3)) + 4), T(np.full((2, 3), 4.0))).item() == 1.0
    assert l1_loss(T([0.0, 2.0]), T([1.0, 0.0])).item() == 1.5


# ------------------------------------------------------------ backward

def test_grad_of_weighted_sum_is_input(rng):
    x = rng.standard_normal((2, 3))
    w = Parameter(rng.standard_normal((2, 3)), "w", dtype=np.float64)
    with Tape() as tape:
        loss = sum_all(mul(w, T(x)))
    tape.backward(loss)
    np.testing.assert_allclose(w.grad, x)


def test_unused_parameter_keeps_zero_grad(rng):
    w = Parameter(rng.standard_normal(3), "w")
    unused = Parameter(rng.standard_normal(3), "u")
    with Tape() as tape:
        loss = sum_all(mul(w, w))
    tape.backward(loss)
    np.testing.assert_array_equal(unused.grad, 0.0)
    assert np.any(w.grad != 0)


def test_backward_rejects_nonscalar_loss():
    w = Parameter(np.ones(3), "w")
    with Tape() as tape:
        out = mul(w, w)
    with pytest.raises(ValueError):
        tape.backward(out)


def test_forward_is_deterministic(rng):
    x = T(rng.standard_normal((1, 2, 6, 6)))
    w = T(rng.standard_normal((2, 2, 3, 3)))
    a = gelu(conv2d(x, w, None)).data
    b = gelu(conv2d(x, w, None)).data
    assert np.array_equal(a, b)


# ----------------------------------------------------------------- adamw

def test_adamw_zero_grad_no_decay_is_noop(rng):
    p = Parameter(rng.standard_normal(4), "p")
    before = p.data.copy()
    adamw_step([p], OptimizerState(weight_decay=0.0))
    np.testing.assert_array_equal(p.data, before)


def test_adamw_first_step_is_sign_step():
    p = Parameter(np.zeros(3), "p", dtype=np.float64)
    p.grad = np.array([0.5, -2.0, 3.0])
    adamw_step([p], OptimizerState(lr=1e-3, weight_decay=0.0))
    np.testing.assert_allclose(p.data, -1e-3 * np.sign([0.5, -2.0, 3.0]), rtol=1e-6)


def test_adamw_quadratic_descends():
    w = Parameter(np.zeros(1), "w", dtype=np.float64)
    state = OptimizerState(lr=0.1, weight_decay=0.0)
    losses = []
    for _ in range(10):
        w.zero_grad()
        with Tape() as tape:
            d = w - Tensor(np.array([3.0]))
            loss = sum_all(mul(d, d))
        tape.backward(loss)
        losses.append(loss.item())
        adamw_step([w], state)
    assert all(b < a for a, b in zip(losses, losses[1:]))
