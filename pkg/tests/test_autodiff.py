import numpy as np
import pytest

from memtracker import autodiff as ad
from memtracker.autodiff import Tensor


def t64(data, requires_grad=False):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


# --- cosine similarity -------------------------------------------------------

def test_cosine_identical_direction():
    assert ad.cosine_similarity(t64([1, 0]), t64([1, 0])).item() == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert ad.cosine_similarity(t64([1, 0]), t64([0, 1])).item() == pytest.approx(0.0)


def test_cosine_hand_value():
    # 32 / sqrt(14 * 77)
    got = ad.cosine_similarity(t64([1, 2, 3]), t64([4, 5, 6])).item()
    assert got == pytest.approx(0.974631846, abs=1e-9)


def test_cosine_zero_vector_convention():
    assert ad.cosine_similarity(t64([0, 0, 0]), t64([1, 2, 3])).item() == 0.0


def test_cosine_shape_mismatch():
    with pytest.raises(ValueError):
        ad.cosine_similarity(t64([1, 2]), t64([1, 2, 3]))


def test_cosine_scale_invariance_and_bound(rng):
    for _ in range(50):
        x = rng.standard_normal(6)
        alpha = float(rng.uniform(0.1, 10.0))
        c1 = ad.cosine_similarity(t64(x), t64(alpha * x)).item()
        assert c1 == pytest.approx(1.0, abs=1e-9)
        y = rng.standard_normal(6)
        c = ad.cosine_similarity(t64(x), t64(y)).item()
        assert abs(c) <= 1.0 + 1e-9


# --- softmax -----------------------------------------------------------------

def test_softmax_symmetry():
    np.testing.assert_allclose(ad.softmax(t64([0.0, 0.0])).data, [0.5, 0.5])


def test_softmax_closed_form():
    np.testing.assert_allclose(ad.softmax(t64([np.log(2.0), 0.0])).data, [2 / 3, 1 / 3], atol=1e-12)


def test_softmax_shift_invariance(rng):
    v = rng.standard_normal(7)
    a = ad.softmax(t64(v)).data
    b = ad.softmax(t64(v + 13.7)).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_softmax_simplex(rng):
    for _ in range(30):
        p = ad.softmax(t64(rng.standard_normal(9) * 5)).data
        assert (p > 0).all()
        assert p.sum() == pytest.approx(1.0, abs=1e-6)


def test_softmax_empty_rejected():
    with pytest.raises(ValueError):
        ad.softmax(t64([]))


# --- avg_pool ----------------------------------------------------------------

def test_avg_pool_constant_map():
    m = t64(np.full((5, 5, 2), 3.25))
    out = ad.avg_pool(m, 3, 1)
    np.testing.assert_allclose(out.data, 3.25)


def test_avg_pool_hand_mean():
    m = t64(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
    out = ad.avg_pool(m, 2, 1)
    assert out.data.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == pytest.approx(2.5)


def test_avg_pool_identity():
    m = t64(np.arange(18.0).reshape(3, 3, 2))
    np.testing.assert_allclose(ad.avg_pool(m, 1, 1).data, m.data)


def test_avg_pool_window_too_large():
    with pytest.raises(ValueError):
        ad.avg_pool(t64(np.zeros((3, 3, 1))), 4, 1)


def test_avg_pool_output_extent(rng):
    m = t64(rng.standard_normal((9, 9, 2)))
    out = ad.avg_pool(m, 3, 2)
    assert out.data.shape == ((9 - 3) // 2 + 1, (9 - 3) // 2 + 1, 2)


# --- cross_correlate ---------------------------------------------------------

def _sliding_dot(search, template):
    H, W, _ = search.shape
    n = template.shape[0]
    out = np.zeros((H - n + 1, W - n + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = float((search[i:i + n, j:j + n, :] * template).sum())
    return out


def test_cross_correlate_zero_template(rng):
    s = t64(rng.standard_normal((6, 6, 3)))
    out = ad.cross_correlate(s, t64(np.zeros((2, 2, 3))))
    np.testing.assert_allclose(out.data, 0.0)


def test_cross_correlate_embedded_argmax(rng):
    template = rng.standard_normal((3, 3, 2))
    search = np.zeros((9, 9, 2))
    search[4:7, 2:5, :] = template
    out = ad.cross_correlate(t64(search), t64(template)).data
    assert np.unravel_index(np.argmax(out), out.shape) == (4, 2)


def test_cross_correlate_translation_equivariance(rng):
    template = rng.standard_normal((3, 3, 2))
    search = np.zeros((10, 10, 2))
    search[2:5, 3:6, :] = template
    r1 = ad.cross_correlate(t64(search), t64(template)).data
    r2 = ad.cross_correlate(t64(np.roll(search, 1, axis=0)), t64(template)).data
    p1 = np.unravel_index(np.argmax(r1), r1.shape)
    p2 = np.unravel_index(np.argmax(r2), r2.shape)
    assert (p1[0] + 1, p1[1]) == p2


def test_cross_correlate_matches_bruteforce(rng):
    for _ in range(5):
        s = rng.standard_normal((16, 16, 8))
        t = rng.standard_normal((5, 5, 8))
        got = ad.cross_correlate(t64(s), t64(t)).data
        np.testing.assert_allclose(got, _sliding_dot(s, t), atol=1e-12)


def test_cross_correlate_channel_mismatch():
    with pytest.raises(ValueError):
        ad.cross_correlate(t64(np.zeros((5, 5, 2))), t64(np.zeros((2, 2, 3))))


# --- layer_norm --------------------------------------------------------------

def test_layer_norm_constant_input():
    v = t64(np.full(6, 2.0))
    out = ad.layer_norm(v, t64(np.ones(6)), t64(np.zeros(6)))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-6)


def test_layer_norm_standardizes(rng):
    v = t64(rng.standard_normal(64) * 3 + 1)
    out = ad.layer_norm(v, t64(np.ones(64)), t64(np.zeros(64)), eps=1e-10).data
    assert out.mean() == pytest.approx(0.0, abs=1e-9)
    assert out.var() == pytest.approx(1.0, abs=1e-6)


def test_layer_norm_hand_case():
    out = ad.layer_norm(t64([1.0, 3.0]), t64([1.0, 1.0]), t64([0.0, 0.0]), eps=1e-14)
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-6)


# --- dense_affine ------------------------------------------------------------

def test_dense_affine_zero_matrix(rng):
    x = t64(rng.standard_normal(4))
    b = t64(rng.standard_normal(3))
    out = ad.dense_affine(x, t64(np.zeros((3, 4))), b)
    np.testing.assert_allclose(out.data, b.data)


def test_dense_affine_identity():
    x = t64([1.5, -2.0, 0.25])
    out = ad.dense_affine(x, t64(np.eye(3)), t64(np.zeros(3)))
    np.testing.assert_allclose(out.data, x.data)


def test_dense_affine_hand_value():
    out = ad.dense_affine(t64([1.0, 1.0]), t64([[1.0, 2.0], [3.0, 4.0]]), t64([0.0, 0.0]))
    np.testing.assert_allclose(out.data, [3.0, 7.0])


def test_dense_affine_shape_mismatch():
    with pytest.raises(ValueError):
        ad.dense_affine(t64([1.0, 2.0, 3.0]), t64(np.zeros((2, 2))), t64(np.zeros(2)))


# --- conv2d ------------------------------------------------------------------

def _conv_reference(x, k, stride):
    H, W, Cin = x.shape
    kh, kw, _, Cout = k.shape
    oh = (H - kh) // stride + 1
    ow = (W - kw) // stride + 1
    out = np.zeros((oh, ow, Cout))
    for p in range(oh):
        for q in range(ow):
            for co in range(Cout):
                acc = 0.0
                for u in range(kh):
                    for v in range(kw):
                        for ci in range(Cin):
                            acc += x[p * stride + u, q * stride + v, ci] * k[u, v, ci, co]
                out[p, q, co] = acc
    return out


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((5, 5, 3))
    k = np.zeros((1, 1, 3, 3))
    for c in range(3):
        k[0, 0, c, c] = 1.0
    out = ad.conv2d(t64(x), t64(k), 1).data
    np.testing.assert_allclose(out, x)


def test_conv2d_delta_kernel_shifts(rng):
    x = rng.standard_normal((6, 6, 1))
    k = np.zeros((2, 2, 1, 1))
    k[1, 0, 0, 0] = 1.0  # picks the pixel one row down
    out = ad.conv2d(t64(x), t64(k), 1).data
    np.testing.assert_allclose(out[:, :, 0], x[1:6, 0:5, 0])


def test_conv2d_matches_loop_reference(rng):
    x = rng.standard_normal((5, 5, 2))
    k = rng.standard_normal((3, 3, 2, 4))
    for stride in (1, 2):
        got = ad.conv2d(t64(x), t64(k), stride).data
        np.testing.assert_allclose(got, _conv_reference(x, k, stride), atol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(ValueError):
        ad.conv2d(t64(np.zeros((5, 5, 2))), t64(np.zeros((3, 3, 3, 4))), 1)


# --- backward ----------------------------------------------------------------

def test_backward_sum_of_squares(rng):
    x = Tensor(rng.standard_normal(7), requires_grad=True, dtype=np.float64)
    loss = ad.tsum(ad.mul(x, x))
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_backward_constants_get_no_gradient(rng):
    x = Tensor(rng.standard_normal(4), requires_grad=True, dtype=np.float64)
    const = Tensor(rng.standard_normal(4))
    loss = ad.tsum(ad.mul(x, const))
    ad.backward(loss)
    assert const.grad is None
    np.testing.assert_allclose(x.grad, const.data)


def test_backward_rejects_nonscalar(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(ad.mul(x, 2.0))


def test_backward_accumulates_across_paths():
    x = Tensor(np.array(3.0), requires_grad=True, dtype=np.float64)
    y = ad.add(ad.mul(x, x), ad.mul(x, 4.0))  # x^2 + 4x -> dy/dx = 2x + 4
    ad.backward(y)
    assert x.grad == pytest.approx(10.0)


def test_backward_visits_shared_subgraph_once():
    x = Tensor(np.array(2.0), requires_grad=True, dtype=np.float64)
    shared = ad.mul(x, x)
    total = ad.add(shared, shared)  # 2x^2 -> d/dx = 4x
    ad.backward(total)
    assert x.grad == pytest.approx(8.0)


def test_no_grad_blocks_recording():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with ad.no_grad():
        y = ad.mul(x, x)
    assert y._backward is None and not y.requires_grad


def test_deep_graph_iterative_backward():
    x = Tensor(np.array(1.0), requires_grad=True, dtype=np.float64)
    y = x
    for _ in range(5000):
        y = ad.add(y, 0.0)
    ad.backward(y)
    assert x.grad == pytest.approx(1.0)


def test_getitem_slice_gradient(rng):
    x = Tensor(rng.standard_normal((4, 4, 2)), requires_grad=True, dtype=np.float64)
    loss = ad.tsum(x[1:3, 2:4, :])
    ad.backward(loss)
    expect = np.zeros_like(x.data)
    expect[1:3, 2:4, :] = 1.0
    np.testing.assert_allclose(x.grad, expect)
