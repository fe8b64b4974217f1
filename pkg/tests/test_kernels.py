"""Parity between the compiled kernel backend and the numpy fallback."""
import numpy as np
import pytest

from vampcf.kernels import ref

fast = pytest.importorskip("vampcf.kernels._fast", reason="compiled backend not built")

RNG = np.random.default_rng(123)


def _pairs(shape=(7, 11), lo=-30.0, hi=30.0, n=5):
    for _ in range(n):
        yield RNG.uniform(lo, hi, size=shape)


@pytest.mark.parametrize("fn", ["sigmoid", "softplus", "log_softmax_rows", "logsumexp_rows"])
def test_forward_parity(fn):
    for x in _pairs():
        a = getattr(ref, fn)(x)
        b = getattr(fast, fn)(x)
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


def test_sigmoid_extreme_arguments():
    x = np.array([[-800.0, -40.0, 0.0, 40.0, 800.0]])
    for impl in (ref, fast):
        y = impl.sigmoid(x)
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y[0, 2], 0.5, atol=1e-15)
        assert y[0, 0] == 0.0 and y[0, 4] == 1.0


def test_softplus_extreme_arguments():
    x = np.array([[-800.0, 0.0, 800.0]])
    for impl in (ref, fast):
        y = impl.softplus(x)
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y[0, 1], np.log(2.0), atol=1e-15)
        np.testing.assert_allclose(y[0, 2], 800.0, atol=1e-12)


def test_backward_parity():
    for x in _pairs(shape=(5, 9), lo=-5.0, hi=5.0):
        g = RNG.standard_normal(x.shape)
        sig = ref.sigmoid(x)
        np.testing.assert_allclose(ref.sigmoid_bwd(sig, g), fast.sigmoid_bwd(sig, g), rtol=1e-13)
        th = np.tanh(x)
        np.testing.assert_allclose(ref.tanh_bwd(th, g), fast.tanh_bwd(th, g), rtol=1e-13)
        np.testing.assert_allclose(ref.softplus_bwd(x, g), fast.softplus_bwd(x, g), rtol=1e-13)
        ls = ref.log_softmax_rows(x)
        np.testing.assert_allclose(ref.log_softmax_rows_bwd(ls, g),
                                   fast.log_softmax_rows_bwd(ls, g), rtol=1e-12, atol=1e-13)
        lse = ref.logsumexp_rows(x)
        gcol = RNG.standard_normal((x.shape[0], 1))
        np.testing.assert_allclose(ref.logsumexp_rows_bwd(x, lse, gcol),
                                   fast.logsumexp_rows_bwd(x, lse, gcol), rtol=1e-13)


def test_l2_normalize_parity_and_zero_rows():
    x = RNG.standard_normal((6, 4))
    x[2] = 0.0
    ya, inva = ref.l2_normalize_rows(x)
    yb, invb = fast.l2_normalize_rows(x)
    np.testing.assert_allclose(ya, yb, rtol=1e-14)
    np.testing.assert_allclose(inva, invb, rtol=1e-14)
    assert inva[2, 0] == 1.0
    g = RNG.standard_normal(x.shape)
    np.testing.assert_allclose(ref.l2_normalize_rows_bwd(ya, inva, g),
                               fast.l2_normalize_rows_bwd(yb, invb, g), rtol=1e-13)


def test_adam_update_parity():
    shape = (4, 3)
    p1 = RNG.standard_normal(shape)
    p2 = p1.copy()
    m1 = np.zeros(shape); v1 = np.zeros(shape)
    m2 = np.zeros(shape); v2 = np.zeros(shape)
    for t in range(1, 6):
        g = RNG.standard_normal(shape)
        ref.adam_update(p1, g, m1, v1, t, 1e-3, 0.9, 0.999, 1e-8)
        fast.adam_update(p2, g, m2, v2, t, 1e-3, 0.9, 0.999, 1e-8)
    np.testing.assert_allclose(p1, p2, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(m1, m2, rtol=1e-13)
    np.testing.assert_allclose(v1, v2, rtol=1e-13)
