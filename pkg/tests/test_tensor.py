from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from grad_workflow import tensor as tn
from grad_workflow.rng import Rng
from grad_workflow.tensor import Tensor

from conftest import check_grads, numeric_grad, rel_err

PRIMITIVE_TOL = 1e-5


def param(rng, *shape, scale=1.0):
    return tn.parameter(rng.normal(shape) * scale)


# ---------------------------------------------------------------- matmul

def test_matmul_identity_and_projector():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(tn.matmul(Tensor(np.eye(2)), a).data, a.data)
    out = tn.matmul(Tensor([[1.0, 0.0], [0.0, 0.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
    assert np.array_equal(out.data, [[5.0, 6.0], [0.0, 0.0]])


def test_matmul_gradient(f64, rng):
    a, b = param(rng, 3, 4), param(rng, 4, 2)
    assert check_grads(lambda: tn.sum_(tn.matmul(a, b)), [a, b]) <= PRIMITIVE_TOL


def test_matmul_shape_mismatch():
    with pytest.raises(tn.DimensionError):
        tn.matmul(Tensor(np.ones((3, 4))), Tensor(np.ones((3, 2))))


# ---------------------------------------------------------------- activations

def test_activation_values():
    assert tn.sigmoid(Tensor(0.0)).item() == 0.5
    assert tn.leaky_relu(Tensor(-1.0)).item() == pytest.approx(-0.2)
    assert tn.relu(Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]


def test_tanh_gradient_at_point(f64):
    x = tn.parameter(np.array([0.3]))
    with tn.Tape():
        tn.backward(tn.sum_(tn.tanh(x)))
    num = numeric_grad(lambda: float(np.tanh(x.data).sum()), x.data)
    assert abs(x.grad[0] - num[0]) <= 1e-6


@pytest.mark.parametrize("op", [tn.relu, tn.leaky_relu, tn.tanh, tn.sigmoid, tn.exp])
def test_elementwise_gradients(f64, rng, op):
    x = param(rng, 3, 5)
    x.data += 0.05 * np.sign(x.data)  # keep away from the relu kink
    w = rng.normal((3, 5))
    assert check_grads(lambda: tn.sum_(tn.mul(op(x), w)), [x]) <= PRIMITIVE_TOL


def test_log_gradient_and_domain(f64, rng):
    x = tn.parameter(rng.uniform((4, 3), 0.5, 2.0))
    assert check_grads(lambda: tn.sum_(tn.log(x)), [x]) <= PRIMITIVE_TOL
    with pytest.raises(tn.NumericDomainError):
        tn.log(Tensor([1.0, 0.0]))


def test_exp_overflow_raises():
    with pytest.raises(tn.NumericDomainError):
        tn.exp(Tensor([1000.0]))


def test_sigmoid_extremes_finite():
    out = tn.sigmoid(Tensor([-1e3, 1e3])).data
    assert np.all(np.isfinite(out)) and out[0] >= 0 and out[1] <= 1


def test_binary_op_gradients(f64, rng):
    a, b = param(rng, 2, 3, 4), param(rng, 3, 4)
    c = param(rng, 4)
    for fn in (lambda: tn.sum_(tn.mul(tn.add(a, b), c)),
               lambda: tn.sum_(tn.sub(a, tn.mul(b, b))),
               lambda: tn.mean(tn.scale(tn.mul(a, a), 0.7))):
        assert check_grads(fn, [a, b, c]) <= PRIMITIVE_TOL


def test_broadcast_is_trailing_only():
    with pytest.raises(tn.DimensionError):
        tn.add(Tensor(np.ones((3, 4))), Tensor(np.ones((3, 1))))
    assert tn.add(Tensor(np.ones((3, 4))), Tensor(np.ones(4))).shape == (3, 4)


def test_clip_gradient_masks(f64):
    x = tn.parameter(np.array([-2.0, 0.5, 3.0]))
    with tn.Tape():
        tn.backward(tn.sum_(tn.clip(x, 0.0, 1.0)))
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


# ---------------------------------------------------------------- softmax

def test_softmax_examples(f64):
    assert np.array_equal(tn.softmax(Tensor(np.zeros(4))).data, np.full(4, 0.25))
    x = np.array([0.3, -1.2, 2.0])
    assert np.allclose(tn.softmax(Tensor(x)).data, tn.softmax(Tensor(x + 17.0)).data, rtol=0, atol=1e-15)


def test_softmax_against_decimal_oracle(f64):
    getcontext().prec = 50
    ex = [Decimal(v).exp() for v in (1, 2, 3)]
    ref = [float(e / sum(ex)) for e in ex]
    out = tn.softmax(Tensor([1.0, 2.0, 3.0])).data
    assert np.max(np.abs(out - ref)) <= 1e-12


def test_softmax_gradient(f64, rng):
    x = param(rng, 4, 6)
    w = rng.normal((4, 6))
    for axis in (0, 1):
        assert check_grads(lambda: tn.sum_(tn.mul(tn.softmax(x, axis), w)), [x]) <= PRIMITIVE_TOL


# ---------------------------------------------------------------- shape ops

def test_concat_examples():
    a = Tensor(np.ones((2, 3)))
    assert tn.concat([a], axis=1) is a
    assert tn.concat([a, Tensor(np.zeros((2, 5)))], axis=1).shape == (2, 8)
    with pytest.raises(tn.DimensionError):
        tn.concat([a, Tensor(np.zeros((3, 5)))], axis=1)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float32, (3, 4), elements=st.floats(-1e3, 1e3, width=32)),
       hnp.arrays(np.float32, (3, 2), elements=st.floats(-1e3, 1e3, width=32)))
def test_concat_then_slice_round_trip(a, b):
    out = tn.concat([Tensor(a), Tensor(b)], axis=1)
    assert np.array_equal(out[:, :4].data, a)
    assert np.array_equal(out[:, 4:].data, b)


def test_shape_op_gradients(f64, rng):
    a, b = param(rng, 2, 3), param(rng, 2, 4)
    w = rng.normal((4, 2))

    def f():
        c = tn.concat([a, b], axis=1)
        s = tn.stack([c[:, 1:5], tn.transpose(tn.reshape(b, (4, 2)))], axis=0)
        return tn.sum_(tn.mul(tn.transpose(tn.sum_(s, axis=0)), w))
    assert check_grads(f, [a, b]) <= PRIMITIVE_TOL
    x = param(rng, 3, 1)
    gx = rng.normal((3, 5))
    assert check_grads(lambda: tn.sum_(tn.mul(tn.expand(x, (3, 5)), gx)), [x]) <= PRIMITIVE_TOL


def test_reductions(f64, rng):
    x = param(rng, 3, 4, 2)
    w = rng.normal((3, 2))
    assert check_grads(lambda: tn.sum_(tn.mul(tn.mean(x, axis=1), w)), [x]) <= PRIMITIVE_TOL
    assert check_grads(lambda: tn.sum_(tn.sum_(x, axis=(0, 2), keepdims=True)), [x]) <= PRIMITIVE_TOL


# ---------------------------------------------------------------- dropout

def test_dropout_identities(rng):
    x = Tensor(rng.normal((5, 5)))
    assert tn.dropout(x, 0.0, rng, True) is x
    assert tn.dropout(x, 0.5, rng, False) is x
    with pytest.raises(ValueError):
        tn.dropout(x, 1.0, rng, True)


def test_dropout_mean_monte_carlo():
    out = tn.dropout(Tensor(np.ones(10 ** 6)), 0.5, Rng(3), True).data
    assert abs(out.mean() - 1.0) <= 0.01


def test_dropout_gradient_uses_mask(f64):
    x = tn.parameter(np.ones(1000))
    with tn.Tape():
        y = tn.dropout(x, 0.5, Rng(9), True)
        tn.backward(tn.sum_(y))
    assert np.array_equal(x.grad, y.data)


# ---------------------------------------------------------------- convolutions

def test_conv1d_examples():
    x = Tensor(np.arange(1.0, 6.0)[None])
    assert np.array_equal(tn.conv1d(x, Tensor(np.ones((1, 1, 1)))).data, x.data)
    shifted = tn.conv1d(x, Tensor(np.array([[[1.0, 0.0, 0.0]]]))).data
    assert shifted.tolist() == [[0.0, 1.0, 2.0, 3.0, 4.0]]


def test_conv1d_gradient(f64, rng):
    x, w, b = param(rng, 2, 8), param(rng, 3, 2, 5), param(rng, 3)
    g = rng.normal((3, 8))
    assert check_grads(lambda: tn.sum_(tn.mul(tn.conv1d(x, w, b), g)), [x, w, b]) <= PRIMITIVE_TOL


def test_conv2d_gradient(f64, rng):
    x, w, b = param(rng, 2, 2, 6, 6), param(rng, 3, 2, 3, 3), param(rng, 3)
    g = rng.normal((2, 3, 6, 6))
    assert check_grads(lambda: tn.sum_(tn.mul(tn.conv2d(x, w, b), g)), [x, w, b]) <= PRIMITIVE_TOL


def test_conv2d_matches_direct_sum(f64, rng):
    x, w = rng.normal((2, 5, 5)), rng.normal((1, 2, 3, 3))
    out = tn.conv2d(Tensor(x), Tensor(w)).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    ref = np.array([[np.sum(xp[:, i:i + 3, j:j + 3] * w[0]) for j in range(5)] for i in range(5)])
    assert np.allclose(out[0], ref, atol=1e-12)


def test_pool_and_upsample_gradients(f64, rng):
    x = param(rng, 3, 7)
    g = rng.normal((3, 4))
    assert check_grads(lambda: tn.sum_(tn.mul(tn.max_pool1d(x), g)), [x]) <= PRIMITIVE_TOL
    y = param(rng, 3, 4)
    gy = rng.normal((3, 8))
    assert check_grads(lambda: tn.sum_(tn.mul(tn.upsample1d(y), gy)), [y]) <= PRIMITIVE_TOL
    z = param(rng, 2, 4, 4)
    gz = rng.normal((2, 2, 2))
    assert check_grads(lambda: tn.sum_(tn.mul(tn.max_pool2d(z), gz)), [z]) <= PRIMITIVE_TOL


def test_lstm_gradient(f64, rng):
    x = param(rng, 5, 3)
    w_ih, w_hh, b = param(rng, 3, 8, scale=0.5), param(rng, 2, 8, scale=0.5), param(rng, 8)
    g = rng.normal((5, 2))
    assert check_grads(lambda: tn.sum_(tn.mul(tn.lstm(x, w_ih, w_hh, b), g)), [x, w_ih, w_hh, b]) <= PRIMITIVE_TOL


# ---------------------------------------------------------------- tape

def test_backward_trivial_cases(f64):
    x = tn.parameter(np.array([1.0, -2.0, 3.0]))
    with tn.Tape():
        tn.backward(tn.sum_(x))
    assert x.grad.tolist() == [1.0, 1.0, 1.0]
    x.grad = None
    with tn.Tape():
        tn.backward(tn.sum_(tn.mul(x, x)))
    assert np.array_equal(x.grad, 2 * x.data)


def test_backward_errors():
    x = tn.parameter(np.ones(3))
    with tn.Tape():
        with pytest.raises(tn.DimensionError):
            tn.backward(tn.mul(x, x))
    with pytest.raises(tn.TapeError):
        tn.backward(Tensor(1.0))


def test_no_grad_records_nothing():
    x = tn.parameter(np.ones(3))
    with tn.Tape() as tape:
        with tn.no_grad():
            y = tn.mul(x, x)
        assert not tape.nodes and y._tape is None


def test_gradient_accumulates_over_reuse(f64):
    x = tn.parameter(np.array([2.0]))
    with tn.Tape():
        tn.backward(tn.sum_(tn.add(tn.mul(x, x), tn.scale(x, 3.0))))
    assert x.grad[0] == pytest.approx(7.0)


def test_precision_context_restores_dtype():
    before = tn.get_dtype()
    with tn.precision(np.float64):
        assert tn.parameter(np.ones(2)).data.dtype == np.float64
    assert tn.get_dtype() == before


def test_rel_err_helper():
    assert rel_err([1.0, 2.0], [1.0, 2.0]) == 0.0
