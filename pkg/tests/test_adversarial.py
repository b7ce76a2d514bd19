import math

import numpy as np
import pytest

from grad_workflow import tensor as tn
from grad_workflow.adversarial import (
    Discriminator, discriminate, discriminator_bce, discriminator_step, vka_loss,
)
from grad_workflow.optim import Adam
from grad_workflow.rng import Rng
from grad_workflow.tensor import Tensor

from conftest import check_grads

LN_HALF = math.log(0.5)


def half_disc():
    d = Discriminator(Rng(0))
    d.zero_()
    return d


def test_zero_discriminator_outputs_half(rng):
    out = discriminate(Tensor(rng.normal((7, 64))), half_disc()).data
    assert np.array_equal(out, np.full((7, 1), 0.5, dtype=out.dtype))


def test_output_range_extremes(rng):
    d = Discriminator(rng)
    for v in (-1e3, 1e3):
        out = d(Tensor(np.full((2, 64), v))).data
        assert np.all((out >= 0) & (out <= 1)) and np.all(np.isfinite(out))


def test_shape_check(rng):
    with pytest.raises(tn.DimensionError):
        Discriminator(rng)(Tensor(np.zeros((3, 32))))


def test_discriminator_gradient(f64, rng):
    d = Discriminator(rng)
    x = tn.parameter(rng.normal((5, 64)))
    assert check_grads(lambda: tn.sum_(tn.log(d(x))), d.parameters() + [x]) <= 1e-5


def test_vka_at_equilibrium(f64, rng):
    xs = [Tensor(rng.normal((4, 64))) for _ in range(4)]
    loss = vka_loss(*xs, half_disc())
    assert abs(loss.l_al.item() - 2 * LN_HALF) <= 1e-9
    assert abs(loss.l_fal.item() - LN_HALF) <= 1e-12
    assert loss.l_al.item() == pytest.approx(-1.38629, abs=1e-5)


def test_vka_matches_scalar_oracle(f64, rng):
    d = Discriminator(rng)
    xs = [rng.normal((3, 64)) for _ in range(4)]
    got = vka_loss(*[Tensor(x) for x in xs], d).l_al.item()

    def D(row):
        h = row @ d.l1.w.data + d.l1.b.data
        h = np.where(h > 0, h, 0.2 * h)
        h = np.tanh(h @ d.l2.w.data + d.l2.b.data)
        z = float(h @ d.l3.w.data[:, 0] + d.l3.b.data[0])
        return 1.0 / (1.0 + math.exp(-z))

    fal = sum(math.log(1 - D(r)) for r in xs[3]) / 3
    tru = sum(sum(math.log(D(r)) for r in x) / 3 for x in xs[:3])
    assert abs(got - 0.5 * (fal + tru)) <= 1e-12


def test_vka_source_target_override(f64, rng):
    xs = [Tensor(rng.normal((4, 64))) for _ in range(4)]
    swapped = vka_loss(None, None, None, None, half_disc(), true_set=[xs[3]], false_set=xs[:3])
    assert swapped.l_al.item() == pytest.approx(2 * LN_HALF, abs=1e-12)


def test_vka_gradient_reaches_embeddings(f64, rng):
    d = Discriminator(rng)
    xs = [tn.parameter(rng.normal((3, 64))) for _ in range(4)]
    assert check_grads(lambda: vka_loss(*xs, d).l_al, xs, max_entries=20) <= 1e-5


def test_bce_reference_values(f64, rng):
    xs = [Tensor(rng.normal((5, 64))) for _ in range(2)]
    assert discriminator_bce([xs[0]], [xs[1]], half_disc()).item() == pytest.approx(math.log(2), abs=1e-12)
    perfect = half_disc()
    perfect.l3.b.data[:] = 0.0
    # route the sign of a constant feature to the output
    perfect.l1.w.data[0, 0] = 1.0
    perfect.l2.w.data[0, 0] = 1.0
    perfect.l3.w.data[0, 0] = 60.0
    pos, neg = np.zeros((4, 64)), np.zeros((4, 64))
    pos[:, 0], neg[:, 0] = 10.0, -10.0
    assert discriminator_bce([Tensor(pos)], [Tensor(neg)], perfect).item() < 1e-6


def test_discriminator_learns_separable_sets():
    r = Rng(11)
    d = Discriminator(Rng(5))
    opt = Adam(d.parameters(), 1e-3)
    for _ in range(200):
        true_set = [Tensor(r.normal((32, 64)) + 1.0)]
        false_set = [Tensor(r.normal((32, 64)) - 1.0)]
        bce = discriminator_step(true_set, false_set, d, opt)
    assert bce < 0.1


def test_discriminator_step_does_not_touch_embeddings(rng):
    d = Discriminator(Rng(5))
    x = tn.parameter(rng.normal((4, 64)))
    discriminator_step([x], [Tensor(rng.normal((4, 64)))], d, Adam(d.parameters(), 1e-3))
    assert x.grad is None
