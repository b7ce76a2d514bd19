import numpy as np
import pytest

from grad_workflow import tensor as tn
from grad_workflow.data import PhaseModel, generate_dataset
from grad_workflow.rng import Rng


def numeric_grad(f, x, h=1e-6, entries=None):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place).

    ``entries`` restricts the sweep to those flat indices (others stay 0).
    """
    g = np.zeros_like(x)
    flat = range(x.size) if entries is None else entries
    for k in flat:
        i = np.unravel_index(k, x.shape)
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


def check_grads(loss_fn, params, h=1e-6, max_entries=None, seed=0):
    """Analytic vs numeric gradient for every tensor in ``params``; returns the worst rel. error.

    With ``max_entries`` each tensor larger than that is probed at a fixed
    random subset of coordinates.
    """
    pick = Rng(seed)
    with tn.Tape():
        loss = loss_fn()
        for p in params:
            p.grad = None
        tn.backward(loss)
    worst = 0.0

    def value():
        with tn.no_grad():
            return float(loss_fn().data)

    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        if max_entries is None or p.size <= max_entries:
            worst = max(worst, rel_err(analytic, numeric_grad(value, p.data, h)))
            continue
        idx = pick.permutation(p.size)[:max_entries]
        num = numeric_grad(value, p.data, h, idx)
        worst = max(worst, rel_err(analytic.reshape(-1)[idx], num.reshape(-1)[idx]))
    return worst


@pytest.fixture
def f64():
    with tn.precision(np.float64):
        yield


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture(scope="session")
def tiny_data():
    """Four short training sequences and two test sequences."""
    pm = PhaseModel(seq_len=48, dur_min=6, dur_max=12)
    return generate_dataset(7, 4, 2, pm)
