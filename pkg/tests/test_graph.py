import math

import numpy as np
import pytest

from grad_workflow import tensor as tn
from grad_workflow.graph import GatParams, attention_scores, gat_forward
from grad_workflow.rng import Rng
from grad_workflow.tensor import Tensor

from conftest import check_grads

NODES = ("i", "w", "f", "k")


def dense_oracle(feats, W, a):
    """Straight-line single-head GAT: lists of floats, explicit loops."""
    names = list(feats)
    width = len(a) // 2
    proj = {}
    for m in names:
        proj[m] = [sum(feats[m][r] * W[m][r][c] for r in range(len(feats[m]))) for c in range(width)]
    out = {}
    for u in names:
        logits = []
        for v in names:
            e = sum(a[c] * proj[u][c] for c in range(width)) + sum(a[width + c] * proj[v][c] for c in range(width))
            logits.append(e if e > 0 else 0.2 * e)
        top = max(logits)
        ex = [math.exp(e - top) for e in logits]
        alpha = [x / sum(ex) for x in ex]
        agg = [sum(alpha[j] * proj[v][c] for j, v in enumerate(names)) for c in range(width)]
        out[u] = [x if x > 0 else 0.2 * x for x in agg]
    return out


def test_dense_oracle_single_head(f64):
    for seed in range(5):
        r = Rng(seed)
        params = GatParams(r, NODES, width=4, heads=1)
        feats = {m: r.normal((1, 4)) for m in NODES}
        got = gat_forward({m: Tensor(v) for m, v in feats.items()}, params).nodes
        ref = dense_oracle({m: v[0].tolist() for m, v in feats.items()},
                           {m: params.W[m].data.tolist() for m in NODES}, params.a.data[0].tolist())
        for m in NODES:
            assert np.max(np.abs(got[m].data[0] - ref[m])) <= 1e-10


def test_identical_nodes_uniform_attention(f64, rng):
    params = GatParams(rng, NODES, width=8, heads=2)
    shared = params.W["i"].data.copy()
    for m in NODES:
        params.W[m].data = shared.copy()
    x = rng.normal((3, 8))
    alpha = attention_scores({m: Tensor(x) for m in NODES}, params)
    assert np.allclose(alpha, 0.25, atol=1e-15)


def test_zero_attention_vector_uniform(rng):
    params = GatParams(rng, NODES)
    params.a.data[:] = 0
    alpha = attention_scores({m: Tensor(rng.normal((5, 64))) for m in NODES}, params)
    assert np.allclose(alpha, 0.25, atol=1e-7)


def test_attention_rows_sum_to_one_and_positive(rng):
    params = GatParams(rng, NODES)
    alpha = attention_scores({m: Tensor(rng.normal((50, 64)) * 3) for m in NODES}, params)
    assert np.allclose(alpha.sum(axis=-1), 1.0, atol=1e-6)
    assert np.all(alpha > 0)


def test_row_shift_invariance():
    e = np.array([0.3, -1.0, 2.0, 0.5])
    a = tn.softmax(Tensor(e)).data
    b = tn.softmax(Tensor(e + 4.0)).data
    assert np.allclose(a, b, atol=1e-7)


def test_eval_dropout_off_and_train_dropout_changes(rng):
    params = GatParams(rng, NODES)
    nodes = {m: Tensor(rng.normal((6, 64))) for m in NODES}
    a = gat_forward(nodes, params).nodes["k"].data
    b = gat_forward(nodes, params).nodes["k"].data
    assert np.array_equal(a, b)
    c = gat_forward(nodes, params, Rng(1), training=True).nodes["k"].data
    assert not np.array_equal(a, c)


def test_missing_node_and_shape_errors(rng):
    params = GatParams(rng, NODES)
    with pytest.raises(ValueError):
        gat_forward({m: Tensor(rng.normal((3, 64))) for m in ("i", "w", "f")}, params)
    bad = {m: Tensor(rng.normal((3, 64))) for m in NODES}
    bad["f"] = Tensor(rng.normal((3, 32)))
    with pytest.raises(tn.DimensionError):
        gat_forward(bad, params)
    with pytest.raises(ValueError):
        GatParams(rng, NODES, width=10, heads=4)


def test_gat_gradient(f64, rng):
    params = GatParams(rng, NODES, width=8, heads=2)
    feats = {m: tn.parameter(rng.normal((3, 8))) for m in NODES}
    w = rng.normal((3, 8))

    def loss():
        out = gat_forward(feats, params).nodes
        return tn.add(tn.sum_(tn.mul(out["i"], w)), tn.sum_(tn.mul(out["k"], out["k"])))

    assert check_grads(loss, params.parameters() + list(feats.values())) <= 1e-5
