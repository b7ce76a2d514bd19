"""Multi-head graph attention over the complete modality graph (self-loops included).

Node ``u`` attends over every node ``v``; the message from ``v`` is ``v``'s own
projection ``W^v n_v``, split into ``heads`` slices that are recombined by
concatenation.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .encoders import EMBED
from .layers import Module, glorot

HEADS = 4
ATTN_DROPOUT = 0.5


class GatParams(Module):
    def __init__(self, rng, modalities=("i", "w", "f", "k"), width=EMBED, heads=HEADS):
        if width % heads:
            raise ValueError(f"width {width} not divisible by {heads} heads")
        self.modalities = tuple(modalities)
        self.heads = heads
        self.width = width
        self.W = {m: glorot(rng, width, width, (width, width)) for m in self.modalities}
        hd = width // heads
        self.a = glorot(rng, 2 * hd, 1, (heads, 2 * hd))


@dataclass
class GraphOutput:
    nodes: dict          # modality -> Tensor [T, width]
    attention: np.ndarray  # [T, heads, N, N], rows over targets u, columns over sources v


def _project(nodes, params):
    missing = [m for m in params.modalities if m not in nodes or nodes[m] is None]
    if missing:
        raise ValueError(f"missing graph node(s): {missing}")
    T = nodes[params.modalities[0]].shape[0]
    K, hd = params.heads, params.width // params.heads
    z = []
    for m in params.modalities:
        x = nodes[m]
        if x.ndim != 2 or x.shape[1] != params.W[m].shape[0] or x.shape[0] != T:
            raise tn.DimensionError(f"node {m} has shape {x.shape}, expected [{T}, {params.W[m].shape[0]}]")
        z.append(tn.reshape(tn.matmul(x, params.W[m]), (T, 1, K, hd)))
    return tn.concat(z, axis=1), T  # [T, N, K, hd]


def _logits(z, params, T):
    N = len(params.modalities)
    K, hd = params.heads, params.width // params.heads
    a_src = params.a[:, :hd]
    a_dst = params.a[:, hd:]
    s_src = tn.sum_(tn.mul(z, a_src), axis=-1)  # [T, N, K]: a_1 . W n_u
    s_dst = tn.sum_(tn.mul(z, a_dst), axis=-1)  # [T, N, K]: a_2 . W n_v
    e = tn.add(tn.expand(tn.reshape(s_src, (T, N, 1, K)), (T, N, N, K)),
               tn.expand(tn.reshape(s_dst, (T, 1, N, K)), (T, N, N, K)))
    return tn.leaky_relu(e)  # [T, u, v, K]


def attention_scores(nodes, params):
    """Attention coefficients [T, heads, N, N] (row u sums to one over v)."""
    with tn.no_grad():
        z, T = _project(nodes, params)
        alpha = tn.softmax(_logits(z, params, T), axis=2)
    return np.transpose(alpha.data, (0, 3, 1, 2)).copy()


def gat_forward(nodes, params, rng=None, training=False):
    """Updated node features for every modality plus the attention maps."""
    z, T = _project(nodes, params)
    N = len(params.modalities)
    K, hd = params.heads, params.width // params.heads
    alpha = tn.softmax(_logits(z, params, T), axis=2)
    attn = np.transpose(alpha.data, (0, 3, 1, 2)).copy()
    alpha = tn.dropout(alpha, ATTN_DROPOUT, rng, training)
    weights = tn.expand(tn.reshape(alpha, (T, N, N, K, 1)), (T, N, N, K, hd))
    msgs = tn.expand(tn.reshape(z, (T, 1, N, K, hd)), (T, N, N, K, hd))
    agg = tn.sum_(tn.mul(weights, msgs), axis=2)  # [T, N, K, hd]
    out = tn.leaky_relu(tn.reshape(agg, (T, N, K * hd)))
    updated = {m: tn.reshape(out[:, j, :], (T, K * hd)) for j, m in enumerate(params.modalities)}
    return GraphOutput(updated, attn)
