"""Contextual calibrated decoder: embedding fusion, calibrated loss, total objective."""

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .encoders import EMBED
from .layers import Linear, Module

ALPHA = 0.3
BETA = 0.7
LAMBDA = 0.02
GAMMA = 0.9
DELTA = 0.1
LOG_EPS = 1e-7


class FusionParams(Module):
    """Projections for the pre-graph (vision-kinematic) and graph embeddings, and the classifier.

    ``n_nodes`` is the number of modality nodes feeding each projection (four
    with every visual domain enabled).
    """

    def __init__(self, rng, n_classes, n_nodes=4, width=EMBED, alpha=ALPHA, beta=BETA, fused_in=None):
        if alpha < 0 or beta < 0:
            raise ValueError("mixing weights must be non-negative")
        self.lin_vk = Linear(rng, n_nodes * width, width)
        self.lin_g = Linear(rng, fused_in or n_nodes * width, width)
        self.head = Linear(rng, width, n_classes)
        self.alpha = alpha
        self.beta = beta
        self.width = width


def fuse(embeddings, graph_nodes, params):
    """E = alpha * l(x_i || x_w || x_f || x_k) + beta * l(graph-updated nodes concatenated).

    ``embeddings`` and ``graph_nodes`` are ordered lists of [T, 64] tensors.
    """
    for x in list(embeddings) + list(graph_nodes):
        if x.ndim != 2 or x.shape[1] != params.width:
            raise tn.DimensionError(f"fusion input must be [T, {params.width}], got {x.shape}")
    e_vk = params.lin_vk(tn.concat(embeddings, axis=1))
    e_g = params.lin_g(tn.concat(graph_nodes, axis=1))
    return tn.add(tn.scale(e_vk, params.alpha), tn.scale(e_g, params.beta))


def _check_labels(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels


def calibrated_ce(logits, labels, lam=LAMBDA):
    """Mean over frames of -(1 + lam * p_y) * log p_y with p = softmax(logits)."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    T, C = logits.shape
    labels = _check_labels(labels, C)
    onehot = np.zeros((T, C), dtype=logits.data.dtype)
    onehot[np.arange(T), labels] = 1.0
    p = tn.softmax(logits, axis=1)
    p_y = tn.sum_(tn.mul(p, onehot), axis=1)
    nll = tn.scale(tn.log(tn.clip(p_y, LOG_EPS, 1.0)), -1.0)
    if lam == 0:
        return tn.mean(nll)
    weight = tn.add(tn.scale(p_y, lam), 1.0)
    return tn.mean(tn.mul(weight, nll))


def total_loss(l_cce, l_al, gamma=GAMMA, delta=DELTA):
    if l_al is None or delta == 0:
        return tn.scale(l_cce, gamma)
    return tn.add(tn.scale(l_cce, gamma), tn.scale(l_al, delta))


@dataclass
class Prediction:
    probs: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray


def predict(E, head):
    """Per-frame class distribution, argmax label and max probability."""
    with tn.no_grad():
        logits = head(E)
        p = tn.softmax(logits, axis=1).data
    return Prediction(p, p.argmax(axis=1), p.max(axis=1))
