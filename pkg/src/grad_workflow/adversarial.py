"""Vision-kinematic adversarial alignment: discriminator and losses.

The discriminator labels visual embeddings "true" (1) and kinematic embeddings
"false" (0). The network minimises

    L_AL = 0.5 * (mean_t log(1 - D(x_k)) + sum_v mean_t log D(x_v))

while the discriminator is trained with binary cross-entropy on detached
embeddings, which is the same min-max game.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .encoders import EMBED
from .layers import Linear, Module
from .tensor import Tensor

EPS = 1e-7


class Discriminator(Module):
    """64 -> 64 (leaky ReLU) -> 16 (tanh) -> 1 (sigmoid)."""

    def __init__(self, rng, width=EMBED):
        self.l1 = Linear(rng, width, 64)
        self.l2 = Linear(rng, 64, 16)
        self.l3 = Linear(rng, 16, 1)
        self.width = width

    def __call__(self, x):
        return discriminate(x, self)


def discriminate(x, params):
    if x.ndim != 2 or x.shape[1] != params.width:
        raise tn.DimensionError(f"discriminator expects [T, {params.width}], got {x.shape}")
    h = tn.leaky_relu(params.l1(x))
    h = tn.tanh(params.l2(h))
    return tn.sigmoid(params.l3(h))


@dataclass
class AdversarialLoss:
    l_fal: Tensor
    l_tru: Tensor
    l_al: Tensor


def _mean_log(p):
    return tn.mean(tn.log(tn.clip(p, EPS, 1.0 - EPS)))


def vka_loss(x_i, x_w, x_f, x_k, disc, true_set=None, false_set=None):
    """Adversarial alignment loss.

    By default the visual streams (``x_i``, ``x_w``, ``x_f``; ``None`` entries
    skipped) form the true set and ``x_k`` the false set. ``true_set`` and
    ``false_set`` override that with explicit lists of embeddings, which is how
    the source/target modality ablation is expressed.
    """
    if true_set is None:
        true_set = [x for x in (x_i, x_w, x_f) if x is not None]
    if false_set is None:
        false_set = [x_k]
    fal = None
    for x in false_set:
        term = _mean_log(tn.sub(1.0, discriminate(x, disc)))
        fal = term if fal is None else tn.add(fal, term)
    tru = None
    for x in true_set:
        term = _mean_log(discriminate(x, disc))
        tru = term if tru is None else tn.add(tru, term)
    return AdversarialLoss(fal, tru, tn.scale(tn.add(fal, tru), 0.5))


def discriminator_bce(true_set, false_set, disc):
    """Per-sample BCE with targets 1 for ``true_set`` rows and 0 for ``false_set`` rows."""
    terms = []
    count = 0
    for x in true_set:
        terms.append(tn.sum_(tn.log(tn.clip(discriminate(x, disc), EPS, 1.0 - EPS))))
        count += x.shape[0]
    for x in false_set:
        terms.append(tn.sum_(tn.log(tn.clip(tn.sub(1.0, discriminate(x, disc)), EPS, 1.0 - EPS))))
        count += x.shape[0]
    total = terms[0]
    for t in terms[1:]:
        total = tn.add(total, t)
    return tn.scale(total, -1.0 / count)


def discriminator_step(true_set, false_set, disc, opt):
    """One optimiser step of the discriminator on detached embeddings; returns the BCE."""
    true_set = [Tensor(x.data if isinstance(x, Tensor) else x) for x in true_set]
    false_set = [Tensor(x.data if isinstance(x, Tensor) else x) for x in false_set]
    with tn.Tape():
        opt.zero_grad()
        loss = discriminator_bce(true_set, false_set, disc)
        tn.backward(loss)
        opt.step()
    return float(loss.data)
