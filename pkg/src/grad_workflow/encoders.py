"""Temporal encoders producing the four per-frame modality embeddings.

Visual domains (spatial, wavelet, Fourier) share one architecture with separate
weights: a three-block frame CNN, ReLU, dropout, then an encoder-decoder TCN.
Kinematics go through an LSTM and a TCN in parallel whose outputs are averaged.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as tn
from .freq import disentangle_frame
from .layers import Linear, Module, he_normal, zeros
from .tensor import Tensor

EMBED = 64
CNN_CHANNELS = (8, 16, 32)
TCN_KERNEL = 5
VISUAL_DROPOUT = 0.5
DOMAIN_CHANNELS = {"i": 3, "w": 4, "f": 1}
DOMAIN_SEED = {"i": 0, "w": 1, "f": 2}
MIN_FRAMES = 4


class FrameCNN(Module):
    """3x3 conv -> leaky ReLU -> 2x2 max-pool, three times; global average pool; linear to 64."""

    def __init__(self, rng, in_ch, channels=CNN_CHANNELS, out=EMBED):
        prev = in_ch
        self.convs = {}
        for k, ch in enumerate(channels):
            self.convs[str(k)] = _Conv(rng, prev, ch)
            prev = ch
        self.in_ch = in_ch
        self.proj = Linear(rng, prev, out)

    def features(self, x):
        """Pooled conv features [N, 32] for frames [N, C, H, W]."""
        if x.shape[1] != self.in_ch:
            raise tn.DimensionError(f"expected {self.in_ch} input channels, got {x.shape[1]}")
        h = x
        for conv in self.convs.values():
            h = tn.max_pool2d(tn.leaky_relu(tn.conv2d(h, conv.w, conv.b)))
        return tn.mean(h, axis=(2, 3))

    def __call__(self, x):
        return self.proj(self.features(x))


class _Conv(Module):
    def __init__(self, rng, c_in, c_out, k=3):
        self.w = he_normal(rng, c_in * k * k, (c_out, c_in, k, k))
        self.b = zeros((c_out,))


class TCN(Module):
    """Acausal encoder-decoder: conv -> pool(2) -> conv -> upsample(2) -> conv, all k=5, 64 wide."""

    def __init__(self, rng, in_ch, ch=EMBED, k=TCN_KERNEL):
        self.w1 = he_normal(rng, in_ch * k, (ch, in_ch, k))
        self.b1 = zeros((ch,))
        self.w2 = he_normal(rng, ch * k, (ch, ch, k))
        self.b2 = zeros((ch,))
        self.w3 = he_normal(rng, ch * k, (ch, ch, k))
        self.b3 = zeros((ch,))
        self.in_ch = in_ch

    def __call__(self, x):
        """x [T, in] -> [T, 64]."""
        T = x.shape[0]
        h = tn.transpose(x)
        h = tn.leaky_relu(tn.conv1d(h, self.w1, self.b1))
        h = tn.max_pool1d(h, 2)
        h = tn.leaky_relu(tn.conv1d(h, self.w2, self.b2))
        h = tn.upsample1d(h, 2)
        if h.shape[1] != T:
            h = h[:, :T]
        h = tn.conv1d(h, self.w3, self.b3)
        return tn.transpose(h)

    @staticmethod
    def receptive_span(t, T, k=TCN_KERNEL):
        """Inclusive range of output frames that can depend on input frame ``t``."""
        r = (k - 1) // 2
        lo, hi = t - r, t + r
        lo, hi = lo // 2 - r, hi // 2 + r
        lo, hi = 2 * lo - r, 2 * hi + 1 + r
        return max(lo, 0), min(hi, T - 1)


class LSTM(Module):
    def __init__(self, rng, n_in, hidden=EMBED):
        self.w_ih = he_normal(rng, n_in, (n_in, 4 * hidden))
        self.w_ih.data *= 0.5
        self.w_hh = he_normal(rng, hidden, (hidden, 4 * hidden))
        self.w_hh.data *= 0.5
        b = np.zeros(4 * hidden, dtype=self.w_ih.data.dtype)
        b[hidden:2 * hidden] = 1.0  # forget-gate bias
        self.b = tn.parameter(b)

    def __call__(self, x):
        return tn.lstm(x, self.w_ih, self.w_hh, self.b)


class KinematicEncoder(Module):
    """Average of an LSTM and a TCN run over the joint (both arms) kinematic stream."""

    def __init__(self, rng, dim):
        if dim not in (14, 16):
            raise ValueError(f"kinematic dimension must be 14 or 16, got {dim}")
        self.dim = dim
        self.lstm = LSTM(rng, dim)
        self.tcn = TCN(rng, dim)

    def __call__(self, kin, tcn_off=False):
        if kin.shape[0] < MIN_FRAMES:
            raise ValueError(f"sequence too short for the TCN: T={kin.shape[0]} < {MIN_FRAMES}")
        if kin.shape[1] != self.dim:
            raise tn.DimensionError(f"expected {self.dim} kinematic values per frame, got {kin.shape[1]}")
        h = self.lstm(kin)
        if not tcn_off:
            h = tn.add(h, self.tcn(kin))
        return tn.scale(h, 0.5)


class VisualEncoder(Module):
    """Frame CNN -> ReLU -> dropout(0.5) -> TCN for one visual domain."""

    def __init__(self, rng, in_ch):
        self.cnn = FrameCNN(rng, in_ch)
        self.tcn = TCN(rng, EMBED)

    def __call__(self, frames, rng=None, training=False):
        return self.temporal(self.cnn(frames), rng, training)

    def from_features(self, pooled, rng=None, training=False):
        """Same as calling on frames, starting from cached pooled conv features [T, 32]."""
        return self.temporal(self.cnn.proj(pooled), rng, training)

    def temporal(self, frame_feats, rng, training):
        if frame_feats.shape[0] < MIN_FRAMES:
            raise ValueError(f"sequence too short for the TCN: T={frame_feats.shape[0]}")
        h = tn.relu(frame_feats)
        h = tn.dropout(h, VISUAL_DROPOUT, rng, training)
        return self.tcn(h)


@dataclass
class ModalityEmbeddings:
    x_i: Tensor
    x_w: Optional[Tensor]
    x_f: Optional[Tensor]
    x_k: Tensor

    def as_dict(self):
        return {k: v for k, v in (("i", self.x_i), ("w", self.x_w), ("f", self.x_f), ("k", self.x_k))
                if v is not None}

    def visual(self):
        return [v for v in (self.x_i, self.x_w, self.x_f) if v is not None]


def frame_views(frames):
    """Tensors-as-arrays for each visual domain from RGB frames [T, 3, H, W]."""
    spatial, wav, four = disentangle_frame(frames)
    return {"i": np.asarray(spatial), "w": wav, "f": four}


class Encoders(Module):
    """The visual encoders for the enabled domains plus the kinematic encoder."""

    def __init__(self, rng, kin_dim=14, domains=("i", "w", "f")):
        # child streams keyed by domain so toggling one domain leaves the others' init unchanged
        self.visual = {d: VisualEncoder(rng.spawn(DOMAIN_SEED[d]), DOMAIN_CHANNELS[d]) for d in domains}
        self.kin = KinematicEncoder(rng.spawn(10), kin_dim)

    @property
    def domains(self):
        return tuple(self.visual)


def encode_all(window, encoders, rng=None, training=False, pooled=None):
    """Embeddings for every enabled modality.

    ``window`` is a mapping with ``frames`` [T, 3, H, W] and ``kinematics``
    [T, D] (numpy or Tensor). ``pooled`` may carry cached conv features per
    domain ({domain: [T, 32]}), in which case frames are not touched.
    """
    kin = window["kinematics"]
    kin = kin if isinstance(kin, Tensor) else Tensor(kin)
    T = kin.shape[0]
    out = {}
    if pooled is None:
        frames = window["frames"]
        if isinstance(frames, Tensor):
            frames = frames.data
        if frames.shape[0] != T:
            raise ValueError(f"frame count {frames.shape[0]} != kinematic length {T}")
        views = window.get("views") or frame_views(frames)
        for d, enc in encoders.visual.items():
            out[d] = enc(Tensor(views[d]), rng, training)
    else:
        for d, enc in encoders.visual.items():
            feats = pooled[d]
            if feats.shape[0] != T:
                raise ValueError(f"{d} feature length {feats.shape[0]} != kinematic length {T}")
            out[d] = enc.from_features(feats if isinstance(feats, Tensor) else Tensor(feats), rng, training)
    out["k"] = encoders.kin(kin)
    return ModalityEmbeddings(out.get("i"), out.get("w"), out.get("f"), out["k"])
