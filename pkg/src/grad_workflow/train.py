"""Training, evaluation, robustness sweeps and ablation grids.

Training runs in two stages. The frame CNNs are first fitted frame-wise with a
throwaway linear head per visual domain; their pooled conv features are then
cached and the temporal part of the network (CNN projections, TCNs, LSTM,
graph layer, fusion, classifier) is trained on 64-frame windows against the
joint objective while the discriminator is updated once per batch.
``epochs = 0`` skips both stages, so the returned model is its initialisation.
"""

import hashlib
import itertools
import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .adversarial import discriminator_step
from .config import RunConfig
from .corruption import GROUPS, KINDS, CorruptionSpec, corrupt_dataset
from .data import generate_dataset, load_dataset, windows
from .decoder import calibrated_ce
from .encoders import frame_views
from .layers import Linear
from .metrics import evaluate_sequences
from .model import GradModel
from .optim import Adam
from .rng import Rng
from .tensor import Tensor

FEATURE_BATCH = 128
CROP_PAD = 4


class DivergenceError(ArithmeticError):
    """Raised when a training loss becomes NaN or infinite."""


@dataclass
class TrainResult:
    model: GradModel
    log: list = field(default_factory=list)


def load_data(cfg):
    """(train, test) sequences from the configured files, else the synthetic default."""
    if cfg.train_path or cfg.test_path:
        if not (cfg.train_path and cfg.test_path):
            raise FileNotFoundError("both train_path and test_path must be set")
        return load_dataset(cfg.train_path), load_dataset(cfg.test_path)
    from .data import PhaseModel
    pm = PhaseModel(n_phases=cfg.n_classes, seq_len=cfg.seq_len)
    return generate_dataset(cfg.data_seed, cfg.n_train, cfg.n_test, pm)


def split_validation(sequences, fraction):
    """Last ``fraction`` of the training sequences (rounded) held out, never shuffled."""
    n_val = int(round(len(sequences) * fraction))
    if n_val >= len(sequences):
        n_val = len(sequences) - 1
    cut = len(sequences) - n_val
    return sequences[:cut], sequences[cut:]


@contextmanager
def _diverge_guard(where):
    try:
        yield
    except tn.NumericDomainError as exc:
        raise DivergenceError(f"numeric failure at {where}: {exc}") from exc


def _check_finite(value, where):
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss {value} at {where}")


# ---------------------------------------------------------------- stage 1

def _shift_augment(frames, rng):
    """Random translation by up to CROP_PAD pixels with reflected borders."""
    n, _, H, W = frames.shape
    padded = np.pad(frames, ((0, 0), (0, 0), (CROP_PAD, CROP_PAD), (CROP_PAD, CROP_PAD)), mode="reflect")
    offs = rng.integers(0, 2 * CROP_PAD + 1, (n, 2))
    return np.stack([padded[k, :, oy:oy + H, ox:ox + W] for k, (oy, ox) in enumerate(offs)])


def pretrain_backbone(model, sequences, cfg, log=None):
    """Frame-wise fitting of the frame CNNs and their projections."""
    encs = model.encoders.visual
    root = Rng(cfg.seed).spawn(200)
    heads = {d: Linear(root.spawn(10 + k), model.encoders.visual[d].cnn.proj.w.shape[1], model.n_classes)
             for k, d in enumerate(("i", "w", "f")) if d in encs}
    params = []
    for d, enc in encs.items():
        params += enc.cnn.parameters() + heads[d].parameters()
    opt = Adam(params, cfg.backbone_lr)
    shuffle, aug = root.spawn(1), root.spawn(2)
    stride = cfg.backbone_stride
    for epoch in range(cfg.backbone_epochs):
        index = [(s, t) for s, seq in enumerate(sequences) for t in range(epoch % stride, seq.T, stride)]
        order = shuffle.permutation(len(index))
        total, steps = 0.0, 0
        for start in range(0, len(order), cfg.backbone_batch):
            picks = [index[j] for j in order[start:start + cfg.backbone_batch]]
            frames = np.stack([sequences[s].frames[t] for s, t in picks])
            labels = np.array([sequences[s].labels[t] for s, t in picks])
            views = frame_views(_shift_augment(frames, aug))
            with _diverge_guard(f"backbone epoch {epoch + 1}"), tn.Tape():
                opt.zero_grad()
                loss = None
                for d, enc in encs.items():
                    h = tn.relu(enc.cnn(Tensor(views[d])))
                    term = calibrated_ce(heads[d](h), labels, 0.0)
                    loss = term if loss is None else tn.add(loss, term)
                tn.backward(loss)
                opt.step()
            value = float(loss.data) / len(encs)
            _check_finite(value, f"backbone epoch {epoch + 1}")
            total += value
            steps += 1
        if log is not None:
            log.append({"stage": "backbone", "epoch": epoch + 1, "train_loss": total / max(steps, 1),
                        "val_acc": None})
    return model


def pooled_features(model, frames):
    """Cached conv features {domain: [T, 32]} for raw RGB frames [T, 3, H, W]."""
    out = {d: [] for d in model.encoders.visual}
    with tn.no_grad():
        for start in range(0, frames.shape[0], FEATURE_BATCH):
            views = frame_views(frames[start:start + FEATURE_BATCH])
            for d, enc in model.encoders.visual.items():
                out[d].append(enc.cnn.features(Tensor(views[d])).data)
    return {d: np.concatenate(v) for d, v in out.items()}


# ---------------------------------------------------------------- stage 2

def predict_labels(model, seq, pooled=None):
    """Full-sequence inference (no windowing) -> per-frame labels."""
    pooled = pooled if pooled is not None else pooled_features(model, seq.frames)
    with tn.no_grad():
        out = model.forward({"kinematics": seq.kinematics}, training=False, pooled=pooled)
    return out["logits"].data.argmax(axis=1)


def _accuracy(model, seqs, feats):
    if not seqs:
        return None
    hits = sum(int(np.sum(predict_labels(model, s, f) == s.labels)) for s, f in zip(seqs, feats))
    return 100.0 * hits / sum(s.T for s in seqs)


def train_temporal(model, train_seqs, train_feats, val_seqs, val_feats, cfg, log=None):
    """Joint training of everything above the frame CNNs on cached features."""
    root = Rng(cfg.seed).spawn(300)
    shuffle, drop = root.spawn(1), root.spawn(2)
    opt = Adam(model.network_parameters(include_convs=False), cfg.lr)
    disc_opt = Adam(model.disc.parameters(), cfg.lr)
    use_vka = cfg.enable_vka and cfg.effective_delta > 0
    index = [(s, t0) for s, seq in enumerate(train_seqs) for t0 in windows(seq.T, cfg.window, cfg.stride)]
    per_step = max(1, cfg.batch_size // cfg.window)
    for epoch in range(cfg.epochs):
        order = shuffle.permutation(len(index))
        total, d_total, steps = 0.0, 0.0, 0
        for start in range(0, len(order), per_step):
            picks = [index[j] for j in order[start:start + per_step]]
            with _diverge_guard(f"epoch {epoch + 1} step {steps + 1}"), tn.Tape():
                opt.zero_grad()
                outs = []
                for s, t0 in picks:
                    seq = train_seqs[s]
                    sl = slice(t0, t0 + cfg.window)
                    pooled = {d: f[sl] for d, f in train_feats[s].items()}
                    out = model.forward({"kinematics": seq.kinematics[sl]}, drop, True, pooled)
                    outs.append((out, seq.labels[sl]))
                if use_vka:
                    true_set, false_set = [], []
                    for out, _ in outs:
                        a, b = model.adversarial_sets(out["nodes"])
                        true_set += a
                        false_set += b
                    d_loss = discriminator_step(true_set, false_set, model.disc, disc_opt)
                    _check_finite(d_loss, f"epoch {epoch + 1} discriminator")
                    d_total += d_loss
                    disc_opt.zero_grad()
                loss = None
                for out, labels in outs:
                    term, _, _ = model.objective(out, labels)
                    loss = term if loss is None else tn.add(loss, term)
                loss = tn.scale(loss, 1.0 / len(outs))
                value = float(loss.data)
                _check_finite(value, f"epoch {epoch + 1} step {steps + 1}")
                tn.backward(loss)
                opt.step()
                # discriminator grads from the joint loss are discarded, it only learns from its BCE
                disc_opt.zero_grad()
            total += value
            steps += 1
        entry = {"stage": "temporal", "epoch": epoch + 1, "train_loss": total / max(steps, 1),
                 "val_acc": _accuracy(model, val_seqs, val_feats)}
        if use_vka:
            entry["disc_loss"] = d_total / max(steps, 1)
        if log is not None:
            log.append(entry)
    return model


def train(cfg, data=None, backbone_cache=None, progress=None):
    """Train a model for ``cfg``; ``data`` is (train, test) or loaded from the config.

    ``backbone_cache`` (a dict) lets several runs with the same seed share the
    frame-wise stage, which only depends on the seed and the training frames.
    ``progress`` is an optional callable receiving each log entry.
    """
    cfg.validate()
    train_all, _ = data if data is not None else load_data(cfg)
    n_classes = max(s.n_classes for s in train_all)
    kin_dim = train_all[0].kinematics.shape[1]
    model = GradModel(cfg, n_classes, kin_dim)
    log = _Log(progress)
    if cfg.epochs == 0:
        return TrainResult(model, log.entries)
    fit, val = split_validation(train_all, cfg.val_fraction)
    key = (cfg.seed, id(train_all))
    cached = backbone_cache.get(key) if backbone_cache is not None else None
    if cached is not None and all(d in cached["state"] for d in model.encoders.visual):
        for d, enc in model.encoders.visual.items():
            enc.cnn.load_state_dict(cached["state"][d])
        feats = [{d: f[d] for d in model.encoders.visual} for f in cached["feats"]]
        log.entries.extend(e for e in cached["log"])
    else:
        pretrain_backbone(model, fit, cfg, log)
        feats = [pooled_features(model, s.frames) for s in train_all]
        if backbone_cache is not None:
            backbone_cache[key] = {
                "state": {d: {k: v.copy() for k, v in enc.cnn.state_dict().items()}
                          for d, enc in model.encoders.visual.items()},
                "feats": feats, "log": [e for e in log.entries],
            }
    cut = len(fit)
    train_temporal(model, fit, feats[:cut], val, feats[cut:], cfg, log)
    return TrainResult(model, log.entries)


class _Log:
    def __init__(self, progress):
        self.entries = []
        self.progress = progress

    def append(self, entry):
        self.entries.append(entry)
        if self.progress:
            self.progress(entry)

    def extend(self, entries):
        for e in entries:
            self.append(e)


# ---------------------------------------------------------------- evaluation

def evaluate(model, sequences, spec=None, seed=0):
    """MetricsReport over full sequences, optionally corrupting the frames first."""
    if spec is not None:
        sequences = corrupt_dataset(sequences, spec, seed)
    preds = [predict_labels(model, s) for s in sequences]
    return evaluate_sequences(preds, [s.labels for s in sequences])


def _shared_features(models, sequences):
    """Pooled features per model, computed once per distinct frame backbone."""
    out = {}
    seen = {}
    for name, model in models.items():
        digest = hashlib.sha1()
        for pname, arr in sorted(model.encoders.state_dict().items()):
            if ".cnn.convs." in pname:
                digest.update(pname.encode() + arr.tobytes())
        sig_key = digest.hexdigest()
        if sig_key not in seen:
            seen[sig_key] = [pooled_features(model, s.frames) for s in sequences]
        out[name] = seen[sig_key]
    return out


def evaluate_many(models, sequences, spec=None, seed=0):
    """{name: MetricsReport} for several models on one (optionally corrupted) set."""
    if spec is not None:
        sequences = corrupt_dataset(sequences, spec, seed)
    feats = _shared_features(models, sequences)
    reports = {}
    for name, model in models.items():
        preds = [predict_labels(model, s, f) for s, f in zip(sequences, feats[name])]
        reports[name] = evaluate_sequences(preds, [s.labels for s in sequences])
    return reports


def robustness_sweep(models, sequences, kinds=KINDS, severities=(1, 2, 3, 4, 5), seed=0):
    """Rows (run, kind, severity, report) for every kind x severity cell."""
    if not isinstance(models, dict):
        models = {"model": models}
    rows = []
    for kind in kinds:
        for sev in severities:
            reports = evaluate_many(models, sequences, CorruptionSpec(kind, sev), seed)
            rows += [(name, kind, sev, rep) for name, rep in reports.items()]
    return rows


# ---------------------------------------------------------------- ablations

def _grid_table3(cfg):
    rows = []
    for cal, dis, vka in itertools.product((False, True), repeat=3):
        label = f"t3_cal{int(cal)}_dis{int(dis)}_vka{int(vka)}"
        rows.append((label, cfg.replace(enable_calibration=cal, enable_wavelet=dis,
                                        enable_fourier=dis, enable_vka=vka)))
    return rows


def _grid_table5(cfg):
    return [(f"t5_wav{int(w)}_fou{int(f)}", cfg.replace(enable_wavelet=w, enable_fourier=f))
            for w, f in itertools.product((False, True), repeat=2)]


def _grid_table7(cfg):
    rows = []
    for k in range(11):
        a = round(0.1 * k, 1)
        rows.append((f"t7_alpha{a:.1f}", cfg.replace(alpha=a, beta=round(1.0 - a, 1))))
    return rows


def _grid_table8(cfg):
    pairs = (("k", "i"), ("k", "iwf"), ("i", "k"), ("iwf", "k"))
    return [(f"t8_{src}_to_{dst}", cfg.replace(vka_source=src, vka_target=dst)) for src, dst in pairs]


def _grid_table9(cfg):
    pairs = ((1.0, 0.0), (0.95, 0.05), (0.9, 0.1), (0.85, 0.15), (0.8, 0.2))
    return [(f"t9_gamma{g}_delta{d}", cfg.replace(gamma=g, delta=d)) for g, d in pairs]


def _grid_table10(cfg):
    return [(f"t10_lambda{l:.2f}", cfg.replace(lam=l)) for l in (0.01, 0.02, 0.03, 0.04, 0.05)]


def _grid_table11(cfg):
    return [(f"t11_{mode}", cfg.replace(fusion=mode)) for mode in ("add", "concat", "graph")]


GRIDS = {
    "table3": _grid_table3,
    "table5": _grid_table5,
    "table7": _grid_table7,
    "table8": _grid_table8,
    "table9": _grid_table9,
    "table10": _grid_table10,
    "table11": _grid_table11,
}


def ablation_grid(cfg, tables=tuple(GRIDS)):
    rows = []
    for name in tables:
        if name not in GRIDS:
            raise KeyError(f"unknown ablation table {name!r}; choose from {sorted(GRIDS)}")
        rows += GRIDS[name](cfg)
    return rows


def ablate(cfg, tables=tuple(GRIDS), data=None, progress=None):
    """Train and evaluate every grid row; returns (run, 'none', 0, report) rows."""
    data = data if data is not None else load_data(cfg)
    cache = {}
    rows = []
    for label, row_cfg in ablation_grid(cfg, tables):
        result = train(row_cfg, data, backbone_cache=cache)
        rep = evaluate(result.model, data[1])
        rows.append((label, "none", 0, rep))
        if progress:
            progress(label, rep)
    return rows


__all__ = ["DivergenceError", "TrainResult", "load_data", "split_validation", "pretrain_backbone",
           "pooled_features", "predict_labels", "train_temporal", "train", "evaluate", "evaluate_many",
           "robustness_sweep", "ablation_grid", "ablate", "GRIDS", "GROUPS", "RunConfig"]
