"""Synthetic multimodal workflow sequences and the GRD1 dataset file format.

Each sequence walks a left-to-right chain of phases. Every phase drives both
arms along its own motion primitive in 7-DoF task space (x, y, z, roll,
pitch, yaw, gripper angle) and is rendered as two coloured discs over a
textured background; disc centres are the projection of the arms' (x, y).

Two phase pairs are deliberately ambiguous in one modality: phases 2 and 3
share their motion and differ only in appearance, phases 4 and 5 share their
appearance and differ only in motion. Recognising all six phases therefore
needs both vision and kinematics.
"""

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng, derive

FRAME = 64
KIN_DIM = 14
ARM_DOF = 7
JITTER = 0.01
MAGIC = b"GRD1"


@dataclass
class WorkflowSequence:
    frames: np.ndarray      # [T, 3, 64, 64] float32 in [0, 1]
    kinematics: np.ndarray  # [T, 14] float32, left arm 0..6, right arm 7..13
    labels: np.ndarray      # [T] int64 phase indices
    n_classes: int = 6

    def __post_init__(self):
        T = len(self.labels)
        if self.frames.shape[0] != T or self.kinematics.shape[0] != T:
            raise ValueError("frames, kinematics and labels must share T")

    @property
    def T(self):
        return len(self.labels)


def _default_primitives():
    """Per-phase motion primitives and render styles (fixed, seed-independent)."""
    r = Rng(0x5EED)
    C = 6
    motion = []
    for p in range(C):
        arms = []
        for arm in range(2):
            side = -1.0 if arm == 0 else 1.0
            arms.append({
                "center": np.array([side * r.uniform((), 0.15, 0.6), r.uniform((), -0.5, 0.5),
                                    r.uniform((), -0.3, 0.3)]),
                "amp": r.uniform(3, 0.08, 0.3),
                "freq": r.uniform(3, 0.02, 0.08),
                "phase": r.uniform(3, 0, 2 * np.pi),
                "orient": r.uniform(3, -0.8, 0.8),
                "orient_amp": r.uniform(3, 0.05, 0.3),
                "grip": r.uniform((), 0.1, 0.9),
            })
        motion.append(arms)
    style = []
    for p in range(C):
        style.append({
            "radius": (float(r.uniform((), 4.0, 8.0)), float(r.uniform((), 4.0, 8.0))),
            "color": (r.uniform(3, 0.55, 1.0) * np.array([1.0, 0.35, 0.3]),
                      r.uniform(3, 0.55, 1.0) * np.array([0.3, 0.9, 0.5])),
            "tint": r.uniform(3, -0.08, 0.08),
        })
    # phases 2/3: same motion, distinct look; phases 4/5: same look, distinct motion
    motion[3] = [dict(a) for a in motion[2]]
    style[3]["radius"] = (style[2]["radius"][0] * 0.55 + 1.5, style[2]["radius"][1] * 0.55 + 1.5)
    style[3]["color"] = (style[2]["color"][0][::-1].copy(), style[2]["color"][1][[2, 0, 1]].copy())
    style[5] = copy.deepcopy(style[4])
    return motion, style


@dataclass
class PhaseModel:
    n_phases: int = 6
    seq_len: int = 240
    dur_min: int = 20
    dur_max: int = 60
    skip_prob: float = 0.1
    motion: list = field(default=None, repr=False)
    style: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.motion is None or self.style is None:
            motion, style = _default_primitives()
            self.motion = self.motion or motion
            self.style = self.style or style
        if self.n_phases != len(self.motion):
            raise ValueError("n_phases must match the primitive table")

    def validate(self):
        if self.dur_min < 1 or self.dur_max < self.dur_min:
            raise ValueError(f"degenerate phase durations [{self.dur_min}, {self.dur_max}]")
        if self.seq_len < self.n_phases:
            raise ValueError(f"sequence length {self.seq_len} shorter than the phase chain")


def project(x, y):
    """Pixel (row, col) of a task-space (x, y) on the 64x64 canvas."""
    col = np.clip(np.rint(31.5 + 26.0 * np.asarray(x)), 0, FRAME - 1).astype(np.int64)
    row = np.clip(np.rint(31.5 - 26.0 * np.asarray(y)), 0, FRAME - 1).astype(np.int64)
    return row, col


def _phase_plan(model, rng):
    present = [0]
    for p in range(1, model.n_phases - 1):
        if rng.uniform() >= model.skip_prob:
            present.append(p)
    present.append(model.n_phases - 1)
    raw = rng.uniform(len(present), model.dur_min, model.dur_max + 1)
    share = raw / raw.sum() * model.seq_len
    lengths = np.maximum(np.floor(share).astype(np.int64), 1)
    while lengths.sum() < model.seq_len:
        lengths[int(np.argmax(share - lengths))] += 1
    while lengths.sum() > model.seq_len:
        lengths[int(np.argmax(lengths))] -= 1
    return np.repeat(np.array(present), lengths)


def _kinematics(labels, model, rng):
    T = len(labels)
    kin = np.zeros((T, KIN_DIM))
    # per-sequence variation of each primitive
    offset = rng.normal((model.n_phases, 2, 3), 0.0, 0.05)
    ascale = rng.uniform((model.n_phases, 2), 0.8, 1.2)
    phase0 = rng.uniform((model.n_phases, 2), 0.0, 2 * np.pi)
    starts = np.r_[0, np.flatnonzero(np.diff(labels)) + 1]
    for s, e in zip(starts, np.r_[starts[1:], T]):
        p = labels[s]
        tau = np.arange(e - s)[:, None]
        for arm in range(2):
            prim = model.motion[p][arm]
            arg = 2 * np.pi * prim["freq"] * tau + prim["phase"] + phase0[p, arm]
            pos = prim["center"] + offset[p, arm] + ascale[p, arm] * prim["amp"] * np.sin(arg)
            ori = prim["orient"] + prim["orient_amp"] * np.cos(arg)
            grip = prim["grip"] + 0.05 * np.sin(2 * arg[:, :1])
            base = arm * ARM_DOF
            kin[s:e, base:base + 3] = pos
            kin[s:e, base + 3:base + 6] = ori
            kin[s:e, base + 6:base + 7] = grip
    kin += rng.normal(kin.shape, 0.0, JITTER)
    return kin.astype(np.float32)


def _background(rng):
    yy, xx = np.mgrid[0:FRAME, 0:FRAME] / FRAME
    bg = np.full((FRAME, FRAME), 0.35)
    for _ in range(4):
        fx, fy = rng.uniform(2, 1.0, 6.0)
        ph = rng.uniform((), 0, 2 * np.pi)
        bg += 0.05 * np.sin(2 * np.pi * (fx * xx + fy * yy) + ph)
    tone = rng.uniform(3, 0.85, 1.15)
    return np.clip(bg[None] * tone[:, None, None], 0, 1)


_YY, _XX = np.mgrid[0:FRAME, 0:FRAME]


def render(kinematics, labels, model, background):
    """Frames [T, 3, 64, 64]: background, then left disc, then right disc on top."""
    T = len(labels)
    frames = np.empty((T, 3, FRAME, FRAME), dtype=np.float32)
    for t in range(T):
        p = labels[t]
        st = model.style[p]
        img = np.clip(background + st["tint"][:, None, None], 0, 1)
        for arm in range(2):
            base = arm * ARM_DOF
            row, col = project(kinematics[t, base], kinematics[t, base + 1])
            rad = st["radius"][arm] * (1.0 + 0.25 * float(kinematics[t, base + 2]))
            mask = (_YY - row) ** 2 + (_XX - col) ** 2 <= max(rad, 1.0) ** 2
            img = np.where(mask[None], st["color"][arm][:, None, None], img)
        frames[t] = img
    return frames


def generate_sequence(seed, model=None):
    model = model or PhaseModel()
    model.validate()
    rng = Rng(seed)
    labels = _phase_plan(model, rng)
    kin = _kinematics(labels, model, rng)
    frames = render(kin, labels, model, _background(rng))
    return WorkflowSequence(frames, kin, labels.astype(np.int64), model.n_phases)


def generate_dataset(seed, n_train, n_test, phase_model=None):
    """Deterministic (train, test) lists; sequence ``k`` uses a seed derived from (seed, k)."""
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be at least 1")
    model = phase_model or PhaseModel()
    model.validate()
    seqs = [generate_sequence(derive(seed, k).next_u64(), model) for k in range(n_train + n_test)]
    return seqs[:n_train], seqs[n_train:]


# ---------------------------------------------------------------- GRD1 files

class DataFormatError(ValueError):
    pass


def save_dataset(path, sequences):
    """Write a split: magic, count, then per sequence T, C, frames, kinematics, labels (all LE)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(sequences)))
        for s in sequences:
            if s.frames.shape[1:] != (3, FRAME, FRAME) or s.kinematics.shape[1] != KIN_DIM:
                raise DataFormatError("GRD1 stores [T, 3, 64, 64] frames and 14-value kinematics")
            fh.write(struct.pack("<II", s.T, s.n_classes))
            fh.write(np.ascontiguousarray(s.frames, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(s.kinematics, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(s.labels, dtype="<u2").tobytes())


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError("truncated dataset file")
    return buf


def load_dataset(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise DataFormatError(f"{path}: bad magic, expected GRD1")
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        out = []
        for _ in range(count):
            T, C = struct.unpack("<II", _read_exact(fh, 8))
            n_frame = T * 3 * FRAME * FRAME
            frames = np.frombuffer(_read_exact(fh, 4 * n_frame), dtype="<f4").reshape(T, 3, FRAME, FRAME)
            kin = np.frombuffer(_read_exact(fh, 4 * T * KIN_DIM), dtype="<f4").reshape(T, KIN_DIM)
            labels = np.frombuffer(_read_exact(fh, 2 * T), dtype="<u2").astype(np.int64)
            out.append(WorkflowSequence(frames.astype(np.float32), kin.astype(np.float32), labels, C))
        if fh.read(1):
            raise DataFormatError(f"{path}: trailing bytes after {count} sequences")
    return out


def windows(T, length, stride):
    """Start indices of training windows; the last window is aligned to the sequence end."""
    if T <= length:
        return [0]
    starts = list(range(0, T - length + 1, stride))
    if starts[-1] != T - length:
        starts.append(T - length)
    return starts
