"""Binary checkpoints.

Layout (little-endian): b"GRAD", u32 version, then entries until end of file,
each ``u32 name_len, name (utf-8), u32 rank, u32 dims[rank], f32 values``.
"""

import struct

import numpy as np

MAGIC = b"GRAD"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state):
    """``state``: mapping name -> array (written as float32 in insertion order)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in state.items():
            arr = np.array(arr, dtype="<f4", order="C")  # keeps rank 0, unlike ascontiguousarray
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a GRAD checkpoint")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    state = {}
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * count > len(blob):
                raise CheckpointError(f"{path}: truncated entry {name!r}")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).astype(np.float32)
            arr.shape = dims
            state[name] = arr
            pos += 4 * count
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    return state


def config_path(ckpt_path):
    """The run config stored next to a checkpoint (same stem, ``.cfg``)."""
    stem = str(ckpt_path)
    dot = stem.rfind(".")
    if dot > max(stem.rfind("/"), stem.rfind("\\")):
        stem = stem[:dot]
    return stem + ".cfg"


def save_model(path, model):
    save_checkpoint(path, model.state_dict())
    with open(config_path(path), "w", encoding="utf-8") as fh:
        fh.write(model.cfg.to_text())


def load_model(path, cfg=None):
    """Rebuild a GradModel from a checkpoint and its saved (or a given) config."""
    from .config import load_config
    from .model import GradModel

    state = load_checkpoint(path)
    cfg = cfg if cfg is not None else load_config(config_path(path))
    try:
        n_classes = state["fusion.head.w"].shape[1]
        kin_dim = state["encoders.kin.lstm.w_ih"].shape[0]
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing entry {exc}") from exc
    model = GradModel(cfg, n_classes, kin_dim)
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: incompatible with the config: {exc}") from exc
    return model
