import numpy as np
import pytest

from grad_workflow.data import (
    FRAME, DataFormatError, PhaseModel, generate_dataset, generate_sequence, load_dataset, project,
    save_dataset, windows,
)
from grad_workflow.rng import Rng


def test_same_seed_bit_identical():
    a, b = generate_sequence(99), generate_sequence(99)
    for field in ("frames", "kinematics", "labels"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert not np.array_equal(a.kinematics, generate_sequence(100).kinematics)


def test_sequence_shapes_and_ranges():
    s = generate_sequence(3)
    assert s.frames.shape == (240, 3, FRAME, FRAME) and s.frames.dtype == np.float32
    assert s.kinematics.shape == (240, 14)
    assert s.frames.min() >= 0 and s.frames.max() <= 1


def test_label_runs_monotone():
    for seed in range(20):
        labels = generate_sequence(seed, PhaseModel(seq_len=60, dur_min=5, dur_max=12)).labels
        assert np.all(np.diff(labels) >= 0)
        assert labels[0] == 0 and labels[-1] == 5


def test_disc_centres_match_projection():
    model = PhaseModel()
    r = Rng(4)
    checked = 0
    for seed in range(5):
        s = generate_sequence(seed, model)
        for t in r.integers(0, s.T, 20):
            row, col = project(s.kinematics[t, 7], s.kinematics[t, 8])
            right = model.style[s.labels[t]]["color"][1]
            assert np.allclose(s.frames[t, :, row, col], right, atol=1e-6)
            checked += 1
    assert checked == 100


def test_projection_convention():
    assert project(0.0, 0.0) == (32, 32)
    row, col = project(1.0, 1.0)
    assert (row, col) == (6, 58)
    assert project(5.0, -5.0) == (63, 63)


def test_dataset_split_and_validation():
    train, test = generate_dataset(5, 3, 2, PhaseModel(seq_len=30, dur_min=3, dur_max=6))
    assert len(train) == 3 and len(test) == 2
    with pytest.raises(ValueError):
        generate_dataset(5, 0, 2)
    with pytest.raises(ValueError):
        PhaseModel(seq_len=3).validate()
    with pytest.raises(ValueError):
        PhaseModel(dur_min=10, dur_max=5).validate()


def test_grd1_round_trip(tmp_path, tiny_data):
    path = tmp_path / "train.grd"
    save_dataset(path, tiny_data[0])
    back = load_dataset(path)
    assert len(back) == len(tiny_data[0])
    for a, b in zip(back, tiny_data[0]):
        assert np.array_equal(a.frames, b.frames) and np.array_equal(a.kinematics, b.kinematics)
        assert np.array_equal(a.labels, b.labels) and a.n_classes == b.n_classes


def test_grd1_corruptions(tmp_path, tiny_data):
    path = tmp_path / "train.grd"
    save_dataset(path, tiny_data[0][:1])
    blob = path.read_bytes()
    for bad in (b"XXXX" + blob[4:], blob[:-3], blob + b"\0"):
        path.write_bytes(bad)
        with pytest.raises(DataFormatError):
            load_dataset(path)


def test_windows_cover_sequence():
    assert windows(240, 64, 32) == [0, 32, 64, 96, 128, 160, 176]
    assert windows(50, 64, 32) == [0]
    starts = windows(100, 64, 32)
    assert starts[-1] + 64 == 100
