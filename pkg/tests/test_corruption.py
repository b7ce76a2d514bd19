import numpy as np
import pytest

from grad_workflow.corruption import (
    GROUPS, KINDS, SEVERITY, CorruptionSpec, corrupt, corrupt_dataset, psnr,
)
from grad_workflow.data import generate_sequence
from grad_workflow.freq import luminance
from grad_workflow.rng import Rng


@pytest.fixture(scope="module")
def frames():
    return generate_sequence(21).frames[::12]  # 20 frames


def test_kinds_and_groups():
    assert len(KINDS) == 18
    assert sorted(k for g in GROUPS.values() for k in g) == sorted(KINDS)
    assert all(len(SEVERITY[k]) == 5 for k in KINDS)
    assert SEVERITY["gauss_noise"] == (0.04, 0.06, 0.08, 0.09, 0.10)


@pytest.mark.parametrize("kind", KINDS)
def test_range_and_ladder(frames, kind):
    scores = []
    for sev in range(1, 6):
        out = corrupt(frames, CorruptionSpec(kind, sev), Rng(sev))
        assert out.shape == frames.shape
        assert out.min() >= 0.0 and out.max() <= 1.0
        scores.append(psnr(frames, out))
    inversions = sum(b > a for a, b in zip(scores, scores[1:]))
    assert inversions <= 1, scores


def test_severity_zero_is_identity(frames):
    out = corrupt(frames, CorruptionSpec("defocus", 0), Rng(0))
    assert np.array_equal(out, frames)


def test_brightness_raises_mid_grey():
    grey = np.full((3, 16, 16), 0.5)
    out = corrupt(grey, CorruptionSpec("brightness", 1), Rng(0))
    assert luminance(out).mean() > luminance(grey).mean()


def test_single_frame_input(frames):
    assert corrupt(frames[0], "gauss_noise:3", Rng(0)).shape == frames[0].shape


def test_dataset_corruption_leaves_other_modalities(tiny_data):
    seqs = tiny_data[1]
    out = corrupt_dataset(seqs, CorruptionSpec.parse("impulse:4"))
    for a, b in zip(seqs, out):
        assert np.array_equal(a.labels, b.labels) and np.array_equal(a.kinematics, b.kinematics)
        assert not np.array_equal(a.frames, b.frames)
    again = corrupt_dataset(seqs, "impulse:4")
    assert all(np.array_equal(a.frames, b.frames) for a, b in zip(out, again))
    same = corrupt_dataset(seqs, "impulse:0")
    assert all(a.frames is b.frames for a, b in zip(seqs, same))


def test_spec_parsing():
    spec = CorruptionSpec.parse("zoom_blur:2")
    assert (spec.kind, spec.severity, str(spec)) == ("zoom_blur", 2, "zoom_blur:2")
    for bad in ("zoom_blur", "fog:2", "gamma:6", "gamma:-1"):
        with pytest.raises(ValueError):
            CorruptionSpec.parse(bad)


def test_psnr_identical_is_infinite():
    x = np.full((4, 4), 0.3)
    assert psnr(x, x) == float("inf")
