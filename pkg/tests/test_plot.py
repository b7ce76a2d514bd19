import numpy as np
import pytest

from grad_workflow.metrics import read_report_csv, report_rows_to_csv, sequence_report
from grad_workflow.plot import (
    PALETTE, color_of, plot_report, plot_ribbons, read_ppm, read_predictions, ribbon, severity_curve,
    severity_series, write_ppm, write_predictions,
)


def test_single_class_ribbon_is_one_colour():
    img = ribbon([np.full(30, 2)])
    assert img.shape == (12, 30, 3)
    assert np.all(img == PALETTE[2])


def test_ribbon_width_and_rows():
    truth = np.repeat([0, 1, 2], 10)
    img = ribbon([truth, truth[::-1]], band=5, gap=1)
    assert img.shape == (11, 30, 3)
    assert np.array_equal(img[0, 0], color_of(0)) and np.array_equal(img[6, 0], color_of(2))
    with pytest.raises(ValueError):
        ribbon([truth, truth[:5]])


def test_ppm_round_trip(tmp_path):
    img = (np.arange(2 * 3 * 3) % 256).astype(np.uint8).reshape(2, 3, 3)
    path = tmp_path / "x.ppm"
    write_ppm(path, img)
    assert path.read_bytes().startswith(b"P6\n3 2\n255\n")
    assert np.array_equal(read_ppm(path), img)


def test_severity_curve_has_five_ticks():
    img, ticks = severity_curve({"full": [90, 85, 80, 70, 60], "no_vka": [88, 80, 75, 65, 50]})
    assert len(ticks) == 5 and len(set(ticks)) == 5
    axis_row = img.shape[0] - 24
    below = img[axis_row + 3]
    dark = np.flatnonzero(np.all(below == 0, axis=1))
    assert sorted(dark.tolist()) == ticks


def test_plot_from_csv_and_predictions(tmp_path):
    rep = sequence_report([0, 1, 1], [0, 1, 1])
    rows = [("m", "none", 0, rep)] + [("m", k, s, rep) for k in ("gamma", "impulse") for s in range(1, 6)]
    csv_path = tmp_path / "r.csv"
    csv_path.write_text(report_rows_to_csv(rows))
    series, sevs = severity_series(read_report_csv(str(csv_path)))
    assert sevs == (1, 2, 3, 4, 5) and series["m"] == [100.0] * 5
    out = plot_report(str(csv_path), str(tmp_path / "sev.ppm"))
    assert read_ppm(out).shape == (200, 320, 3)

    pred_path = tmp_path / "pred.csv"
    write_predictions(str(pred_path), [("truth", 0, [0, 0, 1]), ("m", 0, [0, 1, 1])])
    assert set(read_predictions(str(pred_path))[0]) == {"truth", "m"}
    paths = plot_ribbons(str(pred_path), str(tmp_path / "rib"))
    img = read_ppm(paths[0])
    assert img.shape[1] == 3 and np.array_equal(img[0, 2], color_of(1))


def test_malformed_inputs(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("who,what\n1,2\n")
    with pytest.raises(ValueError):
        plot_report(str(bad), str(tmp_path / "x.ppm"))
    with pytest.raises(ValueError):
        read_predictions(str(bad))
