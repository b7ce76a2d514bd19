"""Portable-pixmap (P6) figures: phase ribbons and accuracy-vs-severity curves."""

import csv
import io

import numpy as np

from .metrics import read_report_csv

PALETTE = np.array([
    [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200], [245, 130, 48],
    [145, 30, 180], [70, 240, 240], [240, 50, 230], [210, 245, 60], [250, 190, 212],
    [0, 128, 128], [170, 110, 40],
], dtype=np.uint8)
WHITE = np.array([255, 255, 255], dtype=np.uint8)
BLACK = np.array([0, 0, 0], dtype=np.uint8)
GREY = np.array([200, 200, 200], dtype=np.uint8)


def write_ppm(path, img):
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an [H, W, 3] image, got {img.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while not blob[end:end + 1].isspace():
            end += 1
        fields.append(blob[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = int(fields[1]), int(fields[2])
    pos += 1
    return np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=pos).reshape(h, w, 3)


def color_of(label):
    return PALETTE[int(label) % len(PALETTE)]


def ribbon(rows, band=12, gap=2):
    """Stacked colour bands, one per label sequence (truth first), one pixel per frame."""
    rows = [np.asarray(r) for r in rows]
    if not rows:
        raise ValueError("nothing to draw")
    T = len(rows[0])
    if any(len(r) != T for r in rows):
        raise ValueError("all ribbon rows must have the same length")
    H = len(rows) * band + (len(rows) - 1) * gap
    img = np.empty((H, T, 3), dtype=np.uint8)
    img[:] = WHITE
    for k, r in enumerate(rows):
        top = k * (band + gap)
        img[top:top + band] = PALETTE[r.astype(np.int64) % len(PALETTE)][None]
    return img


def _line(img, x0, y0, x1, y1, color):
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    xs = np.rint(np.linspace(x0, x1, n)).astype(int)
    ys = np.rint(np.linspace(y0, y1, n)).astype(int)
    ok = (xs >= 0) & (xs < img.shape[1]) & (ys >= 0) & (ys < img.shape[0])
    img[ys[ok], xs[ok]] = color


def severity_curve(series, severities=(1, 2, 3, 4, 5), width=320, height=200, margin=24, y_range=None):
    """Polylines of accuracy against severity.

    ``series`` maps a run name to a list of accuracies, one per severity.
    Returns (image, tick_columns).
    """
    if not series:
        raise ValueError("no series to plot")
    values = np.array([v for vs in series.values() for v in vs], dtype=float)
    lo, hi = y_range if y_range else (min(values.min(), 100.0) - 1.0, max(values.max(), 0.0) + 1.0)
    if hi <= lo:
        hi = lo + 1.0
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = WHITE
    x_left, x_right = margin, width - margin
    y_top, y_bottom = margin // 2, height - margin
    _line(img, x_left, y_bottom, x_right, y_bottom, BLACK)
    _line(img, x_left, y_top, x_left, y_bottom, BLACK)
    n = len(severities)
    ticks = [int(round(x_left + (x_right - x_left) * k / max(n - 1, 1))) for k in range(n)]
    for x in ticks:
        _line(img, x, y_bottom + 1, x, y_bottom + 5, BLACK)

    def y_of(v):
        return y_bottom - (v - lo) / (hi - lo) * (y_bottom - y_top)

    for k, (name, vs) in enumerate(series.items()):
        if len(vs) != n:
            raise ValueError(f"series {name!r} has {len(vs)} points, expected {n}")
        col = color_of(k)
        for j in range(n - 1):
            _line(img, ticks[j], y_of(vs[j]), ticks[j + 1], y_of(vs[j + 1]), col)
        for j in range(n):
            y = int(round(y_of(vs[j])))
            img[max(y - 1, 0):y + 2, max(ticks[j] - 1, 0):ticks[j] + 2] = col
    return img, ticks


def severity_series(report_rows):
    """Mean accuracy over kinds per (run, severity) from parsed report CSV rows."""
    acc = {}
    for r in report_rows:
        if r["severity"] < 1:
            continue
        acc.setdefault(r["run"], {}).setdefault(r["severity"], []).append(r["acc"])
    severities = sorted({s for runs in acc.values() for s in runs})
    series = {run: [float(np.mean(by[s])) if s in by else float("nan") for s in severities]
              for run, by in acc.items()}
    return series, tuple(severities)


def plot_report(csv_path, out_path):
    rows = read_report_csv(csv_path)
    series, severities = severity_series(rows)
    if not series:
        raise ValueError(f"{csv_path}: no corrupted rows (severity >= 1) to plot")
    img, _ = severity_curve(series, severities)
    write_ppm(out_path, img)
    return out_path


# prediction dumps: CSV with columns run, sequence, labels (space separated)

def write_predictions(fh_or_path, rows):
    """rows: iterable of (run, sequence index, label array); run 'truth' holds the reference."""
    own = isinstance(fh_or_path, str)
    fh = open(fh_or_path, "w", newline="") if own else fh_or_path
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("run", "sequence", "labels"))
        for run, seq, labels in rows:
            w.writerow((run, seq, " ".join(str(int(x)) for x in labels)))
    finally:
        if own:
            fh.close()


def read_predictions(path):
    with open(path, newline="") as fh:
        text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != ["run", "sequence", "labels"]:
        raise ValueError(f"{path}: malformed prediction dump header {reader.fieldnames}")
    out = {}
    for r in reader:
        try:
            labels = np.array([int(x) for x in r["labels"].split()], dtype=np.int64)
            out.setdefault(int(r["sequence"]), {})[r["run"]] = labels
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed prediction row {r}") from exc
    return out


def plot_ribbons(pred_path, out_prefix):
    """One ribbon image per sequence: truth on top, then each run in file order."""
    paths = []
    for seq, runs in sorted(read_predictions(pred_path).items()):
        if "truth" not in runs:
            raise ValueError(f"sequence {seq} has no truth row")
        order = ["truth"] + [r for r in runs if r != "truth"]
        path = f"{out_prefix}_seq{seq:03d}.ppm"
        write_ppm(path, ribbon([runs[r] for r in order]))
        paths.append(path)
    return paths
