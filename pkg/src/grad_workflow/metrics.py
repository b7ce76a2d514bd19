"""Frame accuracy, segmental edit score and precision/recall/F1.

Conventions:

* per-class precision/recall/F1 are one-vs-rest over frames;
* CP/CR/CF1 average the per-class values over classes present in the truth;
* OP/OR/OF1 are the support-weighted averages of the same per-class values,
  so OR equals frame accuracy whenever every predicted class also occurs in
  the truth, while OP does not;
* a class with no predicted frames gets precision 0 and is flagged.

Reports over several sequences average the per-sequence values.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

METRIC_KEYS = ("acc", "edit", "op", "or_", "of1", "cp", "cr", "cf1")
CSV_COLUMNS = ("run", "corruption", "severity", "acc", "edit", "op", "or", "of1", "cp", "cr", "cf1")


@dataclass
class MetricsReport:
    acc: float
    edit: float
    op: float
    or_: float
    of1: float
    cp: float
    cr: float
    cf1: float
    per_class: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def values(self):
        return [getattr(self, k) for k in METRIC_KEYS]


def _pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    return pred, truth


def frame_accuracy(pred, truth):
    pred, truth = _pair(pred, truth)
    if truth.size == 0:
        raise ValueError("empty sequence")
    return 100.0 * float(np.mean(pred == truth))


def segments(labels):
    """Run-length encoding as a list of (label, length)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    cuts = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.r_[0, cuts]
    ends = np.r_[cuts, labels.size]
    return [(labels[s].item(), int(e - s)) for s, e in zip(starts, ends)]


def levenshtein(a, b):
    """Unit-cost edit distance between two label sequences."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def edit_score(pred, truth):
    """100 * (1 - Levenshtein(segments) / max(#segments))."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.size == 0 or truth.size == 0:
        raise ValueError("edit score needs non-empty sequences")
    sp = [lab for lab, _ in segments(pred)]
    st = [lab for lab, _ in segments(truth)]
    return 100.0 * (1.0 - levenshtein(sp, st) / max(len(sp), len(st)))


def _per_class(pred, truth, classes):
    table = {}
    flags = []
    for c in classes:
        tp = int(np.sum((pred == c) & (truth == c)))
        n_pred = int(np.sum(pred == c))
        support = int(np.sum(truth == c))
        if n_pred == 0:
            prec = 0.0
            flags.append(f"class {c}: no predicted frames, precision set to 0")
        else:
            prec = 100.0 * tp / n_pred
        rec = 100.0 * tp / support if support else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        table[c] = (prec, rec, f1, support)
    return table, flags


def _scored_classes(pred, truth):
    present = sorted(set(np.unique(truth).tolist()))
    absent = sorted(set(np.unique(pred).tolist()) - set(present))
    return present, absent


def prf_per_class(pred, truth):
    """(CP, CR, CF1, table, flags): macro averages over classes present in the truth."""
    pred, truth = _pair(pred, truth)
    present, absent = _scored_classes(pred, truth)
    table, flags = _per_class(pred, truth, present)
    flags += [f"class {c}: predicted but absent from truth, excluded" for c in absent]
    arr = np.array([table[c][:3] for c in present])
    cp, cr, cf1 = arr.mean(axis=0)
    return float(cp), float(cr), float(cf1), table, flags


def prf_overall(pred, truth):
    """(OP, OR, OF1): support-weighted averages of the per-class values."""
    pred, truth = _pair(pred, truth)
    present, _ = _scored_classes(pred, truth)
    table, _ = _per_class(pred, truth, present)
    w = np.array([table[c][3] for c in present], dtype=np.float64)
    w /= w.sum()
    op = float(sum(wi * table[c][0] for wi, c in zip(w, present)))
    or_ = float(sum(wi * table[c][1] for wi, c in zip(w, present)))
    of1 = 2 * op * or_ / (op + or_) if op + or_ > 0 else 0.0
    return op, or_, of1


def sequence_report(pred, truth):
    cp, cr, cf1, table, flags = prf_per_class(pred, truth)
    op, or_, of1 = prf_overall(pred, truth)
    return MetricsReport(frame_accuracy(pred, truth), edit_score(pred, truth),
                         op, or_, of1, cp, cr, cf1, table, flags)


def average_reports(reports):
    """Mean of per-sequence reports (per-class tables are pooled by mean as well)."""
    if not reports:
        raise ValueError("no reports to average")
    vals = np.mean([r.values() for r in reports], axis=0)
    per_class = {}
    for r in reports:
        for c, row in r.per_class.items():
            per_class.setdefault(c, []).append(row)
    per_class = {c: tuple(np.mean([row[:3] for row in rows], axis=0).tolist()) + (int(sum(r[3] for r in rows)),)
                 for c, rows in sorted(per_class.items())}
    flags = sorted({f for r in reports for f in r.flags})
    return MetricsReport(*[float(v) for v in vals], per_class=per_class, flags=flags)


def evaluate_sequences(preds, truths):
    return average_reports([sequence_report(p, t) for p, t in zip(preds, truths)])


def report_rows_to_csv(rows, fh=None):
    """rows: iterable of (run, corruption, severity, MetricsReport). Returns text if no handle."""
    own = fh is None
    fh = fh or io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for run, corruption, severity, rep in rows:
        w.writerow([run, corruption, severity] + [f"{v:.6f}" for v in rep.values()])
    return fh.getvalue() if own else None


def read_report_csv(path_or_text):
    """Parse a report CSV back into a list of dicts (metrics as floats)."""
    if "\n" in path_or_text:
        text = path_or_text
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or any(col not in rows[0] for col in CSV_COLUMNS):
        raise ValueError("malformed report CSV: missing columns")
    out = []
    for r in rows:
        try:
            d = {"run": r["run"], "corruption": r["corruption"], "severity": int(r["severity"])}
            d.update({k: float(r[k]) for k in CSV_COLUMNS[3:]})
        except (TypeError, ValueError) as exc:
            raise ValueError(f"malformed report CSV row {r}") from exc
        out.append(d)
    return out
