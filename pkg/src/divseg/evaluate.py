"""Full 15-subset evaluation and report/table emission."""

import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError, ParseError
from .losses import REGIONS, argmax_labels, dsc_metric
from .network import ALL_SUBSETS, ModalityMask, forward, subset_label

REGION_NAMES = tuple(r.name for r in REGIONS)  # ("WT", "TC", "ET")
SUBSET_LABELS = tuple(subset_label(s) for s in ALL_SUBSETS)
AVG_TOL = 1e-9


class DiceReport:
    """15 subset rows x 3 region columns of mean test DSC, plus averages."""

    __slots__ = ("labels", "rows")

    def __init__(self, rows, labels=SUBSET_LABELS):
        rows = np.array(rows, dtype=np.float64)
        labels = tuple(str(x) for x in labels)
        if rows.shape != (len(labels), len(REGION_NAMES)):
            raise ConfigError(
                f"report needs {len(labels)}x{len(REGION_NAMES)} rows, got {rows.shape}"
            )
        if not np.all((rows >= 0.0) & (rows <= 1.0)):
            raise ConfigError("every DSC must lie in [0, 1]")
        self.labels = labels
        self.rows = rows
        self.rows.setflags(write=False)

    def region_averages(self):
        return self.rows.mean(axis=0)

    def grand_average(self):
        return float(self.rows.mean())

    def row(self, label):
        return self.rows[self.labels.index(label)]

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "rows": [[float(v) for v in row] for row in self.rows],
            "region_averages": [float(v) for v in self.region_averages()],
            "grand_average": self.grand_average(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            report = cls(np.array(d["rows"], dtype=np.float64), d["labels"])
            stored_avgs = np.asarray(d["region_averages"], dtype=np.float64)
            stored_grand = float(d["grand_average"])
        except (KeyError, TypeError, ValueError, ConfigError) as exc:
            raise ParseError(f"invalid dice report: {exc}") from None
        if (
            np.abs(stored_avgs - report.region_averages()).max() > AVG_TOL
            or abs(stored_grand - report.grand_average()) > AVG_TOL
        ):
            raise ParseError("dice report averages do not match its rows")
        return report


def evaluate_subsets(params, manifest, jobs=1, forward_fn=forward):
    """Mean test DSC per (modality subset, region) over the whole split.

    Workers (when jobs > 1) each evaluate whole subsets against read-only
    parameters; rows are assembled in canonical subset order either way.
    """
    if len(manifest) == 0:
        raise ConfigError("evaluation needs a non-empty test split")
    samples = [manifest.load_sample(i) for i in range(len(manifest))]
    num_classes = params.arch.num_classes

    def subset_row(indices):
        mask = ModalityMask.from_indices(indices)
        sums = np.zeros(len(REGIONS))
        for sample in samples:
            logits = forward_fn(params, sample.volumes, mask).logits
            pred = argmax_labels(logits)
            if pred.max() >= num_classes:
                raise ConfigError("prediction classes exceed the region catalog")
            gt = sample.labels.data
            sums += [dsc_metric(pred, gt, region) for region in REGIONS]
        return sums / len(samples)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            rows = list(pool.map(subset_row, ALL_SUBSETS))
    else:
        rows = [subset_row(s) for s in ALL_SUBSETS]
    return DiceReport(np.stack(rows))


# table emission -------------------------------------------------------------


def _fmt(v):
    return f"{100.0 * v:.1f}"


def emit_table(report, fmt, path=None):
    """Render one report: header subset,WT,TC,ET; 15 rows; final avg row.

    Values are percentages with one decimal. Markdown mirrors the CSV.
    """
    header = ("subset",) + REGION_NAMES
    rows = [
        (label,) + tuple(_fmt(v) for v in row)
        for label, row in zip(report.labels, report.rows)
    ]
    rows.append(("avg",) + tuple(_fmt(v) for v in report.region_averages()))
    text = _render(header, rows, fmt)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def emit_comparison(first_header, col_headers, row_labels, matrix, fmt, path=None):
    """Render a multi-method table; markdown stars the best cell per column."""
    matrix = np.asarray(matrix, dtype=np.float64)
    header = (first_header,) + tuple(col_headers)
    star = fmt == "markdown" and len(row_labels) > 1
    best = matrix.argmax(axis=0) if star else None
    rows = []
    for i, label in enumerate(row_labels):
        cells = []
        for j, v in enumerate(matrix[i]):
            mark = "*" if star and best[j] == i else ""
            cells.append(_fmt(v) + mark)
        rows.append((str(label),) + tuple(cells))
    text = _render(header, rows, fmt)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _csv_cell(c):
    # multi-modality labels contain commas ("T2,Fl"), so quote those cells
    if "," in c or '"' in c:
        return '"' + c.replace('"', '""') + '"'
    return c


def _render(header, rows, fmt):
    if fmt == "csv":
        lines = [",".join(_csv_cell(c) for c in header)]
        lines.extend(",".join(_csv_cell(c) for c in row) for row in rows)
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        widths = [
            max(len(header[j]), *(len(row[j]) for row in rows))
            for j in range(len(header))
        ]
        def line(cells):
            return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
        lines = [line(header), line(tuple("-" * w for w in widths))]
        lines.extend(line(row) for row in rows)
        return "\n".join(lines) + "\n"
    raise ConfigError(f"format must be csv or markdown, got {fmt!r}")


def save_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ParseError(f"{path}: invalid report: {exc}") from None
    return DiceReport.from_dict(doc)
