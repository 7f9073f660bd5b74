"""Ablation drivers: divergence family, Holder exponent sweep, and loss
components, each trained from one shared seed and dataset."""

import json

import numpy as np

from .errors import ConfigError, ParseError
from .evaluate import DiceReport, emit_comparison, evaluate_subsets
from .network import ALL_SUBSETS
from .train import train

AXES = ("divergence_family", "alpha_sweep", "loss_components")

# divergence-family rows, comparison order with Holder last
FAMILY_ROWS = (
    ("Total Variation", "total_variation"),
    ("Squared Hellinger", "squared_hellinger"),
    ("Kullback-Leibler", "kullback_leibler"),
    ("Neyman chi2", "neyman_chi2"),
    ("Jensen-Shannon", "jensen_shannon"),
    ("Holder", "holder"),
)

ALPHA_VALUES = (1.05, 1.08, 1.10, 1.15, 1.20)

# loss-component toggle rows: (label, use feature transfer, use divergence)
COMPONENT_ROWS = (
    ("dice", False, False),
    ("dice+MI", True, False),
    ("dice+HD", False, True),
    ("dice+MI+HD", True, True),
)

# subsets grouped by how many of the four modalities are missing
MISSING_COUNTS = (3, 2, 1, 0)
_MISSING_GROUPS = {
    n: tuple(i for i, s in enumerate(ALL_SUBSETS) if 4 - len(s) == n)
    for n in MISSING_COUNTS
}


def variant_configs(base_config, axis):
    """The (label, config) list an axis trains, in its table's row order."""
    if axis == "divergence_family":
        return [
            (label, base_config.replace(divergence=kind))
            for label, kind in FAMILY_ROWS
        ]
    if axis == "alpha_sweep":
        return [
            (f"{alpha:.2f}", base_config.replace(divergence="holder", alpha=alpha))
            for alpha in ALPHA_VALUES
        ]
    if axis == "loss_components":
        lam_mi = base_config.lam_mi if base_config.lam_mi > 0 else 1.0
        lam_hd = base_config.lam_hd if base_config.lam_hd > 0 else 1.0
        return [
            (
                label,
                base_config.replace(
                    lam_mi=lam_mi if with_mi else 0.0,
                    lam_hd=lam_hd if with_hd else 0.0,
                ),
            )
            for label, with_mi, with_hd in COMPONENT_ROWS
        ]
    raise ConfigError(f"axis must be one of {AXES}, got {axis!r}")


class AblationReport:
    """Per-variant DiceReports for one axis, plus the axis's summary table."""

    __slots__ = ("axis", "variants", "reports")

    def __init__(self, axis, variants, reports):
        if axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {axis!r}")
        if len(variants) != len(reports):
            raise ConfigError("one report per variant required")
        self.axis = axis
        self.variants = tuple(str(v) for v in variants)
        self.reports = tuple(reports)

    def table(self):
        """(first header, column headers, row labels, value matrix)."""
        if self.axis == "loss_components":
            cols = tuple(str(n) for n in MISSING_COUNTS) + ("Avg",)
            matrix = []
            for report in self.reports:
                grand_per_subset = report.rows.mean(axis=1)
                row = [
                    grand_per_subset[list(_MISSING_GROUPS[n])].mean()
                    for n in MISSING_COUNTS
                ]
                row.append(report.grand_average())
                matrix.append(row)
            return "components", cols, self.variants, np.array(matrix)
        first = "alpha" if self.axis == "alpha_sweep" else "divergence"
        cols = ("WT", "TC", "ET", "Avg")
        matrix = [
            list(report.region_averages()) + [report.grand_average()]
            for report in self.reports
        ]
        return first, cols, self.variants, np.array(matrix)

    def to_dict(self):
        return {
            "axis": self.axis,
            "variants": list(self.variants),
            "reports": [r.to_dict() for r in self.reports],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            reports = [DiceReport.from_dict(r) for r in d["reports"]]
            return cls(d["axis"], d["variants"], reports)
        except (KeyError, TypeError, ConfigError) as exc:
            raise ParseError(f"invalid ablation report: {exc}") from None


def ablate(base_config, axis, train_manifest, test_manifest, jobs=1, progress=None):
    """Train and evaluate every variant of one axis from the shared seed."""
    variants = variant_configs(base_config, axis)
    labels, reports = [], []
    for label, cfg in variants:
        if progress is not None:
            progress(f"[{axis}] training variant {label}")
        params, _ = train(cfg, train_manifest)
        reports.append(evaluate_subsets(params, test_manifest, jobs=jobs))
        labels.append(label)
    return AblationReport(axis, labels, reports)


def emit_ablation_table(report, fmt, path=None):
    first, cols, row_labels, matrix = report.table()
    return emit_comparison(first, cols, row_labels, matrix, fmt, path)


def save_ablation(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ablation(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ParseError(f"{path}: invalid ablation report: {exc}") from None
    return AblationReport.from_dict(doc)
