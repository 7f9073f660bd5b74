"""Dice training loss, the combined objective, the DSC evaluation metric,
and tumor-region aggregation (whole tumor / tumor core / enhancing tumor).
"""

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .tensor import Tensor, as_tensor

EPS_DICE = 1e-5
TAU_SMOOTH = 0.05


class RegionSpec:
    """A named evaluation region given by the set of label ids it covers."""

    __slots__ = ("name", "classes")

    def __init__(self, name, classes):
        self.name = str(name)
        self.classes = frozenset(int(c) for c in classes)
        if not self.classes:
            raise ConfigError(f"region {name!r} has no classes")

    def mask(self, labels):
        return np.isin(labels, sorted(self.classes))

    def __repr__(self):
        return f"RegionSpec({self.name}, {sorted(self.classes)})"


WT_REGION = RegionSpec("WT", {1, 2, 3})
TC_REGION = RegionSpec("TC", {2, 3})
ET_REGION = RegionSpec("ET", {3})
REGIONS = (WT_REGION, TC_REGION, ET_REGION)


def one_hot(labels, num_classes):
    """Exact one-hot encoding of an integer label volume as [J,D,H,W]."""
    lab = np.asarray(labels)
    if not np.issubdtype(lab.dtype, np.integer):
        if not np.all(lab == np.round(lab)):
            raise DomainError("labels must be integers")
        lab = lab.astype(np.int64)
    if lab.min() < 0 or lab.max() >= num_classes:
        raise DomainError(
            f"labels outside [0, {num_classes}): min {lab.min()}, max {lab.max()}"
        )
    classes = np.arange(num_classes).reshape((num_classes,) + (1,) * lab.ndim)
    return (lab[None] == classes).astype(np.float64)


def smoothed_one_hot(labels, num_classes, tau=TAU_SMOOTH):
    """Label-smoothed one-hot: 1-tau on the true class, tau/(J-1) elsewhere.

    Keeps every entry strictly positive so divergences with powers of the
    label stay well-behaved.
    """
    if not 0.0 <= tau < 1.0:
        raise ConfigError(f"smoothing tau must be in [0, 1), got {tau}")
    oh = one_hot(labels, num_classes)
    low = tau / (num_classes - 1)
    return low + oh * (1.0 - tau - low)


def argmax_labels(logits):
    """Hard class volume from [J,D,H,W] scores; ties go to the lowest index."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if data.ndim != 4:
        raise ShapeError(f"argmax_labels: need [J,D,H,W], got {data.shape}")
    return np.argmax(data, axis=0)


def dice_loss(pred_probs, one_hot_labels):
    """Soft multi-class Dice loss: 1 - (2/J) sum_j of smoothed overlap ratios.

    Each class ratio is (sum(pred*label) + eps) / (sum(pred^2) + sum(label^2)
    + eps); absent classes therefore contribute eps/eps = 1 rather than
    dividing by zero.
    """
    pred_probs, one_hot_labels = as_tensor(pred_probs), as_tensor(one_hot_labels)
    if pred_probs.shape != one_hot_labels.shape:
        raise ShapeError(
            f"dice_loss: shapes {pred_probs.shape} vs {one_hot_labels.shape}"
        )
    if pred_probs.data.ndim != 4:
        raise ShapeError(f"dice_loss: need [J,D,H,W], got {pred_probs.shape}")
    j = pred_probs.shape[0]
    spatial = (1, 2, 3)
    inter = (pred_probs * one_hot_labels).sum(axes=spatial) + EPS_DICE
    denom = (
        (pred_probs * pred_probs).sum(axes=spatial)
        + (one_hot_labels * one_hot_labels).sum(axes=spatial)
        + EPS_DICE
    )
    return 1.0 - (inter / denom).sum() * (2.0 / j)


class LossBreakdown:
    """The combined objective and its parts; components may be scalars or
    tracked tensors (training passes tensors so total stays differentiable)."""

    __slots__ = ("dice", "mi", "hd", "total", "lam_mi", "lam_hd")

    def __init__(self, dice, mi, hd, total, lam_mi, lam_hd):
        self.dice = dice
        self.mi = mi
        self.hd = hd
        self.total = total
        self.lam_mi = lam_mi
        self.lam_hd = lam_hd

    def scalars(self):
        def val(x):
            return x.item() if isinstance(x, Tensor) else float(x)

        return {
            "dice": val(self.dice),
            "mi": val(self.mi),
            "hd": val(self.hd),
            "total": val(self.total),
        }

    def __repr__(self):
        s = self.scalars()
        return (
            f"LossBreakdown(total={s['total']:.6f}, dice={s['dice']:.6f}, "
            f"mi={s['mi']:.6f}, hd={s['hd']:.6f})"
        )


def total_loss(dice, mi, hd, lam_mi=1.0, lam_hd=1.0):
    """Combine the three objective terms: total = dice + lam_mi*mi + lam_hd*hd.

    Zeroing a lambda removes that term, which is how the loss-component
    ablation rows are produced.
    """
    lam_mi, lam_hd = float(lam_mi), float(lam_hd)
    if not (np.isfinite(lam_mi) and np.isfinite(lam_hd)):
        raise ConfigError("loss weights must be finite")
    total = dice + lam_mi * mi + lam_hd * hd
    return LossBreakdown(dice, mi, hd, total, lam_mi, lam_hd)


def dsc_metric(pred_labels, gt_labels, region):
    """Dice similarity 2|P & G| / (|P| + |G|) after binarizing by region.

    Returns 1.0 when the region is empty in both volumes (perfect agreement
    by convention).
    """
    p = pred_labels.data if isinstance(pred_labels, Tensor) else np.asarray(pred_labels)
    g = gt_labels.data if isinstance(gt_labels, Tensor) else np.asarray(gt_labels)
    if p.shape != g.shape:
        raise ShapeError(f"dsc_metric: shapes {p.shape} vs {g.shape}")
    pm = region.mask(p)
    gm = region.mask(g)
    size = int(pm.sum()) + int(gm.sum())
    if size == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pm, gm).sum()) / size
