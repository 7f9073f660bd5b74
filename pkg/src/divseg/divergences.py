"""Holder pseudo-divergence, the classic f-divergence family, and the
voxel-averaged segmentation divergence loss.

All divergences run on clamped probability vectors (entries in
[EPS_PROB, 1]) and are built from tape ops, so they are differentiable
wherever they appear in a training objective. The scalar entry points
(hpd, f_divergence) and the volumetric loss share one kernel per kind,
so a single-voxel volume reduces to the per-voxel value exactly.
"""

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .tensor import Tensor, as_tensor, relu, softmax

EPS_PROB = 1e-7
PROB_SUM_TOL = 1e-6


class HolderExponents:
    """Conjugate exponent pair (alpha, beta) with 1/alpha + 1/beta = 1."""

    __slots__ = ("alpha", "beta")

    def __init__(self, alpha):
        alpha = float(alpha)
        if not alpha > 1.0:
            raise ConfigError(f"holder exponent alpha must exceed 1, got {alpha}")
        self.alpha = alpha
        self.beta = alpha / (alpha - 1.0)

    def __repr__(self):
        return f"HolderExponents(alpha={self.alpha}, beta={self.beta})"


class ProbVector:
    """A discrete distribution over classes, validated then clamped."""

    __slots__ = ("values",)

    def __init__(self, values):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 1:
            raise ShapeError(f"ProbVector needs a 1-d sequence, got shape {v.shape}")
        if abs(v.sum() - 1.0) > PROB_SUM_TOL:
            raise DomainError(f"probabilities sum to {v.sum():.8f}, not 1")
        v = np.clip(v, EPS_PROB, 1.0)
        v.flags.writeable = False
        self.values = v

    def __len__(self):
        return self.values.shape[0]


def _coerce(p):
    if isinstance(p, ProbVector):
        return Tensor(p.values)
    return as_tensor(p)


def _abs(t):
    return relu(t) + relu(-t)


# per-kind kernels: clamped prob tensors in, per-position divergence out
# (class axis 0 collapsed, keepdims)


def _holder(p, q, e):
    inner = (p * q).sum(axes=0, keepdims=True)
    p_norm = p.pow(e.alpha).sum(axes=0, keepdims=True).pow(1.0 / e.alpha)
    q_norm = q.pow(e.beta).sum(axes=0, keepdims=True).pow(1.0 / e.beta)
    return p_norm.log() + q_norm.log() - inner.log()


def _total_variation(p, q, e=None):
    return _abs(p - q).sum(axes=0, keepdims=True) * 0.5


def _squared_hellinger(p, q, e=None):
    d = p.pow(0.5) - q.pow(0.5)
    return (d * d).sum(axes=0, keepdims=True)


def _kullback_leibler(p, q, e=None):
    return (p * (p / q).log()).sum(axes=0, keepdims=True)


def _neyman_chi2(p, q, e=None):
    d = p - q
    return (d * d / p).sum(axes=0, keepdims=True)


def _jensen_shannon(p, q, e=None):
    m = (p + q) * 0.5
    return (_kullback_leibler(p, m) + _kullback_leibler(q, m)) * 0.5


F_DIVERGENCES = {
    "total_variation": _total_variation,
    "squared_hellinger": _squared_hellinger,
    "kullback_leibler": _kullback_leibler,
    "neyman_chi2": _neyman_chi2,
    "jensen_shannon": _jensen_shannon,
}

DIVERGENCE_KINDS = ("holder",) + tuple(F_DIVERGENCES)


def _kernel(kind):
    if kind == "holder":
        return _holder
    try:
        return F_DIVERGENCES[kind]
    except KeyError:
        raise ConfigError(
            f"unknown divergence kind {kind!r}; expected one of {DIVERGENCE_KINDS}"
        ) from None


def hpd(p, q, exponents):
    """Holder statistical pseudo-divergence between two discrete distributions.

    -log( sum(p*q) / ((sum(p^a))^(1/a) * (sum(q^b))^(1/b)) ) with conjugate
    a, b > 1. Non-negative by Holder's inequality; may be positive at p == q,
    which is what makes it a pseudo-divergence.
    """
    p, q = _coerce(p), _coerce(q)
    if p.shape != q.shape:
        raise ShapeError(f"hpd: shapes {p.shape} vs {q.shape}")
    return _holder(p, q, exponents).mean()


def f_divergence(kind, p, q):
    """One of the classic f-divergences (see F_DIVERGENCES) as a scalar."""
    if kind not in F_DIVERGENCES:
        raise ConfigError(
            f"unknown f-divergence {kind!r}; expected one of {tuple(F_DIVERGENCES)}"
        )
    p, q = _coerce(p), _coerce(q)
    if p.shape != q.shape:
        raise ShapeError(f"f_divergence: shapes {p.shape} vs {q.shape}")
    return F_DIVERGENCES[kind](p, q).mean()


def voxel_divergence_loss(pred_logits, label_probs, kind="holder", exponents=None):
    """Voxel-averaged divergence between softmaxed logits and label probabilities.

    pred_logits and label_probs are [J,D,H,W]; the divergence runs per voxel
    over the class axis and the result is the mean over D*H*W voxels.
    Direction is D(prediction : label).
    """
    pred_logits, label_probs = as_tensor(pred_logits), as_tensor(label_probs)
    if pred_logits.shape != label_probs.shape:
        raise ShapeError(
            f"voxel loss: shapes {pred_logits.shape} vs {label_probs.shape}"
        )
    if pred_logits.data.ndim != 4:
        raise ShapeError(f"voxel loss: need [J,D,H,W], got {pred_logits.shape}")
    if kind == "holder" and exponents is None:
        raise ConfigError("holder divergence needs exponents")
    fn = _kernel(kind)
    p = softmax(pred_logits, axis=0).clamp(EPS_PROB, 1.0)
    q = label_probs.clamp(EPS_PROB, 1.0)
    return fn(p, q, exponents).mean()
