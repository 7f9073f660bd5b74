"""Variational mutual-information transfer between the full-modality and
missing-modality feature paths.

Each backbone level k contributes a Gaussian negative log-likelihood of the
full-modality feature under a head driven by the missing-modality feature:
a 1x1x1 convolution regresses the mean per position (heteroscedastic) while
one learned log-sigma per channel sets the variance (homoscedastic). Level
terms are weighted by an increasing schedule gamma_k and normalized by the
element count of the level so all depths contribute on comparable scales.
"""

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor, conv3d

LOG_SIGMA_INIT = 0.0


class FeaturePair:
    """Teacher/student features at one backbone level.

    The teacher side d_f is stored as a detached constant so no gradient can
    reach full-modality-path parameters through this loss, regardless of how
    the caller produced it.
    """

    __slots__ = ("level", "d_f", "d_m")

    def __init__(self, level, d_f, d_m):
        level = int(level)
        if level < 1:
            raise ConfigError(f"feature level must be >= 1, got {level}")
        if d_f.shape != d_m.shape:
            raise ShapeError(
                f"feature pair at level {level}: shapes {d_f.shape} vs {d_m.shape}"
            )
        self.level = level
        self.d_f = Tensor(d_f.data)
        self.d_m = d_m


class VariationalHead:
    """Per-level Gaussian head: mean via 1x1x1 conv, sigma_c = exp(log_sigma_c)."""

    __slots__ = ("mu_w", "mu_b", "log_sigma")

    def __init__(self, mu_w, mu_b, log_sigma):
        c = mu_w.shape[0]
        if mu_w.shape != (c, c, 1, 1, 1):
            raise ShapeError(f"mu weight must be [C,C,1,1,1], got {mu_w.shape}")
        if mu_b.shape != (c,):
            raise ShapeError(f"mu bias must be [C], got {mu_b.shape}")
        if log_sigma.shape != (c,):
            raise ShapeError(f"log_sigma must be [C], got {log_sigma.shape}")
        self.mu_w = mu_w
        self.mu_b = mu_b
        self.log_sigma = log_sigma

    @property
    def channels(self):
        return self.mu_w.shape[0]

    def mu(self, d_m):
        c = self.channels
        return conv3d(d_m, self.mu_w) + self.mu_b.reshape((c, 1, 1, 1))

    @classmethod
    def init(cls, channels, rng):
        bound = 1.0 / np.sqrt(channels)
        w = rng.uniform(-bound, bound, size=(channels, channels, 1, 1, 1))
        return cls(
            Tensor(w, requires_grad=True),
            Tensor(np.zeros(channels), requires_grad=True),
            Tensor(np.full(channels, LOG_SIGMA_INIT), requires_grad=True),
        )


def gamma_schedule(k_levels):
    """Level weights gamma_k = k/K: strictly increasing, ending at 1."""
    k_levels = int(k_levels)
    if k_levels < 1:
        raise ConfigError(f"gamma_schedule needs K >= 1, got {k_levels}")
    return tuple((k + 1) / k_levels for k in range(k_levels))


def variational_nll(d_f, mu, log_sigma):
    """Gaussian NLL summed over all elements, additive constant dropped.

    sum over c,d,h,w of [ log sigma_c + (d_f - mu)^2 / (2 sigma_c^2) ].
    """
    if d_f.shape != mu.shape:
        raise ShapeError(f"variational_nll: shapes {d_f.shape} vs {mu.shape}")
    if d_f.data.ndim != 4:
        raise ShapeError(f"variational_nll: need [C,D,H,W], got {d_f.shape}")
    c = d_f.shape[0]
    if log_sigma.shape != (c,):
        raise ShapeError(
            f"variational_nll: log_sigma shape {log_sigma.shape}, want ({c},)"
        )
    ls = log_sigma.reshape((c, 1, 1, 1))
    resid = d_f - mu
    inv_two_var = (ls * -2.0).exp() * 0.5
    return (ls + resid * resid * inv_two_var).sum()


def mi_transfer_loss(pairs, heads, gammas):
    """Weighted per-level NLL, averaged over the batch and normalized per level.

    pairs is either one sample's list of K FeaturePairs or a batch (list of
    such lists); the expectation over samples is the batch mean. Levels must
    line up with heads in order 1..K.
    """
    if not pairs:
        raise ConfigError("mi_transfer_loss: empty batch")
    batch = [pairs] if isinstance(pairs[0], FeaturePair) else list(pairs)
    k_levels = len(heads)
    if len(gammas) != k_levels:
        raise ConfigError(
            f"mi_transfer_loss: {len(gammas)} gammas for {k_levels} heads"
        )
    for sample in batch:
        if len(sample) != k_levels:
            raise ConfigError(
                f"mi_transfer_loss: sample has {len(sample)} levels, want {k_levels}"
            )
        for k, pair in enumerate(sample):
            if pair.level != k + 1:
                raise ConfigError(
                    f"mi_transfer_loss: pair at slot {k} has level {pair.level}"
                )

    total = None
    for k in range(k_levels):
        n_k = batch[0][k].d_f.size
        acc = None
        for sample in batch:
            pair = sample[k]
            nll = variational_nll(pair.d_f, heads[k].mu(pair.d_m), heads[k].log_sigma)
            acc = nll if acc is None else acc + nll
        term = acc * (gammas[k] / (len(batch) * n_k))
        total = term if total is None else total + term
    return total
