"""Experiment configuration: a JSON-mirrored record of one training run."""

import json

import numpy as np

from .divergences import DIVERGENCE_KINDS
from .errors import ConfigError, ParseError
from .network import ArchConfig

_DEFAULTS = {
    "seed": 0,
    "data_dir": "data",
    "out_dir": "runs/default",
    "alpha": 1.1,
    "divergence": "holder",
    "lam_mi": 1.0,
    "lam_hd": 1.0,
    "gammas": None,
    "learning_rate": 0.0008,
    "weight_decay": 1e-5,
    "epochs": 60,
    "batch_size": 4,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_eps": 1e-8,
    "tau": 0.05,
}


class ExperimentConfig:
    """All knobs of one run; every field mirrors one JSON key."""

    __slots__ = ("arch",) + tuple(_DEFAULTS)

    def __init__(self, arch=None, **kwargs):
        unknown = set(kwargs) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        self.arch = arch or ArchConfig()
        for key, default in _DEFAULTS.items():
            setattr(self, key, kwargs.get(key, default))
        self._validate()

    def _validate(self):
        self.seed = int(self.seed)
        self.epochs = int(self.epochs)
        self.batch_size = int(self.batch_size)
        self.alpha = float(self.alpha)
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.alpha > 1:
            raise ConfigError(f"alpha must exceed 1, got {self.alpha}")
        if self.divergence not in DIVERGENCE_KINDS:
            raise ConfigError(
                f"divergence must be one of {DIVERGENCE_KINDS}, got {self.divergence!r}"
            )
        for key in ("lam_mi", "lam_hd"):
            val = float(getattr(self, key))
            setattr(self, key, val)
            if not (np.isfinite(val) and val >= 0):
                raise ConfigError(f"{key} must be finite and non-negative, got {val}")
        self.learning_rate = float(self.learning_rate)
        self.weight_decay = float(self.weight_decay)
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError("learning_rate must be positive")
        if not (np.isfinite(self.weight_decay) and self.weight_decay >= 0):
            raise ConfigError("weight_decay must be non-negative")
        self.tau = float(self.tau)
        if not 0 <= self.tau < 1:
            raise ConfigError(f"tau must lie in [0, 1), got {self.tau}")
        if self.gammas is not None:
            self.gammas = tuple(float(g) for g in self.gammas)
            if len(self.gammas) != self.arch.levels:
                raise ConfigError(
                    f"{len(self.gammas)} gammas for {self.arch.levels} levels"
                )
            if any(not np.isfinite(g) or g < 0 for g in self.gammas):
                raise ConfigError("gammas must be finite and non-negative")

    def replace(self, **kwargs):
        """Copy with the given fields changed (ablation variants)."""
        d = self.to_dict()
        arch = kwargs.pop("arch", None) or ArchConfig.from_dict(d.pop("arch"))
        d.pop("arch", None)
        d.update(kwargs)
        return ExperimentConfig(arch=arch, **d)

    def to_dict(self):
        d = {key: getattr(self, key) for key in _DEFAULTS}
        if d["gammas"] is not None:
            d["gammas"] = list(d["gammas"])
        d["arch"] = self.arch.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        arch = ArchConfig.from_dict(d.pop("arch")) if "arch" in d else None
        return cls(arch=arch, **d)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ParseError(f"{path}: invalid config: {exc}") from None
        if not isinstance(doc, dict):
            raise ParseError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc)
