"""Adam with coupled weight decay, operating on a ModelParams store."""

import numpy as np

from .errors import ConfigError, ContractError
from .tensor import Tensor


class Adam:
    """Classic Adam; weight decay is added to the gradient (coupled form).

    Parameters are immutable tensors, so each step replaces them in the
    store; per-parameter first/second moment state is keyed by name.
    """

    def __init__(
        self,
        params,
        learning_rate,
        weight_decay=0.0,
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
    ):
        lr, wd = float(learning_rate), float(weight_decay)
        if not (np.isfinite(lr) and lr > 0):
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not (np.isfinite(wd) and wd >= 0):
            raise ConfigError(f"weight decay must be non-negative, got {wd}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ConfigError(f"eps must be positive, got {eps}")
        self.params = params
        self.lr = lr
        self.wd = wd
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {name: np.zeros(t.shape) for name, t in params.items()}
        self._v = {name: np.zeros(t.shape) for name, t in params.items()}

    def step(self, grads):
        """One update from a {name: gradient array} map covering all params."""
        missing = [name for name in self._m if name not in grads]
        if missing:
            raise ContractError(f"step: no gradient for {missing[0]}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, theta in list(self.params.items()):
            g = np.asarray(grads[name], dtype=np.float64)
            if g.shape != theta.shape:
                raise ContractError(
                    f"step: gradient shape {g.shape} for {name} {theta.shape}"
                )
            if self.wd:
                g = g + self.wd * theta.data
            m = self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * g * g
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            self.params.set(name, Tensor(theta.data - update, requires_grad=True))
