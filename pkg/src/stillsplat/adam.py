"""Adam on named parameter groups, with per-group learning rates."""
from __future__ import annotations

import numpy as np


class Adam:
    """Bias-corrected Adam over a dict of float64 arrays.

    Each group keeps its own step counter so a group's state can be reset
    (opacity resets) without touching the others.
    """

    def __init__(self, learning_rates: dict, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rates = dict(learning_rates)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = {}

    def _group(self, name, shape):
        if name not in self.state:
            self.state[name] = {
                "m": np.zeros(shape, dtype=np.float64),
                "v": np.zeros(shape, dtype=np.float64),
                "t": 0,
            }
        return self.state[name]

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place from ``grads`` (matching keys)."""
        for name, p in params.items():
            g = grads[name]
            lr = self.learning_rates[name]
            st = self._group(name, p.shape)
            st["t"] += 1
            st["m"] *= self.beta1
            st["m"] += (1.0 - self.beta1) * g
            st["v"] *= self.beta2
            st["v"] += (1.0 - self.beta2) * (g * g)
            mhat = st["m"] / (1.0 - self.beta1 ** st["t"])
            vhat = st["v"] / (1.0 - self.beta2 ** st["t"])
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def reset_group(self, name: str) -> None:
        self.state.pop(name, None)
