"""Adam with standard bias correction."""

from __future__ import annotations

import numpy as np

from .layers import Param


class NonFiniteGradientError(RuntimeError):
    """A gradient buffer contains NaN/inf; carries the parameter name."""

    def __init__(self, param_name: str):
        super().__init__(f"non-finite gradient for parameter {param_name!r}")
        self.param_name = param_name


class Adam:
    """Per-parameter first/second moment state; update is
    value -= lr * m_hat / (sqrt(v_hat) + eps)."""

    def __init__(self, params: list[Param], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(p.name)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            p.value -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat view of optimizer state for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for p, m, v in zip(self.params, self.m, self.v):
            out[f"{p.name}.adam_m"] = m
            out[f"{p.name}.adam_v"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        for idx, p in enumerate(self.params):
            self.m[idx] = np.array(arrays[f"{p.name}.adam_m"], dtype=np.float64)
            self.v[idx] = np.array(arrays[f"{p.name}.adam_v"], dtype=np.float64)
