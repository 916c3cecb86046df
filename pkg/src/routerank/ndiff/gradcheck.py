"""Central finite-difference verification of layer gradients."""

from __future__ import annotations

import numpy as np

from .layers import zero_grads


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(layer, inputs, *, eps: float = 1e-5, rng: np.random.Generator | None = None,
               nondiff: tuple[int, ...] = ()) -> float:
    """Max relative error between analytic and central-difference gradients.

    The scalar objective is sum(output * R) for a fixed random projection R
    (R = 1 when the layer already returns a scalar). Checks every element of
    every parameter and of every differentiable float input. `nondiff` lists
    input positions to skip in addition to non-float inputs (ids, masks).
    """
    rng = rng or np.random.default_rng(0)
    inputs = [np.array(x, dtype=np.float64) if np.asarray(x).dtype.kind == "f"
              else np.asarray(x) for x in inputs]

    def objective() -> tuple[float, np.ndarray | float]:
        out = layer.forward(*inputs)
        if np.isscalar(out):
            return float(out), 1.0
        return float(np.sum(out * R)), R

    first = layer.forward(*inputs)
    R = 1.0 if np.isscalar(first) else rng.standard_normal(np.shape(first))

    params = layer.params()
    zero_grads(params)
    _, proj = objective()
    dinputs = layer.backward(proj)
    if not isinstance(dinputs, tuple):
        dinputs = (dinputs,)

    max_err = 0.0

    def check_buffer(value: np.ndarray, analytic: np.ndarray) -> None:
        nonlocal max_err
        flat_v = value.reshape(-1)
        flat_a = analytic.reshape(-1)
        for idx in range(flat_v.size):
            orig = flat_v[idx]
            flat_v[idx] = orig + eps
            f_plus, _ = objective()
            flat_v[idx] = orig - eps
            f_minus, _ = objective()
            flat_v[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            max_err = max(max_err, _rel_err(flat_a[idx], numeric))

    for p in params:
        check_buffer(p.value, p.grad)

    for pos, x in enumerate(inputs):
        if pos in nondiff or x.dtype.kind != "f":
            continue
        analytic = dinputs[pos] if pos < len(dinputs) else None
        if analytic is None:
            raise ValueError(f"layer returned no gradient for differentiable input {pos}")
        check_buffer(x, np.asarray(analytic))

    return max_err
