"""Layers with exact analytic gradients.

Conventions:
  - every array is float64 unless it is an id/mask input;
  - forward(*) caches what backward needs; backward(dout) returns a tuple of
    input gradients aligned with forward's positional inputs (None for
    non-differentiable inputs) and accumulates into Param.grad;
  - parameter gradients accumulate (+=), so call zero_grads between steps.
"""

from __future__ import annotations

import numpy as np


class Param:
    """A named parameter tensor with a matching gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


def zero_grads(params) -> None:
    for p in params:
        p.grad[...] = 0.0


def glorot_uniform(fan_in: int, fan_out: int, shape, rng: np.random.Generator) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


_ONE_BELOW_1 = np.nextafter(1.0, 0.0)
_TINY = np.finfo(np.float64).tiny


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; output clamped strictly inside (0, 1)."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _TINY, _ONE_BELOW_1)


class Linear:
    """Affine map y = x W + b."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, name: str = "linear"):
        self.W = Param(f"{name}.W", glorot_uniform(d_in, d_out, (d_in, d_out), rng))
        self.b = Param(f"{name}.b", np.zeros(d_out))
        self._x: np.ndarray | None = None

    def params(self):
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.W.value.shape[0]:
            raise ValueError(
                f"{self.W.name}: expected input (n, {self.W.value.shape[0]}), got {x.shape}"
            )
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy: np.ndarray):
        x = self._x
        self.W.grad += x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return (dy @ self.W.value.T,)


class ReLU:
    def __init__(self):
        self._x = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return np.maximum(x, 0.0)

    def backward(self, dy: np.ndarray):
        return (dy * (self._x > 0),)


class Sigmoid:
    def __init__(self):
        self._y = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = sigmoid(x)
        return self._y

    def backward(self, dy: np.ndarray):
        y = self._y
        return (dy * y * (1.0 - y),)


class Tanh:
    def __init__(self):
        self._y = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy: np.ndarray):
        return (dy * (1.0 - self._y**2),)


class Embedding:
    """Row lookup table. ids equal to `padding_id` yield a zero vector and
    receive no gradient; duplicate ids accumulate gradient additively."""

    def __init__(self, num_rows: int, dim: int, rng: np.random.Generator,
                 name: str = "embedding", padding_id: int | None = None):
        self.table = Param(f"{name}.table", rng.normal(0.0, 0.1, size=(num_rows, dim)))
        self.padding_id = padding_id
        self._ids = None
        self._pad_mask = None

    def params(self):
        return [self.table]

    def forward(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        n_rows = self.table.value.shape[0]
        if ids.size and (ids.min() < 0 or ids.max() >= n_rows):
            bad = int(ids.min()) if ids.min() < 0 else int(ids.max())
            raise ValueError(f"{self.table.name}: id {bad} out of range [0, {n_rows})")
        out = self.table.value[ids]
        if self.padding_id is not None:
            pad = ids == self.padding_id
            out = out.copy()
            out[pad] = 0.0
            self._pad_mask = pad
        else:
            self._pad_mask = None
        self._ids = ids
        return out

    def backward(self, dout: np.ndarray):
        ids = self._ids
        if self._pad_mask is not None:
            keep = ~self._pad_mask
            np.add.at(self.table.grad, ids[keep], dout[keep])
        else:
            np.add.at(self.table.grad, ids, dout)
        return (None,)


class CrossLayer:
    """Feature-interaction layer y = x0 * (xl W + b) + xl (residual form)."""

    def __init__(self, dim: int, rng: np.random.Generator, name: str = "cross"):
        self.W = Param(f"{name}.W", glorot_uniform(dim, dim, (dim, dim), rng))
        self.b = Param(f"{name}.b", np.zeros(dim))
        self._cache = None

    def params(self):
        return [self.W, self.b]

    def forward(self, x0: np.ndarray, xl: np.ndarray) -> np.ndarray:
        if x0.shape != xl.shape:
            raise ValueError(f"{self.W.name}: x0 {x0.shape} and xl {xl.shape} must match")
        u = xl @ self.W.value + self.b.value
        self._cache = (x0, xl, u)
        return x0 * u + xl

    def backward(self, dy: np.ndarray):
        x0, xl, u = self._cache
        dx0 = dy * u
        s = dy * x0
        self.W.grad += xl.T @ s
        self.b.grad += s.sum(axis=0)
        dxl = s @ self.W.value.T + dy
        return (dx0, dxl)


class MaskedLstm:
    """Single-layer LSTM over a masked sequence.

    Gate layout in the fused weight matrices is (input, forget, output,
    modulation). Masked steps pass (h, c) through bit-exactly, so the hidden
    state after the last step equals the state at each row's final unmasked
    step. Forget-gate bias starts at +1.
    """

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator, name: str = "lstm"):
        self.d_in = d_in
        self.d_h = d_h
        self.Wx = Param(f"{name}.Wx", glorot_uniform(d_in + d_h, 4 * d_h, (d_in, 4 * d_h), rng))
        self.Wh = Param(f"{name}.Wh", glorot_uniform(d_in + d_h, 4 * d_h, (d_h, 4 * d_h), rng))
        b = np.zeros(4 * d_h)
        b[d_h : 2 * d_h] = 1.0
        self.b = Param(f"{name}.b", b)
        self._steps: list[dict] = []
        self._x_shape = None

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def _step(self, x_t: np.ndarray, h: np.ndarray, c: np.ndarray):
        H = self.d_h
        z = x_t @ self.Wx.value + h @ self.Wh.value + self.b.value
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H : 2 * H])
        o = sigmoid(z[:, 2 * H : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return h_new, c_new, (i, f, o, g, tc)

    def forward(self, x: np.ndarray, mask: np.ndarray,
                h0: np.ndarray | None = None, c0: np.ndarray | None = None) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.d_in:
            raise ValueError(f"{self.Wx.name}: expected (n, T, {self.d_in}), got {x.shape}")
        n, T, _ = x.shape
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n, T):
            raise ValueError(f"mask shape {mask.shape} does not match input {(n, T)}")
        h = np.zeros((n, self.d_h)) if h0 is None else h0
        c = np.zeros((n, self.d_h)) if c0 is None else c0
        if h.shape != (n, self.d_h) or c.shape != (n, self.d_h):
            raise ValueError("initial state shape mismatch")
        self._steps = []
        self._x_shape = x.shape
        self._had_init = h0 is not None or c0 is not None
        for t in range(T):
            m = mask[:, t]
            h_new, c_new, gates = self._step(x[:, t, :], h, c)
            self._steps.append({"x": x[:, t, :], "h_prev": h, "c_prev": c,
                                "gates": gates, "m": m})
            h = np.where(m[:, None], h_new, h)
            c = np.where(m[:, None], c_new, c)
        self._h_final, self._c_final = h, c
        return h

    def backward(self, dh_last: np.ndarray):
        dx = np.zeros(self._x_shape)
        dh = dh_last
        dc = np.zeros_like(dh_last)
        for t in range(len(self._steps) - 1, -1, -1):
            st = self._steps[t]
            i, f, o, g, tc = st["gates"]
            m = st["m"][:, None]
            dh_new = dh * m
            dc_new = dc * m
            do = dh_new * tc
            dc_inner = dc_new + dh_new * o * (1.0 - tc**2)
            di = dc_inner * g
            df = dc_inner * st["c_prev"]
            dg = dc_inner * i
            dz = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o),
                 dg * (1.0 - g**2)],
                axis=1,
            )
            self.Wx.grad += st["x"].T @ dz
            self.Wh.grad += st["h_prev"].T @ dz
            self.b.grad += dz.sum(axis=0)
            dx[:, t, :] = dz @ self.Wx.value.T
            dh = dh * (1.0 - m) + dz @ self.Wh.value.T
            dc = dc * (1.0 - m) + dc_inner * f
        if self._had_init:
            return (dx, None, dh, dc)
        return (dx, None)


class BceLoss:
    """Mean binary cross-entropy; predictions clipped to [1e-12, 1 - 1e-12]."""

    CLIP = 1e-12

    def __init__(self):
        self._cache = None

    def params(self):
        return []

    def forward(self, y_pred: np.ndarray, y_true: np.ndarray) -> float:
        y_pred = np.asarray(y_pred, dtype=np.float64)
        y_true = np.asarray(y_true, dtype=np.float64)
        if y_pred.shape != y_true.shape:
            raise ValueError(f"prediction shape {y_pred.shape} != target shape {y_true.shape}")
        p = np.clip(y_pred, self.CLIP, 1.0 - self.CLIP)
        self._cache = (p, y_true)
        return float(-np.mean(y_true * np.log(p) + (1.0 - y_true) * np.log(1.0 - p)))

    def backward(self, dout: float = 1.0):
        p, y = self._cache
        n = p.size
        dp = dout * (p - y) / (p * (1.0 - p)) / n
        return (dp, None)
