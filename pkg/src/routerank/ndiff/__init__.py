"""Minimal differentiable-layer engine: exact analytic backward passes,
an Adam optimizer, and a finite-difference gradient checker.

All math is 64-bit. There is no general autodiff graph; models compose a
fixed topology of these layers and call backward in reverse order.
"""

from .layers import (
    Param,
    Linear,
    ReLU,
    Sigmoid,
    Tanh,
    Embedding,
    CrossLayer,
    MaskedLstm,
    BceLoss,
    glorot_uniform,
    sigmoid,
)
from .optim import Adam, NonFiniteGradientError
from .gradcheck import grad_check

__all__ = [
    "Param",
    "Linear",
    "ReLU",
    "Sigmoid",
    "Tanh",
    "Embedding",
    "CrossLayer",
    "MaskedLstm",
    "BceLoss",
    "glorot_uniform",
    "sigmoid",
    "Adam",
    "NonFiniteGradientError",
    "grad_check",
]
