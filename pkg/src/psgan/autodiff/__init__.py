"""Minimal dense tensors with reverse-mode automatic differentiation."""

from psgan.autodiff.tensor import (
    Tape,
    Tensor,
    abs_,
    add,
    backward,
    concat,
    div,
    exp,
    is_recording,
    mean,
    mul,
    reshape,
    sqrt,
    square,
    sub,
    sum_,
)
from psgan.autodiff.ops import (
    EPS,
    NormStats,
    bce_with_logits,
    dropout,
    l1_loss,
    leaky_relu,
    masked_moments,
    moments,
    relu,
    sigmoid,
    tanh,
)
from psgan.autodiff.conv import conv2d, conv2d_transpose
from psgan.autodiff.gradcheck import check_gradients, relative_error

__all__ = [
    "EPS", "NormStats", "Tape", "Tensor", "abs_", "add", "backward", "bce_with_logits",
    "check_gradients", "concat", "conv2d", "conv2d_transpose", "div", "dropout", "exp",
    "is_recording", "l1_loss", "leaky_relu", "masked_moments", "mean", "moments", "mul",
    "relative_error", "relu", "reshape", "sigmoid", "sqrt", "square", "sub", "sum_", "tanh",
]
