"""Minimal differentiable dense-array engine (float64, reverse mode)."""

from .gradcheck import GradCheckReport, SelectionChanged, finite_diff_check
from .ops import (
    cross_entropy_rows,
    layer_norm,
    log_softmax,
    scaled_dot_attention,
    softmax,
    softmax_jacobian,
)
from .optim import OptimizerState, global_norm, optimizer_step
from .tensor import (
    DiffArray,
    Tape,
    abs_,
    active_tape,
    asdiff,
    concat,
    constant,
    cos,
    dropout,
    exp,
    gelu,
    getitem,
    log,
    matmul,
    pad_rows,
    reshape,
    segment_sum,
    sigmoid,
    silu,
    sqrt,
    stack,
    swapaxes,
    take_rows,
    tanh,
    transpose,
    zeros,
)

__all__ = [
    "DiffArray", "Tape", "GradCheckReport", "SelectionChanged", "OptimizerState",
    "abs_", "active_tape", "asdiff", "concat", "constant", "cos", "cross_entropy_rows",
    "dropout", "exp", "finite_diff_check", "gelu", "getitem", "global_norm",
    "layer_norm", "log", "log_softmax", "matmul", "optimizer_step", "pad_rows",
    "reshape", "scaled_dot_attention", "segment_sum", "sigmoid", "silu", "softmax",
    "softmax_jacobian", "sqrt", "stack", "swapaxes", "take_rows", "tanh",
    "transpose", "zeros",
]
