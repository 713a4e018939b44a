"""Minimal dense-tensor core: reverse-mode autodiff, layers, Adam, grad checking."""
from . import kernels
from .gradcheck import grad_check, kink_margin
from .init import glorot_uniform, lstm_bias
from .ops import (
    LSTMParams,
    activation,
    add,
    affine,
    concat,
    conv1d,
    cross_entropy,
    dropout,
    embedding,
    log_softmax,
    lstm_sequence,
    lstm_step,
    masked_max_time,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_array,
    log_softmax_array,
    take_rows,
    tanh,
    total,
    transpose,
    unfold_time,
)
from .optim import Adam, AdamState, adam_step, clip_global_norm
from .tensor import DimensionError, Tensor, TrainingError, as_tensor, no_grad

__all__ = [
    "Adam", "AdamState", "DimensionError", "LSTMParams", "Tensor", "TrainingError",
    "activation", "adam_step", "add", "affine", "as_tensor", "clip_global_norm", "concat",
    "conv1d", "cross_entropy", "dropout", "embedding", "glorot_uniform", "grad_check",
    "kernels", "kink_margin", "log_softmax", "log_softmax_array", "lstm_bias", "lstm_sequence", "lstm_step",
    "masked_max_time", "matmul", "mean", "mul", "no_grad", "relu", "reshape", "sigmoid",
    "softmax", "softmax_array", "take_rows", "tanh", "total", "transpose", "unfold_time",
]
