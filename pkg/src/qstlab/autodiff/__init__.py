"""Minimal float64 tensor engine with reverse-mode differentiation."""

from .tensor import (
    Tensor, add, as_tensor, clamp_min, concat_last, div, gelu, grad_enabled, layer_norm,
    matmul, mean, mul, no_grad, permute, relu, reshape, scale, slice_, softmax_lastdim, sqrt,
    sub, sum_, transpose_last2,
)
from .optim import AdamState, SGDState, adam_step, lr_schedule, sgd_step
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numerical_grad, relative_error
