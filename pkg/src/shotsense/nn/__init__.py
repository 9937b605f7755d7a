from .tensor import (
    Tensor,
    add,
    batch_norm,
    conv1d,
    gap,
    linear,
    mish,
    mul,
    relu,
    sigmoid,
    softmax,
    softmax_np,
    weighted_cross_entropy,
)
from .layers import BatchNorm1d, Conv1d, ConvBlock, Linear, Module
from .optim import Adam
from .gradcheck import GradCheckReport, grad_check

__all__ = [
    "Tensor", "add", "batch_norm", "conv1d", "gap", "linear", "mish", "mul",
    "relu", "sigmoid", "softmax", "softmax_np", "weighted_cross_entropy",
    "BatchNorm1d", "Conv1d", "ConvBlock", "Linear", "Module", "Adam",
    "GradCheckReport", "grad_check",
]
