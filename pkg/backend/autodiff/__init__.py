"""
自動微分核心
Autodiff Core
"""

from .tensor import Tensor, Tape, matmul, no_grad, tensor
from .functional import (
    BatchNormState,
    GruWeights,
    batchnorm,
    concat,
    concat_lastdim,
    dropout,
    gru_cell,
    linear,
    relu,
    sigmoid,
    softmax_lastdim,
    softplus,
    stack,
)
from .optim import Adam, AdamState, EarlyStopping, PlateauScheduler, adam_step, clip_grad_norm
from .gradcheck import grad_check
from .rng import RngStreams, stream

__all__ = [
    'Tensor', 'Tape', 'matmul', 'no_grad', 'tensor',
    'BatchNormState', 'GruWeights', 'batchnorm', 'concat', 'concat_lastdim', 'dropout',
    'gru_cell', 'linear', 'relu', 'sigmoid', 'softmax_lastdim', 'softplus', 'stack',
    'Adam', 'AdamState', 'EarlyStopping', 'PlateauScheduler', 'adam_step', 'clip_grad_norm',
    'grad_check', 'RngStreams', 'stream',
]
