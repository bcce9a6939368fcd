"""Numpy reverse-mode autodiff, layers, Adam and checkpoints."""

from .functional import conv1d, conv_transpose1d, gru, lstm
from .layers import (
    GRU,
    LSTM,
    Conv1d,
    ConvTranspose1d,
    LayerNorm,
    Linear,
    Module,
    SelfAttention,
    glorot_uniform,
    positional_encoding,
)
from .optim import Adam, AdamState, adam_apply
from .tensor import (
    Parameter,
    Tensor,
    add,
    layer_norm,
    linear,
    matmul,
    mse_loss,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    tanh,
    transpose,
)
