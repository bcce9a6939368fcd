"""Parameter containers built on the tensor ops."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError
from . import functional as F
from .tensor import Parameter, Tensor, attention, layer_norm, linear


def glorot_uniform(rng, shape, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Minimal module: attributes that are Parameters or Modules are
    registered in assignment order, which fixes checkpoint layout."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ParameterError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise ParameterError(f"{name}: shape {value.shape} != {p.data.shape}")
            p.data = value.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, in_features, out_features, rng):
        super().__init__()
        self.weight = Parameter(glorot_uniform(rng, (out_features, in_features), in_features, out_features))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x):
        return linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, stride=1, padding=None):
        super().__init__()
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.kernel_size = kernel_size
        self.weight = Parameter(glorot_uniform(
            rng, (out_channels, in_channels, kernel_size), in_channels * kernel_size, out_channels * kernel_size))
        self.bias = Parameter(np.zeros(out_channels))

    def output_length(self, length):
        return F.conv1d_output_length(length, self.kernel_size, self.stride, self.padding)

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, stride=1, padding=None):
        super().__init__()
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.kernel_size = kernel_size
        self.weight = Parameter(glorot_uniform(
            rng, (in_channels, out_channels, kernel_size), in_channels * kernel_size, out_channels * kernel_size))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x, output_padding=0):
        return F.conv_transpose1d(x, self.weight, self.bias, self.stride, self.padding, output_padding)


class LSTM(Module):
    """Single LSTM layer returning the hidden state at every step."""

    def __init__(self, input_size, hidden_size, rng):
        super().__init__()
        H = hidden_size
        self.w_ih = Parameter(glorot_uniform(rng, (4 * H, input_size), input_size, 4 * H))
        self.w_hh = Parameter(glorot_uniform(rng, (4 * H, H), H, 4 * H))
        self.bias = Parameter(np.zeros(4 * H))

    def forward(self, x):
        return F.lstm(x, self.w_ih, self.w_hh, self.bias)


class GRU(Module):
    def __init__(self, input_size, hidden_size, rng):
        super().__init__()
        H = hidden_size
        self.w_ih = Parameter(glorot_uniform(rng, (3 * H, input_size), input_size, 3 * H))
        self.w_hh = Parameter(glorot_uniform(rng, (3 * H, H), H, 3 * H))
        self.b_ih = Parameter(np.zeros(3 * H))
        self.b_hh = Parameter(np.zeros(3 * H))

    def forward(self, x):
        return F.gru(x, self.w_ih, self.w_hh, self.b_ih, self.b_hh)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def forward(self, x):
        return layer_norm(x, self.gamma, self.beta, self.eps)


class SelfAttention(Module):
    """Scaled dot-product self-attention over (B, T, d_model)."""

    def __init__(self, d_model, n_heads, rng):
        super().__init__()
        if d_model % n_heads:
            raise ParameterError(f"d_model {d_model} not divisible by {n_heads} heads")
        self.d_model = d_model
        self.n_heads = n_heads
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)

    def _split(self, t):
        B, T, _ = t.shape
        dh = self.d_model // self.n_heads
        return t.reshape(B, T, self.n_heads, dh).transpose(0, 2, 1, 3)

    def forward(self, x):
        B, T, _ = x.shape
        q, k, v = self.q(x), self.k(x), self.v(x)
        if self.n_heads > 1:
            q, k, v = self._split(q), self._split(k), self._split(v)
        ctx = attention(q, k, v)
        if self.n_heads > 1:
            ctx = ctx.transpose(0, 2, 1, 3).reshape(B, T, self.d_model)
        return self.out(ctx)


def positional_encoding(max_len, d_model):
    """Sine-cosine table of shape (max_len, d_model): even columns carry
    sin(pos / 10000**(2i/d)), odd columns the matching cosine."""
    if d_model < 2 or d_model % 2:
        raise ParameterError(f"d_model must be a positive even integer, got {d_model}")
    if max_len < 1:
        raise ParameterError(f"max_len must be >= 1, got {max_len}")
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, two_i / d_model)
    table = np.empty((max_len, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


__all__ = [
    "Module", "Linear", "Conv1d", "ConvTranspose1d", "LSTM", "GRU", "LayerNorm",
    "SelfAttention", "positional_encoding", "glorot_uniform", "Tensor",
]
