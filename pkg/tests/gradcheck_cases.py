"""Small randomized layer instances for finite-difference gradient checks.

Each factory returns ``(loss_fn, leaves)``: ``loss_fn()`` rebuilds the graph
from the current leaf values and returns a scalar Tensor.
"""

import numpy as np

from mpcdetect import nn
from mpcdetect.nn import Tensor, mse_loss
from mpcdetect.nn.tensor import mul, sum_all


def _weighted_sum(out, weights):
    return sum_all(mul(out, weights))


def dense(rng):
    layer = nn.Linear(4, 3, rng)
    layer.bias.data = rng.normal(size=3)
    x = Tensor(rng.normal(size=(2, 5, 4)), requires_grad=True)
    w = rng.normal(size=(2, 5, 3))
    return (lambda: _weighted_sum(layer(x), w)), [x] + layer.parameters()


def conv1d(rng):
    layer = nn.Conv1d(2, 3, 3, rng, stride=2, padding=1)
    layer.bias.data = rng.normal(size=3)
    x = Tensor(rng.normal(size=(2, 2, 9)), requires_grad=True)
    w = rng.normal(size=(2, 3, layer.output_length(9)))
    return (lambda: _weighted_sum(layer(x), w)), [x] + layer.parameters()


def conv_transpose1d(rng):
    layer = nn.ConvTranspose1d(3, 2, 4, rng, stride=2, padding=2)
    layer.bias.data = rng.normal(size=2)
    x = Tensor(rng.normal(size=(2, 3, 5)), requires_grad=True)
    out_len = (5 - 1) * 2 - 4 + 4 + 1
    w = rng.normal(size=(2, 2, out_len))
    return (lambda: _weighted_sum(layer(x, output_padding=1), w)), [x] + layer.parameters()


def lstm_cell(rng):
    layer = nn.LSTM(3, 4, rng)
    layer.bias.data = rng.normal(scale=0.5, size=16)
    x = Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
    w = rng.normal(size=(2, 4, 4))
    return (lambda: _weighted_sum(layer(x), w)), [x] + layer.parameters()


def gru_cell(rng):
    layer = nn.GRU(3, 4, rng)
    layer.b_ih.data = rng.normal(scale=0.5, size=12)
    layer.b_hh.data = rng.normal(scale=0.5, size=12)
    x = Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
    w = rng.normal(size=(2, 4, 4))
    return (lambda: _weighted_sum(layer(x), w)), [x] + layer.parameters()


def attention(rng):
    layer = nn.SelfAttention(4, 1, rng)
    x = Tensor(rng.normal(size=(2, 5, 4)), requires_grad=True)
    w = rng.normal(size=(2, 5, 4))
    # the key bias adds a per-query constant to every score, which softmax
    # cancels; its gradient is identically zero and is checked separately
    leaves = [p for name, p in layer.named_parameters() if name != "k.bias"]
    return (lambda: _weighted_sum(layer(x), w)), [x] + leaves


def layer_norm(rng):
    layer = nn.LayerNorm(5)
    layer.gamma.data = rng.normal(size=5)
    layer.beta.data = rng.normal(size=5)
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w = rng.normal(size=(3, 5))
    return (lambda: _weighted_sum(layer(x), w)), [x] + layer.parameters()


def mse(rng):
    pred = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    target = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    return (lambda: mse_loss(pred, target)), [pred, target]


LAYERS = {
    "dense": dense,
    "conv1d": conv1d,
    "conv_transpose1d": conv_transpose1d,
    "lstm_cell": lstm_cell,
    "gru_cell": gru_cell,
    "attention": attention,
    "layer_norm": layer_norm,
    "mse": mse,
}


def check(factory, seed, h=1e-5):
    """Max relative error between backward() and central differences."""
    from oracles import central_difference, max_relative_error

    rng = np.random.default_rng(seed)
    loss_fn, leaves = factory(rng)
    for leaf in leaves:
        leaf.grad = None
    loss_fn().backward()
    analytic = [leaf.grad.copy() for leaf in leaves]
    numeric = central_difference(lambda: loss_fn().item(), [leaf.data for leaf in leaves], h)
    return max_relative_error(analytic, numeric)
