"""Fused sequence kernels: 1-D (transposed) convolution and LSTM/GRU layers.

Each kernel computes its own backward pass in bulk, which keeps the graph
small enough for pure-numpy training of the recurrent models.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, _sigmoid, as_tensor


def conv1d_output_length(length, kernel_size, stride=1, padding=0):
    return (length + 2 * padding - kernel_size) // stride + 1


def conv_transpose1d_output_length(length, kernel_size, stride=1, padding=0, output_padding=0):
    return (length - 1) * stride - 2 * padding + kernel_size + output_padding


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (B, C_in, L) with ``weight`` (C_out, C_in, k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {weight.shape}")
    B, C, L = x.shape
    O, _, k = weight.shape
    Lp = L + 2 * padding
    if Lp < k:
        raise ShapeError(f"conv1d: padded length {Lp} shorter than kernel {k} (input {x.shape})")
    n_out = conv1d_output_length(L, k, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    # (B, C, n_out, k) -> (B, n_out, C*k)
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride][:, :, :n_out]
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B, n_out, C * k)
    wmat = weight.data.reshape(O, C * k)
    y = cols @ wmat.T  # (B, n_out, O)
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data
    out = np.ascontiguousarray(y.transpose(0, 2, 1))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gt = g.transpose(0, 2, 1)  # (B, n_out, O)
        if weight.requires_grad:
            gw = gt.reshape(-1, O).T @ cols.reshape(-1, C * k)
            weight._accumulate(gw.reshape(O, C, k))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gt.sum(axis=(0, 1)))
        if x.requires_grad:
            dcols = (gt @ wmat).reshape(B, n_out, C, k)
            dxp = np.zeros((B, C, Lp))
            span = stride * (n_out - 1) + 1
            for j in range(k):
                dxp[:, :, j:j + span:stride] += dcols[:, :, :, j].transpose(0, 2, 1)
            x._accumulate(dxp[:, :, padding:padding + L])

    return Tensor._make(out, parents, backward, "conv1d")


def conv_transpose1d(x, weight, bias=None, stride=1, padding=0, output_padding=0):
    """Adjoint of :func:`conv1d`; ``weight`` is (C_in, C_out, k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"conv_transpose1d: input {x.shape} incompatible with kernel {weight.shape}")
    if output_padding < 0 or (output_padding > 0 and output_padding >= stride):
        raise ShapeError(f"conv_transpose1d: output_padding {output_padding} must be < stride {stride}")
    B, C, n = x.shape
    _, O, k = weight.shape
    L_out = conv_transpose1d_output_length(n, k, stride, padding, output_padding)
    if L_out < 1:
        raise ShapeError(f"conv_transpose1d: non-positive output length for input {x.shape}")
    full_len = max((n - 1) * stride + k, padding + L_out)
    wmat = weight.data.reshape(C, O * k)
    contrib = (x.data.transpose(0, 2, 1) @ wmat).reshape(B, n, O, k)
    full = np.zeros((B, O, full_len))
    span = stride * (n - 1) + 1
    for j in range(k):
        full[:, :, j:j + span:stride] += contrib[:, :, :, j].transpose(0, 2, 1)
    out = full[:, :, padding:padding + L_out]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None]
    out = np.ascontiguousarray(out)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2)))
        gfull = np.zeros((B, O, full_len))
        gfull[:, :, padding:padding + L_out] = g
        # gather: dcontrib[b, i, o, j] = gfull[b, o, j + stride * i]
        dcontrib = np.empty((B, n, O, k))
        for j in range(k):
            dcontrib[:, :, :, j] = gfull[:, :, j:j + span:stride].transpose(0, 2, 1)
        dmat = dcontrib.reshape(B, n, O * k)
        if x.requires_grad:
            x._accumulate((dmat @ wmat.T).transpose(0, 2, 1))
        if weight.requires_grad:
            gw = x.data.transpose(1, 0, 2).reshape(C, -1) @ dmat.reshape(-1, O * k)
            weight._accumulate(gw.reshape(C, O, k))

    return Tensor._make(out, parents, backward, "conv_transpose1d")


# -- recurrent layers ----------------------------------------------------------


def lstm(x, w_ih, w_hh, bias):
    """Unrolled LSTM over ``x`` (B, T, D) from zero state; returns all hidden
    states (B, T, H). Gate order along the 4H axis: input, forget, cell, output.
    """
    x, w_ih, w_hh, bias = (as_tensor(t) for t in (x, w_ih, w_hh, bias))
    B, T, D = x.shape
    H = w_hh.shape[1]
    if w_ih.shape != (4 * H, D) or w_hh.shape != (4 * H, H) or bias.shape != (4 * H,):
        raise ShapeError(
            f"lstm: input {x.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape}, bias {bias.shape} "
            f"are inconsistent"
        )
    xproj = x.data @ w_ih.data.T + bias.data  # (B, T, 4H)
    hs = np.zeros((B, T + 1, H))
    cs = np.zeros((B, T + 1, H))
    gates = np.empty((B, T, 4 * H))
    tanh_c = np.empty((B, T, H))
    whT = w_hh.data.T
    for t in range(T):
        z = xproj[:, t] + hs[:, t] @ whT
        a = np.empty_like(z)
        a[:, :2 * H] = _sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
        i, f, gg, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        cs[:, t + 1] = f * cs[:, t] + i * gg
        tanh_c[:, t] = np.tanh(cs[:, t + 1])
        hs[:, t + 1] = o * tanh_c[:, t]
        gates[:, t] = a
    out = hs[:, 1:].copy()

    def backward(g):
        dz = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        w = w_hh.data
        for t in range(T - 1, -1, -1):
            a = gates[:, t]
            i, f, gg, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            dh = g[:, t] + dh_next
            tc = tanh_c[:, t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            d = dz[:, t]
            d[:, :H] = dc * gg * i * (1.0 - i)
            d[:, H:2 * H] = dc * cs[:, t] * f * (1.0 - f)
            d[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
            d[:, 3 * H:] = dh * tc * o * (1.0 - o)
            dh_next = d @ w
            dc_next = dc * f
        dz2 = dz.reshape(-1, 4 * H)
        if x.requires_grad:
            x._accumulate(dz @ w_ih.data)
        if w_ih.requires_grad:
            w_ih._accumulate(dz2.T @ x.data.reshape(-1, D))
        if w_hh.requires_grad:
            w_hh._accumulate(dz2.T @ hs[:, :-1].reshape(-1, H))
        if bias.requires_grad:
            bias._accumulate(dz2.sum(axis=0))

    return Tensor._make(out, (x, w_ih, w_hh, bias), backward, "lstm")


def gru(x, w_ih, w_hh, b_ih, b_hh):
    """Unrolled GRU over ``x`` (B, T, D) from zero state; returns (B, T, H).

    Gate order along the 3H axis: reset, update, candidate::

        r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
        z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
        n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
        h' = (1 - z) * n + z * h
    """
    x, w_ih, w_hh, b_ih, b_hh = (as_tensor(t) for t in (x, w_ih, w_hh, b_ih, b_hh))
    B, T, D = x.shape
    H = w_hh.shape[1]
    if (w_ih.shape != (3 * H, D) or w_hh.shape != (3 * H, H)
            or b_ih.shape != (3 * H,) or b_hh.shape != (3 * H,)):
        raise ShapeError(
            f"gru: input {x.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape}, "
            f"b_ih {b_ih.shape}, b_hh {b_hh.shape} are inconsistent"
        )
    xproj = x.data @ w_ih.data.T + b_ih.data  # (B, T, 3H)
    hs = np.zeros((B, T + 1, H))
    rz = np.empty((B, T, 2 * H))
    ns = np.empty((B, T, H))
    hn = np.empty((B, T, H))  # W_hn h + b_hn, needed for dr
    whT = w_hh.data.T
    for t in range(T):
        hp = hs[:, t] @ whT + b_hh.data
        xp = xproj[:, t]
        a = _sigmoid(xp[:, :2 * H] + hp[:, :2 * H])
        r, z = a[:, :H], a[:, H:]
        n = np.tanh(xp[:, 2 * H:] + r * hp[:, 2 * H:])
        hs[:, t + 1] = (1.0 - z) * n + z * hs[:, t]
        rz[:, t] = a
        ns[:, t] = n
        hn[:, t] = hp[:, 2 * H:]
    out = hs[:, 1:].copy()

    def backward(g):
        dx_pre = np.empty((B, T, 3 * H))  # grads wrt x-side pre-activations
        dh_pre = np.empty((B, T, 3 * H))  # grads wrt h-side pre-activations
        dh_next = np.zeros((B, H))
        w = w_hh.data
        for t in range(T - 1, -1, -1):
            r, z = rz[:, t, :H], rz[:, t, H:]
            n = ns[:, t]
            hprev = hs[:, t]
            dh = g[:, t] + dh_next
            dn = dh * (1.0 - z) * (1.0 - n * n)
            dzp = dh * (hprev - n) * z * (1.0 - z)
            drp = dn * hn[:, t] * r * (1.0 - r)
            xd = dx_pre[:, t]
            xd[:, :H] = drp
            xd[:, H:2 * H] = dzp
            xd[:, 2 * H:] = dn
            hd = dh_pre[:, t]
            hd[:, :H] = drp
            hd[:, H:2 * H] = dzp
            hd[:, 2 * H:] = dn * r
            dh_next = dh * z + hd @ w
        dxp2 = dx_pre.reshape(-1, 3 * H)
        dhp2 = dh_pre.reshape(-1, 3 * H)
        if x.requires_grad:
            x._accumulate(dx_pre @ w_ih.data)
        if w_ih.requires_grad:
            w_ih._accumulate(dxp2.T @ x.data.reshape(-1, D))
        if b_ih.requires_grad:
            b_ih._accumulate(dxp2.sum(axis=0))
        if w_hh.requires_grad:
            w_hh._accumulate(dhp2.T @ hs[:, :-1].reshape(-1, H))
        if b_hh.requires_grad:
            b_hh._accumulate(dhp2.sum(axis=0))

    return Tensor._make(out, (x, w_ih, w_hh, b_ih, b_hh), backward, "gru")
