"""2-D convolution and transposed convolution (NCHW, square stride/padding)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from psgan.errors import ShapeError
from psgan.autodiff.tensor import Tensor, record


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def _scatter(rows: np.ndarray, weight_k: np.ndarray, out_hw, n: int, ho: int, wo: int,
             stride: int) -> np.ndarray:
    """Scatter-add ``rows @ weight_k[i, j]`` at every kernel offset (i, j).

    ``rows`` is (N*Ho*Wo, A), ``weight_k`` is (kh, kw, A, B); the result is
    NCHW of spatial size ``out_hw``. Accumulates in NHWC so each add is a
    contiguous block.
    """
    kh, kw, _, b = weight_k.shape
    weight_k = np.ascontiguousarray(weight_k)
    out = np.zeros((n, out_hw[0], out_hw[1], b), dtype=rows.dtype)
    for i in range(kh):
        for j in range(kw):
            part = (rows @ weight_k[i, j]).reshape(n, ho, wo, b)
            out[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += part
    return out.transpose(0, 3, 1, 2)


def _check(x, weight, bias, stride, padding, in_axis, op):
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"{op}: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[in_axis]:
        raise ShapeError(f"{op}: input shape {x.shape} incompatible with weight shape {weight.shape}")
    out_ch = weight.shape[1 - in_axis]
    if bias is not None and bias.shape != (out_ch,):
        raise ShapeError(f"{op}: bias shape {bias.shape} does not match weight shape {weight.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"{op}: need stride >= 1 and padding >= 0, got {stride}, {padding}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation with weight of shape (out, in, kh, kw)."""
    _check(x, weight, bias, stride, padding, 1, "conv2d")
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(f"conv2d: kernel {weight.shape} larger than padded input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    padded_shape = xp.shape

    def grad_fn(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = gm.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = _scatter(gm, weight.data.transpose(2, 3, 0, 1), padded_shape[2:], n, ho, wo, stride)
            if padding:
                gx = gx[:, :, padding:padding + h, padding:padding + w]
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", np.ascontiguousarray(out), inputs, grad_fn)


def conv2d_transpose(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Gradient-of-conv2d operator; weight has shape (in, out, kh, kw).

    Output spatial size is ``(in - 1) * stride - 2 * padding + kernel``.
    """
    _check(x, weight, bias, stride, padding, 0, "conv2d_transpose")
    n, c, h, w = x.shape
    _, o, kh, kw = weight.shape
    full_h, full_w = (h - 1) * stride + kh, (w - 1) * stride + kw
    out_h, out_w = full_h - 2 * padding, full_w - 2 * padding
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d_transpose: padding {padding} leaves no output for input {x.shape}")
    xm = x.data.transpose(0, 2, 3, 1).reshape(-1, c)
    wmat = weight.data.reshape(c, -1)
    full = _scatter(xm, weight.data.transpose(2, 3, 0, 1), (full_h, full_w), n, h, w, stride)
    out = full[:, :, padding:padding + out_h, padding:padding + out_w]
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def grad_fn(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else g
        gcols, _, _ = _im2col(gp, kh, kw, stride)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (gcols @ wmat.T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
        if weight.requires_grad:
            gw = (xm.T @ gcols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d_transpose", np.ascontiguousarray(out), inputs, grad_fn)
