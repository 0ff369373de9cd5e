"""Minimal reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray and records its parents plus a backward closure;
calling ``backward()`` on a scalar runs one reverse sweep in anti-topological
order. Only the primitives the U-Net needs are provided: conv2d, transposed
conv2d, leaky ReLU, dropout with a fixed mask, channel concat, elementwise
square, and the two fused loss heads live in losses.py.

Arrays keep whatever float dtype they come in with, so gradient checks can
run the whole graph in float64 while training uses float32.
"""

from __future__ import annotations

import numpy as np

from evgrid.errors import ConfigError


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def backward(self) -> None:
        """Reverse sweep from a scalar tensor; accumulates into .grad."""
        if self.data.size != 1:
            raise ConfigError("backward() starts from a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    t.grad += g


# ---------------------------------------------------------------------------
# convolution helpers (im2col / col2im)
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """(N,C,H,W) -> (N, Ho*Wo, C*kh*kw) patch matrix."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (N,C,Ho,Wo,kh,kw)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(dcols: np.ndarray, xshape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter patch gradients back onto the input."""
    n, c, h, w = xshape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += d6[:, :, :, :, i, j]
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 1) -> Tensor:
    """2-D convolution; w has shape (Cout, Cin, kh, kw), b shape (Cout,)."""
    cout, cin, kh, kw = w.shape
    if x.shape[1] != cin:
        raise ConfigError(f"conv2d channel mismatch: input {x.shape[1]}, kernel expects {cin}")
    cols, ho, wo = _im2col(x.data, kh, kw, stride, pad)
    wmat = w.data.reshape(cout, -1)
    out = cols @ wmat.T  # (N, Ho*Wo, Cout)
    out = out.transpose(0, 2, 1).reshape(x.shape[0], cout, ho, wo) + b.data[None, :, None, None]
    t = Tensor(out, parents=(x, w, b))

    def backward(g):
        gm = g.reshape(x.shape[0], cout, ho * wo).transpose(0, 2, 1)  # (N,L,Cout)
        _accumulate(w, np.einsum("nlo,nlk->ok", gm, cols).reshape(w.shape))
        _accumulate(b, g.sum(axis=(0, 2, 3)))
        dcols = gm @ wmat  # (N,L,C*kh*kw)
        _accumulate(x, _col2im(dcols, x.shape, kh, kw, stride, pad))

    t._backward = backward
    return t


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 2) -> Tensor:
    """Transposed convolution with kernel size = stride (no overlap).

    w has shape (Cin, Cout, k, k); output spatial size is input * stride.
    """
    cin, cout, kh, kw = w.shape
    if kh != stride or kw != stride:
        raise ConfigError("conv_transpose2d supports kernel size == stride only")
    if x.shape[1] != cin:
        raise ConfigError(f"conv_transpose2d channel mismatch: input {x.shape[1]}, kernel expects {cin}")
    n, _, h, wdt = x.shape
    out = np.zeros((n, cout, h * stride, wdt * stride), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i::stride, j::stride] = np.einsum("nchw,cd->ndhw", x.data, w.data[:, :, i, j])
    out += b.data[None, :, None, None]
    t = Tensor(out, parents=(x, w, b))

    def backward(g):
        dx = np.zeros_like(x.data)
        dw = np.zeros_like(w.data)
        for i in range(kh):
            for j in range(kw):
                gij = g[:, :, i::stride, j::stride]
                dx += np.einsum("ndhw,cd->nchw", gij, w.data[:, :, i, j])
                dw[:, :, i, j] = np.einsum("nchw,ndhw->cd", x.data, gij)
        _accumulate(x, dx)
        _accumulate(w, dw)
        _accumulate(b, g.sum(axis=(0, 2, 3)))

    t._backward = backward
    return t


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    pos = x.data > 0
    t = Tensor(np.where(pos, x.data, slope * x.data), parents=(x,))
    t._backward = lambda g: _accumulate(x, np.where(pos, g, slope * g))
    return t


def dropout(x: Tensor, mask: np.ndarray | None) -> Tensor:
    """Multiply by a precomputed (already inverse-scaled) mask; None = off."""
    if mask is None:
        return x
    t = Tensor(x.data * mask, parents=(x,))
    t._backward = lambda g: _accumulate(x, g * mask)
    return t


def make_dropout_mask(shape, rate: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray | None:
    if rate <= 0.0:
        return None
    keep = (rng.random(shape) >= rate).astype(dtype)
    return keep / np.asarray(1.0 - rate, dtype=dtype)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Channel-axis concatenation of two (N,C,H,W) tensors."""
    t = Tensor(np.concatenate([a.data, b.data], axis=1), parents=(a, b))
    ca = a.shape[1]

    def backward(g):
        _accumulate(a, g[:, :ca])
        _accumulate(b, g[:, ca:])

    t._backward = backward
    return t


def square(x: Tensor) -> Tensor:
    t = Tensor(np.square(x.data), parents=(x,))
    t._backward = lambda g: _accumulate(x, 2.0 * x.data * g)
    return t
