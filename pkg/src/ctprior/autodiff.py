"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations the convolutional generator needs are provided.  Image
tensors are 4-D ``(batch, channels, height, width)``; the batch axis carries
the latent codes of a multi-code generator.

Every op records a closure that maps the output gradient to input gradients.
:meth:`Tensor.backward` runs the closures in reverse topological order and
accumulates into ``.grad``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "conv2d",
    "upsample_nearest",
    "leaky_relu",
    "sigmoid",
    "add",
    "scale",
    "channel_mul",
    "instance_norm",
    "sum_batch",
    "dot",
]


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, name: str = ""):
        self.value = np.asarray(value, dtype=float)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{', ' + self.name if self.name else ''})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(output)/d(leaf) weighted by ``grad`` into every leaf.

        ``grad`` defaults to 1 for a scalar output.
        """
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() on a non-scalar tensor needs an explicit grad")
            grad = np.ones_like(self.value)
        grad = np.asarray(grad, dtype=float)
        if grad.shape != self.shape:
            raise ValueError(f"grad shape {grad.shape} != tensor shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite output in {op}")
    out = Tensor(value, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Rows are (b, i, j) positions, columns (di, dj, c) taps of a 'same' window.

    Built channels-last from k*k slice copies; a strided-view transpose is
    several times slower at these sizes.
    """
    b, c, h, w = x.shape
    p = k // 2
    xp = np.zeros((b, h + 2 * p, w + 2 * p, c))
    xp[:, p:p + h, p:p + w, :] = x.transpose(0, 2, 3, 1)
    cols = np.empty((b, h, w, k, k, c))
    for di in range(k):
        for dj in range(k):
            cols[:, :, :, di, dj, :] = xp[:, di:di + h, dj:dj + w, :]
    return cols.reshape(b * h * w, k * k * c)


def _col2im(cols: np.ndarray, shape, k: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add the taps back to (B, C, H, W)."""
    b, c, h, w = shape
    p = k // 2
    cols = cols.reshape(b, h, w, k, k, c)
    xp = np.zeros((b, h + 2 * p, w + 2 * p, c))
    for di in range(k):
        for dj in range(k):
            xp[:, di:di + h, dj:dj + w, :] += cols[:, :, :, di, dj, :]
    return xp[:, p:p + h, p:p + w, :].transpose(0, 3, 1, 2)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution (cross-correlation) with an odd square kernel.

    ``x``: (B, Cin, H, W); ``weight``: (Cout, Cin, k, k); ``bias``: (Cout,).
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    xv, wv = x.value, weight.value
    if xv.ndim != 4 or wv.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    b, cin, h, w = xv.shape
    cout, wcin, k, k2 = wv.shape
    if wcin != cin or k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d shape mismatch: input {xv.shape}, weight {wv.shape}")
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (cout,):
            raise ValueError(f"bias shape {bias.shape} != ({cout},)")
    cols = _im2col(xv, k)
    wmat = wv.transpose(0, 2, 3, 1).reshape(cout, k * k * cin)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.value
    value = out.reshape(b, h, w, cout).transpose(0, 3, 1, 2)

    def backward(g):
        go = g.transpose(0, 2, 3, 1).reshape(b * h * w, cout)
        gw = None
        if weight.requires_grad:
            gw = (go.T @ cols).reshape(cout, k, k, cin).transpose(0, 3, 1, 2)
        gx = _col2im(go @ wmat, xv.shape, k) if x.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, go.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(np.ascontiguousarray(value), parents, backward, "conv2d")


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    x = _as_tensor(x)
    if factor == 1:
        return x
    value = x.value.repeat(factor, axis=-2).repeat(factor, axis=-1)

    def backward(g):
        *lead, h, w = g.shape
        return (g.reshape(*lead, h // factor, factor, w // factor, factor).sum(axis=(-3, -1)),)

    return _result(value, (x,), backward, "upsample_nearest")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = _as_tensor(x)
    pos = x.value > 0
    value = np.where(pos, x.value, slope * x.value)
    return _result(value, (x,), lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    # split by sign to avoid overflow in exp
    v = x.value
    e = np.exp(-np.abs(v))
    value = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _result(value, (x,), lambda g: (g * value * (1.0 - value),), "sigmoid")


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise every (sample, channel) plane to zero mean and unit variance.

    This is batch normalisation in training mode for a batch of one; it is
    applied per sample so the codes of a multi-code batch stay independent.
    """
    x = _as_tensor(x)
    v = x.value
    mu = v.mean(axis=(-2, -1), keepdims=True)
    d = v - mu
    inv = 1.0 / np.sqrt((d * d).mean(axis=(-2, -1), keepdims=True) + eps)
    y = d * inv

    def backward(g):
        gm = g.mean(axis=(-2, -1), keepdims=True)
        gy = (g * y).mean(axis=(-2, -1), keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _result(y, (x,), backward, "instance_norm")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return _result(a.value + b.value, (a, b), lambda g: (g, g), "add")


def scale(x: Tensor, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    return _result(c * x.value, (x,), lambda g: (c * g,), "scale")


def channel_mul(x: Tensor, alpha: Tensor) -> Tensor:
    """``out[n, c, i, j] = x[n, c, i, j] * alpha[n, c]``."""
    x, alpha = _as_tensor(x), _as_tensor(alpha)
    if alpha.shape != x.shape[:2]:
        raise ValueError(f"channel_mul: alpha shape {alpha.shape} != {x.shape[:2]}")
    a4 = alpha.value[:, :, None, None]

    def backward(g):
        return g * a4, np.einsum("ncij,ncij->nc", g, x.value)

    return _result(x.value * a4, (x, alpha), backward, "channel_mul")


def sum_batch(x: Tensor) -> Tensor:
    """Sum over the leading axis, keeping it with length one."""
    x = _as_tensor(x)
    n = x.shape[0]
    return _result(
        x.value.sum(axis=0, keepdims=True),
        (x,),
        lambda g: (np.broadcast_to(g, (n,) + g.shape[1:]).copy(),),
        "sum_batch",
    )


def dot(x: Tensor, w: np.ndarray) -> Tensor:
    """Scalar ``<x, w>`` for a constant ``w``; handy for gradient checks."""
    x = _as_tensor(x)
    w = np.asarray(w, dtype=float)
    if w.shape != x.shape:
        raise ValueError("dot shape mismatch")
    return _result(np.array(np.vdot(x.value, w)), (x,), lambda g: (g * w,), "dot")
