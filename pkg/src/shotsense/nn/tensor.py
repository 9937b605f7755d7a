"""Minimal reverse-mode autodiff over numpy arrays.

Only the operations needed by the shot models are implemented, each with a
hand-derived vectorized backward pass. Graphs are built eagerly; calling
``backward()`` on a scalar propagates gradients to every tensor reached
through ``requires_grad`` parents. Float32 is the working precision for
training; float64 inputs keep float64 throughout (used by gradient checks).
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, gradient: Optional[np.ndarray] = None) -> None:
        if gradient is None and self.data.size != 1:
            raise ValueError("backward() on a non-scalar tensor needs a seed gradient")
        if gradient is not None and np.shape(gradient) != self.data.shape:
            raise ValueError(
                f"seed gradient shape {np.shape(gradient)} does not match {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        if gradient is None:
            self.grad = np.ones_like(self.data)
        else:
            self.grad = np.asarray(gradient, dtype=self.data.dtype).copy()
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(as_tensor(other, self.dtype), self)


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise / linear algebra
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x (B, N) @ w.T (N, M) + b -> (B, M)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"linear shape mismatch: x {x.shape}, w {w.shape}")
    if b.shape != (w.shape[0],):
        raise ValueError(f"linear bias shape {b.shape} does not match {w.shape[0]} outputs")

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g @ w.data)
        if w.requires_grad:
            w.accumulate_grad(g.T @ x.data)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    return _make(x.data @ w.data.T + b.data, (x, w, b), backward)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, k: int, dilation: int) -> np.ndarray:
    """x (B, C, L) -> columns (B, C*K, L) for same-length correlation."""
    batch, c_in, length = x.shape
    pad = (k - 1) * dilation // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    if k == 1:
        return xp
    # Explicit slice copies into a preallocated buffer; a fancy-index gather
    # here leaves numpy free to pick a stride order that forces the reshape
    # below into an expensive copy.
    cols = np.empty((batch, c_in, k, length), dtype=x.dtype)
    for j in range(k):
        cols[:, :, j, :] = xp[:, :, j * dilation:j * dilation + length]
    return cols.reshape(batch, c_in * k, length)


def _conv1d_raw(x: np.ndarray, w: np.ndarray, dilation: int):
    """Same-length dilated cross-correlation; x (B, C, L), w (O, C, K).

    Uses batched GEMM in the native (B, C, L) layout to avoid transpose
    copies of the column matrix.
    """
    c_out, c_in, k = w.shape
    cols = _im2col(x, k, dilation)
    out = np.matmul(w.reshape(c_out, c_in * k), cols)  # (B, O, L)
    return out, cols


def conv1d(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Dilated same-padding 1-d cross-correlation.

    x: (B, C_in, L), w: (C_out, C_in, K) with K odd, b: (C_out,).
    Output: (B, C_out, L).
    """
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ValueError(f"conv1d expects 3-d x and w, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"conv1d channel mismatch: x {x.shape}, w {w.shape}")
    if w.shape[2] % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {w.shape[2]}")
    if b.shape != (w.shape[0],):
        raise ValueError(f"bias shape {b.shape} does not match {w.shape[0]} channels")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")

    out, cols = _conv1d_raw(x.data, w.data, dilation)
    out += b.data[None, :, None]
    c_out, c_in, k = w.shape

    def backward(g):
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=(0, 2)))
        if w.requires_grad:
            # Batched (O, L) @ (L, C*K), accumulated over the batch.
            dw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)
            w.accumulate_grad(dw.reshape(c_out, c_in, k))
        if x.requires_grad:
            # Grad w.r.t. input = correlation of g with the kernel flipped
            # along K and transposed in channels, same dilation/padding.
            w_t = np.ascontiguousarray(w.data.transpose(1, 0, 2)[:, :, ::-1])
            dx, _ = _conv1d_raw(g, w_t, dilation)
            x.accumulate_grad(dx)

    return _make(out, (x, w, b), backward)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        x.accumulate_grad(g * mask)

    return _make(x.data * mask, (x,), backward)


def _sigmoid_from_exp(z: np.ndarray, e_neg_abs: np.ndarray) -> np.ndarray:
    # sigmoid(z) given e = exp(-|z|): 1/(1+e) for z >= 0, e/(1+e) otherwise.
    denom = 1.0 + e_neg_abs
    return np.where(z >= 0, 1.0 / denom, e_neg_abs / denom)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return _sigmoid_from_exp(z, np.exp(-np.abs(z)))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def backward(g):
        x.accumulate_grad(g * s * (1.0 - s))

    return _make(s, (x,), backward)


def mish(x: Tensor) -> Tensor:
    """x * tanh(softplus(x)) with overflow-safe softplus."""
    e = np.exp(-np.abs(x.data))
    sp = np.log1p(e) + np.maximum(x.data, 0)  # softplus without overflow
    tsp = np.tanh(sp)
    out = x.data * tsp

    def backward(g):
        sig = _sigmoid_from_exp(x.data, e)
        x.accumulate_grad(g * (tsp + x.data * (1.0 - tsp * tsp) * sig))

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# Pooling / normalization
# ---------------------------------------------------------------------------


def gap(x: Tensor) -> Tensor:
    """Global average pooling over the temporal axis: (B, C, L) -> (B, C)."""
    if x.data.ndim != 3:
        raise ValueError(f"gap expects (B, C, L), got {x.shape}")
    length = x.shape[2]

    def backward(g):
        x.accumulate_grad(np.repeat(g[:, :, None], length, axis=2) / length)

    return _make(x.data.mean(axis=2), (x,), backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5, update_running: bool = True) -> Tensor:
    """Per-channel batch normalization over (batch, length) for (B, C, L).

    Train mode normalizes with batch statistics and (optionally) updates the
    running statistics in place (unbiased variance, as is conventional).
    Eval mode normalizes with the running statistics.
    """
    if x.data.ndim != 3:
        raise ValueError(f"batch_norm expects (B, C, L), got {x.shape}")
    batch, channels, length = x.shape
    n = batch * length
    if training:
        if n < 2:
            raise ValueError("train-mode batch norm needs more than one value per channel")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        if update_running:
            unbiased = var * (n / (n - 1))
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None]) * inv_std[None, :, None]
    out = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def backward(g):
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=(0, 2)))
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=(0, 2)))
        if x.requires_grad:
            gxh = g * gamma.data[None, :, None]
            if training:
                s1 = gxh.sum(axis=(0, 2))
                s2 = (gxh * xhat).sum(axis=(0, 2))
                dx = (gxh - (s1[None, :, None] + xhat * s2[None, :, None]) / n) \
                    * inv_std[None, :, None]
            else:
                dx = gxh * inv_std[None, :, None]
            x.accumulate_grad(dx)

    return _make(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# Softmax / losses
# ---------------------------------------------------------------------------


def _log_softmax(z: np.ndarray, axis: int) -> np.ndarray:
    zmax = z.max(axis=axis, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax_np(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    s = softmax_np(x.data, axis=axis)

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        x.accumulate_grad(s * (g - dot))

    return _make(s, (x,), backward)


def weighted_cross_entropy(logits: Tensor, targets: np.ndarray,
                           class_weights: Optional[np.ndarray] = None) -> Tensor:
    """Mean over rows of -w[y] * log softmax(logits)[y].

    logits: (N, C); targets: (N,) integer class indices.
    """
    if logits.data.ndim != 2:
        raise ValueError(f"weighted_cross_entropy expects (N, C) logits, got {logits.shape}")
    n, c = logits.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise ValueError(f"targets shape {targets.shape} does not match {n} rows")
    if targets.min() < 0 or targets.max() >= c:
        raise ValueError(f"target index out of range for {c} classes")
    if class_weights is None:
        class_weights = np.ones(c)
    class_weights = np.asarray(class_weights, dtype=logits.dtype)
    if class_weights.shape != (c,) or np.any(class_weights <= 0):
        raise ValueError("class_weights must be positive with one entry per class")

    logp = _log_softmax(logits.data, axis=1)
    row_w = class_weights[targets]
    loss = -(row_w * logp[np.arange(n), targets]).mean()

    def backward(g):
        p = np.exp(logp)
        d = p * row_w[:, None]
        d[np.arange(n), targets] -= row_w
        logits.accumulate_grad((g * d / n).astype(logits.dtype))

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), backward)
