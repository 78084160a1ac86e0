"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Tape-based: every operation returns a `Tensor` that remembers its parents
and a closure computing parent gradients from its own. `backward` walks the
graph once in reverse topological order and accumulates gradients into every
node that requires them. Convolutions are direct (im2col + GEMM), which
keeps the arithmetic at the textbook O(N * k^2 * C_in * C_out) cost while
letting BLAS do the traversal cache-friendly.

Conventions fixed here for reproducibility:
  - ReLU's derivative at exactly 0 is 0.
  - sqrt's backward at exactly 0 is 0.
  - Batch norm uses biased (1/N) variance both for normalization and for
    the running statistics it maintains.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, StructuralError

_uid_counter = itertools.count()

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Tensor:
    """N-d value node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_uid")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._uid = next(_uid_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar; constants are lifted to the tensor's dtype.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


class Param(Tensor):
    """Trainable tensor with slots for the optimizer's moment estimates."""

    __slots__ = ("name", "m", "v")

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.m = None
        self.v = None


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape` along axes numpy broadcasting expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out_data = a.data + b.data

    def backward(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out_data = a.data - b.data

    def backward(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out_data = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return (ga, gb)

    return _node(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out_data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape) if b.requires_grad else None
        return (ga, gb)

    return _node(out_data, (a, b), backward)


def absolute(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.abs(a.data)
    sign = np.sign(a.data)  # 0 at exactly 0

    def backward(g):
        return (g * sign,)

    return _node(out_data, (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore"):
            inv = np.where(out_data > 0, 0.5 / np.where(out_data > 0, out_data, 1.0), 0.0)
        return (g * inv,)

    return _node(out_data, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out_data = np.where(mask, a.data, 0.0).astype(a.data.dtype)

    def backward(g):
        return (g * mask,)

    return _node(out_data, (a,), backward)


def _reduction_backward_shape(shape, axis):
    if axis is None:
        return (1,) * len(shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(1 if i in axes or (i - len(shape)) in axes else s for i, s in enumerate(shape))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    kshape = _reduction_backward_shape(a.data.shape, axis)

    def backward(g):
        return (np.broadcast_to(g.reshape(kshape), a.data.shape).astype(a.data.dtype, copy=False),)

    return _node(out_data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    kshape = _reduction_backward_shape(a.data.shape, axis)
    count = a.data.size // int(np.prod(out_data.shape, dtype=np.int64) or 1)

    def backward(g):
        scaled = (g / count).reshape(kshape)
        return (np.broadcast_to(scaled, a.data.shape).astype(a.data.dtype, copy=False),)

    return _node(out_data, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return _node(out_data, (a,), backward)


def slice_batch(a, start: int, stop: int) -> Tensor:
    """Contiguous slice along the leading (batch) axis."""
    a = as_tensor(a)
    if not 0 <= start < stop <= a.data.shape[0]:
        raise StructuralError(f"slice_batch: [{start}:{stop}] out of range for {a.data.shape}")
    out_data = a.data[start:stop]

    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _node(out_data, (a,), backward)


def concat_channels(a, b) -> Tensor:
    """Concatenate two (B, C, H, W) tensors along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise StructuralError(f"concat_channels: incompatible shapes {a.data.shape} vs {b.data.shape}")
    out_data = np.concatenate([a.data, b.data], axis=1)
    split = a.data.shape[1]

    def backward(g):
        return (g[:, :split], g[:, split:])

    return _node(out_data, (a, b), backward)


def global_avg_pool(a) -> Tensor:
    """Spatial mean per channel, keeping singleton spatial dims: (B,C,1,1)."""
    a = as_tensor(a)
    if a.data.ndim != 4:
        raise StructuralError(f"global_avg_pool: expected 4-d input, got {a.data.shape}")
    out_data = a.data.mean(axis=(2, 3), keepdims=True)
    count = a.data.shape[2] * a.data.shape[3]

    def backward(g):
        return (np.broadcast_to(g / count, a.data.shape).astype(a.data.dtype, copy=False),)

    return _node(out_data, (a,), backward)


def l2_norm_channels(a, eps: float = 0.0) -> Tensor:
    """Per-pixel L2 norm over the channel axis of a (B, C, H, W) tensor."""
    return sqrt(tsum(mul(a, a), axis=1, keepdims=True) + eps)


# ---------------------------------------------------------------------------
# convolution kernels (im2col + GEMM and its adjoint)


def _conv_out_size(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """Return (cols, (Ho, Wo)) where cols has shape (B, C*kh*kw, Ho*Wo)."""
    b, c, h, w = x.shape
    ho = _conv_out_size(h, kh, stride, padding)
    wo = _conv_out_size(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise StructuralError(f"convolution: input {h}x{w} too small for kernel {kh}x{kw}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    sb, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, kh, kw, ho, wo),
        strides=(sb, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    cols = np.ascontiguousarray(view).reshape(b, c * kh * kw, ho * wo)
    return cols, (ho, wo)


def _col2im(dcols: np.ndarray, x_shape, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add column gradients back to image layout."""
    b, c, h, w = x_shape
    ho = _conv_out_size(h, kh, stride, padding)
    wo = _conv_out_size(w, kw, stride, padding)
    d6 = dcols.reshape(b, c, kh, kw, ho, wo)
    hp, wp = h + 2 * padding, w + 2 * padding
    dxp = np.zeros((b, c, hp, wp), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d6[:, :, i, j]
    return dxp[:, :, padding : padding + h, padding : padding + w] if padding else dxp


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int):
    co, ci, kh, kw = w.shape
    cols, (ho, wo) = _im2col(x, kh, kw, stride, padding)
    out = np.matmul(w.reshape(co, ci * kh * kw), cols)  # (B, Co, Ho*Wo)
    return out.reshape(x.shape[0], co, ho, wo), cols


def _conv_grad_w(cols: np.ndarray, gout: np.ndarray, w_shape) -> np.ndarray:
    co = w_shape[0]
    k = cols.shape[1]
    g2 = np.ascontiguousarray(gout.transpose(1, 0, 2, 3)).reshape(co, -1)
    c2 = np.ascontiguousarray(cols.transpose(0, 2, 1)).reshape(-1, k)
    return (g2 @ c2).reshape(w_shape)


def _conv_grad_x(gout: np.ndarray, w: np.ndarray, x_shape, stride: int, padding: int) -> np.ndarray:
    co, ci, kh, kw = w.shape
    b = gout.shape[0]
    g2 = gout.reshape(b, co, -1)
    dcols = np.matmul(w.reshape(co, ci * kh * kw).T, g2)  # (B, C*kh*kw, P)
    return _col2im(dcols, x_shape, kh, kw, stride, padding)


def conv2d(x, w, b=None, stride: int = 1, padding: int = 1) -> Tensor:
    """Cross-correlation of (B,Ci,H,W) with weights (Co,Ci,kh,kw)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise StructuralError("conv2d: input and weight must be 4-d")
    if x.data.shape[1] != w.data.shape[1]:
        raise StructuralError(
            f"conv2d: channel mismatch, input has {x.data.shape[1]}, weight expects {w.data.shape[1]}"
        )
    out_data, cols = _conv_forward(x.data, w.data, stride, padding)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.data.shape != (w.data.shape[0],):
            raise StructuralError(f"conv2d: bias shape {b.data.shape} != ({w.data.shape[0]},)")
        out_data = out_data + b.data.reshape(1, -1, 1, 1)
        parents.append(b)

    x_shape, w_shape = x.data.shape, w.data.shape

    def backward(g):
        gx = _conv_grad_x(g, w.data, x_shape, stride, padding) if x.requires_grad else None
        gw = _conv_grad_w(cols, g, w_shape) if w.requires_grad else None
        if b is None:
            return (gx, gw)
        gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return (gx, gw, gb)

    return _node(out_data, tuple(parents), backward)


def conv_transpose2d(x, w, b=None, stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed convolution, the adjoint of `conv2d` with the same weights.

    Weights are in conv2d layout (Cx, Cout, kh, kw) where Cx is this op's
    input channel count: <conv2d(u, w), x> == <u, conv_transpose2d(x, w)>.
    Output spatial size is (n - 1) * stride - 2 * padding + k.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise StructuralError("conv_transpose2d: input and weight must be 4-d")
    if x.data.shape[1] != w.data.shape[0]:
        raise StructuralError(
            f"conv_transpose2d: channel mismatch, input has {x.data.shape[1]}, weight expects {w.data.shape[0]}"
        )
    bsz, cx, h, wdim = x.data.shape
    _, cout, kh, kw = w.data.shape
    out_h = (h - 1) * stride - 2 * padding + kh
    out_w = (wdim - 1) * stride - 2 * padding + kw
    if out_h < 1 or out_w < 1:
        raise StructuralError("conv_transpose2d: output would be empty")
    out_shape = (bsz, cout, out_h, out_w)

    out_data = _conv_grad_x(x.data, w.data, out_shape, stride, padding)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.data.shape != (cout,):
            raise StructuralError(f"conv_transpose2d: bias shape {b.data.shape} != ({cout},)")
        out_data = out_data + b.data.reshape(1, -1, 1, 1)
        parents.append(b)

    def backward(g):
        gx = None
        gw = None
        if x.requires_grad or w.requires_grad:
            cols, _ = _im2col(g, kh, kw, stride, padding)
            if x.requires_grad:
                gx = np.matmul(w.data.reshape(cx, -1), cols).reshape(x.data.shape)
            if w.requires_grad:
                gw = _conv_grad_w(cols, x.data, w.data.shape)
        if b is None:
            return (gx, gw)
        gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return (gx, gw, gb)

    return _node(out_data, tuple(parents), backward)


# ---------------------------------------------------------------------------
# batch normalization


@dataclass
class BatchNormState:
    """Running statistics a batch-norm layer maintains across steps."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def for_channels(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batch_norm(x, gamma, beta, state: BatchNormState, training: bool,
               eps: float = BN_EPS, momentum: float = BN_MOMENTUM) -> Tensor:
    """Per-channel normalization of a (B, C, H, W) tensor.

    Training mode normalizes by the current batch statistics and folds them
    into `state` with the given momentum; eval mode normalizes by `state`.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 4:
        raise StructuralError(f"batch_norm: expected 4-d input, got {x.data.shape}")
    b, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise StructuralError("batch_norm: gamma/beta must have one entry per channel")
    n = b * h * w
    if training:
        if n <= 1:
            raise DegenerateInputError("batch_norm: cannot estimate statistics from a single value")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        state.mean = ((1.0 - momentum) * state.mean + momentum * mu).astype(state.mean.dtype)
        state.var = ((1.0 - momentum) * state.var + momentum * var).astype(state.var.dtype)
    else:
        mu = state.mean.astype(x.data.dtype)
        var = state.var.astype(x.data.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out_data = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

    def backward(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(1, c, 1, 1)
            if training:
                # Batch statistics depend on x, so their gradients flow back too.
                sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
                sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = (inv_std.reshape(1, c, 1, 1) / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
            else:
                gx = dxhat * inv_std.reshape(1, c, 1, 1)
            gx = gx.astype(x.data.dtype, copy=False)
        return (gx, ggamma, gbeta)

    return _node(out_data, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# backward pass and gradient checking


def backward(loss: Tensor) -> None:
    """Populate gradients of every grad-requiring node reachable from `loss`.

    Repeated calls without zeroing accumulate, each contributing one unit of
    upstream gradient.
    """
    if loss.data.shape != ():
        raise StructuralError(f"backward: root must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad and loss._backward is None:
        # Constant graph: nothing to do beyond seeding the root itself.
        pass

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
    for node in reversed(topo):
        g = grads.get(id(node))
        if g is None:
            continue
        if node._backward is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
    for node in topo:
        if node.requires_grad and id(node) in grads:
            node.grad = grads[id(node)] if node.grad is None else node.grad + grads[id(node)]


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_input: int = -1
    worst_index: int = -1
    analytic: float = 0.0
    numeric: float = 0.0
    checked: int = 0

    def __str__(self):
        return (f"grad check: max rel err {self.max_rel_err:.3e} over {self.checked} entries "
                f"(input {self.worst_input}, flat index {self.worst_index}: "
                f"analytic {self.analytic:.6e} vs numeric {self.numeric:.6e})")


def grad_check(f, inputs: list[Tensor], h: float = 1e-4, rel_floor: float = 1e-3,
               max_entries_per_input: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients of scalar f(*inputs) to central differences.

    f must be value-deterministic across calls (batch-norm running-stat
    updates are fine; anything affecting the returned value is not). The
    relative error denominator is floored so near-zero gradient entries are
    judged by absolute error at the same tolerance scale.
    """
    for t in inputs:
        if not t.requires_grad:
            raise StructuralError("grad_check: every input must require grad")
        t.zero_grad()
    out = f(*inputs)
    if out.data.shape != ():
        raise StructuralError("grad_check: f must return a scalar")
    backward(out)

    report = GradCheckReport(max_rel_err=0.0)
    for input_idx, t in enumerate(inputs):
        analytic = np.zeros_like(t.data) if t.grad is None else np.asarray(t.grad)
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries_per_input is not None and flat.size > max_entries_per_input:
            picker = rng if rng is not None else np.random.default_rng(0)
            indices = np.sort(picker.choice(flat.size, size=max_entries_per_input, replace=False))
        for i in indices:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(*inputs).data)
            flat[i] = orig - h
            fm = float(f(*inputs).data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = float(aflat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), rel_floor)
            report.checked += 1
            if rel > report.max_rel_err:
                report.max_rel_err = rel
                report.worst_input = input_idx
                report.worst_index = int(i)
                report.analytic = a
                report.numeric = numeric
    return report
