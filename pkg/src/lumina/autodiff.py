"""
Dense tensors with reverse-mode automatic differentiation.

The graph is rebuilt on every forward pass: each operation whose inputs
require gradients attaches a :class:`Node` to its output, and
:func:`backward` orders the reachable nodes into a :class:`GradTape` and
walks it once in reverse.

Image tensors use the N x C x H x W layout throughout.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, DomainError, GeometryError

Scalar = Union[int, float]


class Node:
    """One recorded operation: its inputs and the rule mapping the output
    gradient to one gradient per input (``None`` where no gradient flows)."""

    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op: str, inputs: Sequence["Tensor"], backward: Callable):
        self.op = op
        self.inputs = tuple(inputs)
        self.backward = backward

    def __repr__(self):
        return f"Node({self.op})"


class Tensor:
    """N-dimensional array with an optional gradient node.

    Parameters
    ----------
    data : array_like
      Values. Integer input is promoted to float64; float32 and float64
      are kept as given.
    requires_grad : bool
      Whether backward should accumulate a gradient into this tensor.
    """

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, node: Optional[Node] = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node = node

    # -- basic accessors -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _not_scalar(t):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    """Wrap ``x`` as a constant tensor, matching the dtype of ``like``."""
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, op: str, inputs: Sequence[Tensor], rule: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, node=Node(op, inputs, rule))


def _pair(a, b):
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"shapes {a.shape} and {b.shape} are not broadcastable") from None
    return a, b


def unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Graph traversal
# ---------------------------------------------------------------------------

class GradTape:
    """Recorded operations reachable from one output, in topological order.

    ``nodes`` holds the non-leaf tensors; every tensor appears after all of
    its inputs.
    """

    def __init__(self, nodes: list):
        self.nodes = nodes

    @classmethod
    def record(cls, root: Tensor) -> "GradTape":
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen or t.node is None:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for parent in t.node.inputs:
                if parent.node is not None and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def run(self, root: Tensor, seed: np.ndarray):
        grads = {id(root): seed}
        for t in reversed(self.nodes):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            for parent, pg in zip(t.node.inputs, t.node.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.node is None:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
                elif id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf
    with ``requires_grad``. Gradients add onto any existing ``grad``."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    GradTape.record(loss).run(loss, seed)


class _HeldStops:
    def __init__(self):
        self.values = []
        self.replaying = False
        self.cursor = 0

    def replay(self):
        self.replaying = True
        self.cursor = 0


_held: Optional[_HeldStops] = None


@contextmanager
def hold_stop_gradients():
    """Record every :func:`stop_gradient` output of the first forward pass;
    after ``hold.replay()`` later passes reuse those values in call order.

    Finite differences taken under replay treat stopped tensors as the
    constants that backpropagation assumes.
    """
    global _held
    prev, _held = _held, _HeldStops()
    try:
        yield _held
    finally:
        _held = prev


def stop_gradient(x: Tensor) -> Tensor:
    """Forward identity that is invisible to backpropagation."""
    if _held is not None:
        if _held.replaying:
            value = _held.values[_held.cursor]
            _held.cursor += 1
            return Tensor(value)
        _held.values.append(x.data.copy())
    return Tensor(x.data)


# ---------------------------------------------------------------------------
# Element-wise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(a.data + b.data, "add", (a, b),
                 lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(a.data - b.data, "sub", (a, b),
                 lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(a.data * b.data, "mul", (a, b),
                 lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def rule(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, "div", (a, b), rule)


def power(a, exponent) -> Tensor:
    """``a ** exponent`` for a scalar or tensor exponent."""
    if not isinstance(exponent, Tensor):
        a = as_tensor(a)
        p = float(exponent)
        out = a.data ** p
        return _make(out, "pow", (a,), lambda g: (g * p * a.data ** (p - 1.0),))
    a, b = _pair(a, exponent)
    out = a.data ** b.data

    def rule(g):
        ga = unbroadcast(g * b.data * a.data ** (b.data - 1.0), a.shape) if a.requires_grad else None
        gb = unbroadcast(g * out * np.log(a.data), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, "pow", (a, b), rule)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def tabs(a: Tensor) -> Tensor:
    return _make(np.abs(a.data), "abs", (a,), lambda g: (g * np.sign(a.data),))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def clamp(a: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    """Clip to ``[lo, hi]``; gradient passes only where the input is inside."""
    out = np.clip(a.data, lo, hi)
    mask = np.ones(a.shape, dtype=bool)
    if lo is not None:
        mask &= a.data >= lo
    if hi is not None:
        mask &= a.data <= hi
    return _make(out.astype(a.dtype, copy=False), "clamp", (a,), lambda g: (g * mask,))


def elementwise(a, b, op: str) -> Tensor:
    """Dispatch ``op`` in {add, mul, div, pow} with channel broadcasting."""
    table = {"add": add, "mul": mul, "div": div, "pow": power}
    if op not in table:
        raise ValueError(f"unknown element-wise op {op!r}")
    return table[op](a, b)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0).astype(a.dtype, copy=False), "relu", (a,),
                 lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.data)
    # keep outputs strictly inside (0, 1) even when the float saturates
    fi = np.finfo(a.dtype)
    s = np.clip(s, fi.tiny, 1.0 - fi.epsneg).astype(a.dtype, copy=False)
    return _make(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def activation(a: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# Reductions and reshaping
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), "sum", (a,), rule)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = math.prod(a.shape[i] for i in axes)
    return tsum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def rule(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out), "getitem", (a,), rule)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        for ax, (m, n) in enumerate(zip(ref, t.shape)):
            if ax != axis % len(ref) and m != n:
                raise DimensionError(f"concat: axis {ax} differs ({m} vs {n})")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def rule(g):
        return tuple(np.take(g, range(bounds[k], bounds[k + 1]), axis=axis)
                     for k in range(len(tensors)))

    return _make(out, "concat", tensors, rule)


def forward_diff(a: Tensor, axis: int) -> Tensor:
    """``a[j+1] - a[j]`` along ``axis``, with the last entry 0 (replicate
    boundary), so the output keeps the input shape."""
    axis = axis % a.ndim
    n = a.shape[axis]
    out = np.zeros_like(a.data)
    lead = [slice(None)] * a.ndim
    lo, hi = list(lead), list(lead)
    lo[axis], hi[axis] = slice(0, n - 1), slice(1, n)
    lo, hi = tuple(lo), tuple(hi)
    out[lo] = a.data[hi] - a.data[lo]

    def rule(g):
        gx = np.zeros_like(a.data)
        gx[hi] += g[lo]
        gx[lo] -= g[lo]
        return (gx,)

    return _make(out, "forward_diff", (a,), rule)


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def _check_image(a: Tensor, name: str):
    if a.ndim != 4:
        raise DimensionError(f"{name}: expected N x C x H x W input, got shape {a.shape}")
    if a.shape[2] == 0 or a.shape[3] == 0:
        raise DimensionError(f"{name}: empty spatial extent {a.shape[2:]}")


def global_avg_pool(a: Tensor) -> Tensor:
    _check_image(a, "global_avg_pool")
    return mean(a, axis=(2, 3), keepdims=True)


def _bins(n: int, out: int):
    return [(math.floor(i * n / out), math.ceil((i + 1) * n / out)) for i in range(out)]


def adaptive_avg_pool(a: Tensor, out_h: int, out_w: int) -> Tensor:
    """Mean over contiguous bins; cell (i, j) covers rows
    ``floor(i*H/out_h) .. ceil((i+1)*H/out_h)`` and likewise for columns."""
    _check_image(a, "adaptive_avg_pool")
    H, W = a.shape[2:]
    if not (1 <= out_h <= H and 1 <= out_w <= W):
        raise DimensionError(f"adaptive_avg_pool: output {out_h}x{out_w} exceeds input {H}x{W}")
    rows, cols = _bins(H, out_h), _bins(W, out_w)
    out = np.empty(a.shape[:2] + (out_h, out_w), dtype=a.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[:, :, i, j] = a.data[:, :, r0:r1, c0:c1].mean(axis=(2, 3))

    def rule(g):
        gx = np.zeros_like(a.data)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                area = (r1 - r0) * (c1 - c0)
                gx[:, :, r0:r1, c0:c1] += (g[:, :, i, j] / area)[:, :, None, None]
        return (gx,)

    return _make(out, "adaptive_avg_pool", (a,), rule)


def channel_avg(a: Tensor) -> Tensor:
    _check_image(a, "channel_avg")
    return mean(a, axis=1, keepdims=True)


def channel_max(a: Tensor) -> Tensor:
    """Max over channels; ties send the gradient to the first maximal channel."""
    _check_image(a, "channel_max")
    idx = np.argmax(a.data, axis=1)[:, None]
    out = np.take_along_axis(a.data, idx, axis=1)

    def rule(g):
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, idx, g, axis=1)
        return (gx,)

    return _make(out, "channel_max", (a,), rule)


def pool(a: Tensor, kind: str, out_size=None) -> Tensor:
    if kind == "global_avg":
        return global_avg_pool(a)
    if kind == "adaptive_avg":
        out_h, out_w = out_size
        return adaptive_avg_pool(a, out_h, out_w)
    if kind == "channel_max":
        return channel_max(a)
    if kind == "channel_avg":
        return channel_avg(a)
    raise ValueError(f"unknown pool kind {kind!r}")


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def _im2col(xp: np.ndarray, k: int, stride: int, out_hw) -> np.ndarray:
    """(C*k*k, N*Ho*Wo) matrix of receptive fields of the padded input,
    filled one kernel offset at a time so every copy runs along rows."""
    N, C = xp.shape[:2]
    Ho, Wo = out_hw
    cols = np.empty((C, k, k, N, Ho, Wo), dtype=xp.dtype)
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xt[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride]
    return cols.reshape(C * k * k, N * Ho * Wo)


def _correlate(xp: np.ndarray, wmat: np.ndarray, k: int, stride: int, out_hw):
    cols = _im2col(xp, k, stride, out_hw)
    out = wmat @ cols  # C_out, N*Ho*Wo
    N, (Ho, Wo) = xp.shape[0], out_hw
    return out.reshape(-1, N, Ho, Wo).transpose(1, 0, 2, 3), cols


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    Parameters
    ----------
    x : Tensor
      Input, N x C_in x H x W.
    weight : Tensor
      Kernel, C_out x C_in x k x k with k odd.
    bias : Tensor, optional
      Shape (C_out,).
    stride, padding : int
      The output size ``(H + 2*padding - k) / stride + 1`` must be a
      positive integer.
    """
    if x.ndim != 4:
        raise DimensionError(f"conv2d: input must be N x C x H x W, got {x.shape}")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d: weight must be C_out x C_in x k x k, got {weight.shape}")
    N, C, H, W = x.shape
    Co, Ci, kh, kw = weight.shape
    if Ci != C:
        raise DimensionError(f"conv2d: channel axis mismatch, input C_in={C} but weight C_in={Ci}")
    if kh != kw:
        raise DimensionError(f"conv2d: kernel axes differ ({kh} x {kw})")
    if kh % 2 == 0:
        raise GeometryError(f"conv2d: kernel size {kh} is not odd")
    if bias is not None and bias.shape != (Co,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match C_out={Co}")
    if stride < 1 or padding < 0:
        raise GeometryError(f"conv2d: stride {stride} / padding {padding} invalid")
    k = kh
    sizes = []
    for axis, n in (("H", H), ("W", W)):
        span = n + 2 * padding - k
        if span < 0 or span % stride:
            raise GeometryError(
                f"conv2d: axis {axis}: ({n} + 2*{padding} - {k}) / {stride} + 1 is not a positive integer")
        sizes.append(span // stride + 1)
    Ho, Wo = sizes

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    wmat = weight.data.reshape(Co, -1)
    out, cols = _correlate(xp, wmat, k, stride, (Ho, Wo))
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def rule(g):
        gx = gw = gb = None
        if x.requires_grad:
            if stride == 1 and padding <= k - 1:
                # input gradient = correlation of the padded output gradient
                # with the spatially flipped, channel-transposed kernel
                q = k - 1 - padding
                gp = np.pad(g, ((0, 0), (0, 0), (q, q), (q, q))) if q else g
                wflip = weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(C, -1)
                gx, _ = _correlate(gp, wflip, k, 1, (H, W))
                gx = np.ascontiguousarray(gx)
            else:
                gmat = g.transpose(1, 0, 2, 3).reshape(Co, -1)
                dcols = (wmat.T @ gmat).reshape(C, k, k, N, Ho, Wo)
                gxp = np.zeros_like(xp)
                for i in range(k):
                    for j in range(k):
                        gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                            dcols[:, i, j].transpose(1, 0, 2, 3)
                gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        if weight.requires_grad:
            gmat = g.transpose(1, 0, 2, 3).reshape(Co, -1)
            gw = (gmat @ cols.T).reshape(weight.shape).astype(weight.dtype, copy=False)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return _make(out, "conv2d", inputs, rule)


# ---------------------------------------------------------------------------
# Finite-difference checking
# ---------------------------------------------------------------------------

def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / scale


def _eval_scalar(f, data: np.ndarray, where, hold=None) -> float:
    if hold is not None:
        hold.replay()
    try:
        with np.errstate(all="ignore"):
            value = float(f(Tensor(data)).data.sum())
    except DomainError as exc:
        raise DomainError(f"domain violation perturbing element {where}: {exc}") from exc
    if not math.isfinite(value):
        raise DomainError(f"non-finite value perturbing element {where}")
    return value


def numeric_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5,
                     indices=None, hold=None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``; only ``indices`` (flat
    positions) are filled when given, the rest stay zero."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for n in (range(x.size) if indices is None else indices):
        where = tuple(int(i) for i in np.unravel_index(n, x.shape))
        old = flat[n]
        flat[n] = old + h
        fp = _eval_scalar(f, x, where, hold)
        flat[n] = old - h
        fm = _eval_scalar(f, x, where, hold)
        flat[n] = old
        gflat[n] = (fp - fm) / (2 * h)
    return grad


def gradient_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max over elements of ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.

    Runs in double precision. Stop-gradient outputs are held at their
    values at ``x`` during the perturbed evaluations. Raises
    :class:`DomainError` naming the element when a perturbed evaluation
    fails or is non-finite.
    """
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with hold_stop_gradients() as hold:
        leaf = Tensor(x.copy(), requires_grad=True)
        out = f(leaf)
        if out.requires_grad:
            backward(out)
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x)
        numeric = numeric_gradient(f, x, h, hold=hold)
    return float(_rel_err(analytic, numeric).max()) if x.size else 0.0


def leaf_gradient_check(f: Callable[[], Tensor], leaves, h: float = 1e-5,
                        indices=None) -> dict:
    """Finite-difference check of ``f()`` against several named leaves.

    ``leaves`` maps names to tensors that ``f`` reads; their ``data`` is
    perturbed in place and restored. ``indices`` optionally maps a name to
    the flat positions to test (default: all). Returns, per name, the max
    relative error over the tested positions.
    """
    with hold_stop_gradients() as hold:
        for t in leaves.values():
            t.grad = None
        out = f()
        backward(out)
        errors = {}
        for name, t in leaves.items():
            analytic = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)
            flat = t.data.reshape(-1)
            if not np.shares_memory(flat, t.data):
                raise ContractError(f"leaf {name} is not contiguous")
            picks = range(t.size) if indices is None or name not in indices else indices[name]
            worst = 0.0
            for n in picks:
                old = flat[n]
                vals = []
                for step in (h, -h):
                    flat[n] = old + step
                    hold.replay()
                    value = float(f().data.sum())
                    if not math.isfinite(value):
                        flat[n] = old
                        raise DomainError(f"non-finite value perturbing {name}[{n}]")
                    vals.append(value)
                flat[n] = old
                numeric = (vals[0] - vals[1]) / (2 * h)
                worst = max(worst, float(_rel_err(np.array(analytic[n]), np.array(numeric))))
            errors[name] = worst
    return errors
