"""Dense float64 tensors with a define-by-run reverse-mode tape.

The op set is exactly what the segmentation method needs: elementwise
arithmetic, exp/log/pow/clamp/relu, axis reductions, softmax, 3D
convolution, factor-2 resampling, group normalization, and reshape.
Tensors are immutable once created; a tape records one forward pass and
is consumed by a single backward() call.
"""

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, DomainError, NumericError, ShapeError

_ACTIVE = None  # the tape currently recording, if any


def _check_finite(data, op_name):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op_name}: non-finite values in result")


class Tensor:
    """Immutable n-d array of float64, optionally tracked on the active tape."""

    __slots__ = ("data", "requires_grad", "node_id", "_tape")

    def __init__(self, data, requires_grad=False):
        arr = np.array(data, dtype=np.float64, copy=True)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.node_id = None
        self._tape = None

    @classmethod
    def _wrap(cls, arr):
        # internal: adopt a freshly computed array without copying
        t = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = False
        t.node_id = None
        t._tape = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, tracked={self.node_id is not None})"

    # arithmetic -----------------------------------------------------------
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

    # elementwise ----------------------------------------------------------
    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def pow(self, c):
        return powc(self, c)

    def clamp(self, lo, hi):
        return clamp(self, lo, hi)

    def relu(self):
        return relu(self)

    # structure ------------------------------------------------------------
    def sum(self, axes=None, keepdims=False):
        return reduce_sum(self, axes, keepdims)

    def mean(self, axes=None, keepdims=False):
        return reduce_mean(self, axes, keepdims)

    def softmax(self, axis):
        return softmax(self, axis)

    def reshape(self, shape):
        return reshape(self, shape)


class Tape:
    """Ordered record of one forward pass; single-owner, single-use."""

    def __init__(self):
        self._parents = []  # per node: tuple of parent ids (or None slots)
        self._grad_fns = []  # per node: tuple of callables aligned with parents
        self._leaves = []  # (node_id, tensor) for requires_grad leaves
        self._consumed = False

    def __enter__(self):
        global _ACTIVE
        if self._consumed:
            raise ContractError("a tape cannot be reused after backward()")
        if _ACTIVE is not None:
            raise ContractError("another tape is already recording")
        _ACTIVE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE
        _ACTIVE = None
        return False

    def __len__(self):
        return len(self._parents)

    def _new_node(self, parent_ids, grad_fns):
        nid = len(self._parents)
        self._parents.append(parent_ids)
        self._grad_fns.append(grad_fns)
        return nid

    def _ensure_id(self, t):
        """Node id of t on this tape; registers requires_grad leaves lazily."""
        if t._tape is self and t.node_id is not None:
            return t.node_id
        if t.requires_grad:
            nid = self._new_node(None, None)
            t.node_id = nid
            t._tape = self
            self._leaves.append((nid, t))
            return nid
        return None

    def watch(self, t):
        """Register a leaf so backward reports a gradient for it even when
        no recorded op consumes it (e.g. parameters idle under a mask)."""
        if not isinstance(t, Tensor) or not t.requires_grad:
            raise ContractError("watch() takes a requires_grad Tensor")
        if self._consumed:
            raise ContractError("a tape cannot be reused after backward()")
        self._ensure_id(t)
        return t

    def _clear(self):
        for _, leaf in self._leaves:
            leaf.node_id = None
            leaf._tape = None
        self._parents = []
        self._grad_fns = []
        self._leaves = []
        self._consumed = True


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(out_data, op_name, parents, grad_fns):
    _check_finite(out_data, op_name)
    out = Tensor._wrap(out_data)
    tape = _ACTIVE
    if tape is None:
        return out
    pids = tuple(tape._ensure_id(p) for p in parents)
    if all(pid is None for pid in pids):
        return out
    out.node_id = tape._new_node(pids, tuple(grad_fns))
    out._tape = tape
    return out


def _tracked(*tensors):
    tape = _ACTIVE
    if tape is None:
        return False
    return any(
        t.requires_grad or (t._tape is tape and t.node_id is not None)
        for t in tensors
    )


def backward(tape, loss):
    """Reverse sweep over the tape; returns {leaf Tensor: gradient array}.

    Gradients accumulate additively; leaves never reached by the sweep get
    exact zeros. The tape is cleared afterwards and cannot be reused.
    """
    if tape._consumed:
        raise ContractError("a tape cannot be reused after backward()")
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ContractError("backward() needs a scalar loss tensor")
    n = len(tape._parents)
    grads = [None] * n
    if loss._tape is tape and loss.node_id is not None:
        grads[loss.node_id] = np.ones_like(loss.data)
        for nid in range(n - 1, -1, -1):
            g = grads[nid]
            parents = tape._parents[nid]
            if g is None or parents is None:
                continue
            fns = tape._grad_fns[nid]
            for pid, fn in zip(parents, fns):
                if pid is None:
                    continue
                contrib = fn(g)
                grads[pid] = contrib if grads[pid] is None else grads[pid] + contrib
            grads[nid] = None  # free intermediate gradients eagerly
    result = {}
    for nid, leaf in tape._leaves:
        g = grads[nid]
        result[leaf] = np.zeros_like(leaf.data) if g is None else g
    tape._clear()
    return result


# ---------------------------------------------------------------------------
# elementwise binary ops (equal shapes, scalars, or degenerate-axis broadcast)
# ---------------------------------------------------------------------------


def _broadcast_ok(sa, sb):
    if sa == sb or sa == () or sb == ():
        return True
    if len(sa) != len(sb):
        return False
    return all(x == y or x == 1 or y == 1 for x, y in zip(sa, sb))


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape == ():
        return np.array(g.sum())
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True)


def _binary(op_name, a, b, fwd, grad_a, grad_b):
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"{op_name}: shapes {a.shape} and {b.shape} incompatible")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = fwd(a.data, b.data)
    ga = lambda g: _unbroadcast(grad_a(g, a.data, b.data, out), a.shape)
    gb = lambda g: _unbroadcast(grad_b(g, a.data, b.data, out), b.shape)
    return _record(out, op_name, (a, b), (ga, gb))


def add(a, b):
    return _binary(
        "add", a, b, np.add, lambda g, x, y, o: g, lambda g, x, y, o: g
    )


def sub(a, b):
    return _binary(
        "sub", a, b, np.subtract, lambda g, x, y, o: g, lambda g, x, y, o: -g
    )


def mul(a, b):
    return _binary(
        "mul", a, b, np.multiply, lambda g, x, y, o: g * y, lambda g, x, y, o: g * x
    )


def div(a, b):
    # caller guarantees a nonzero denominator; the finiteness check rejects 1/0
    return _binary(
        "div",
        a,
        b,
        np.divide,
        lambda g, x, y, o: g / y,
        lambda g, x, y, o: -g * o / y,
    )


# ---------------------------------------------------------------------------
# elementwise unary ops
# ---------------------------------------------------------------------------


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record(out, "exp", (a,), (lambda g: g * out,))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: non-positive input (clamp upstream)")
    x = a.data
    return _record(np.log(x), "log", (a,), (lambda g: g / x,))


def powc(a, c):
    a = as_tensor(a)
    c = float(c)
    if c != round(c) and np.any(a.data < 0.0):
        raise DomainError(f"pow: negative input with non-integer exponent {c}")
    x = a.data
    out = x ** c
    return _record(out, "pow", (a,), (lambda g: g * c * x ** (c - 1.0),))


def clamp(a, lo, hi):
    a = as_tensor(a)
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ConfigError(f"clamp: need lo < hi, got [{lo}, {hi}]")
    x = a.data
    out = np.clip(x, lo, hi)
    # subgradient 0 at (and outside) the boundaries
    mask = (x > lo) & (x < hi)
    return _record(out, "clamp", (a,), (lambda g: g * mask,))


def relu(a):
    a = as_tensor(a)
    x = a.data
    mask = x > 0.0
    return _record(x * mask, "relu", (a,), (lambda g: g * mask,))


# ---------------------------------------------------------------------------
# reductions, softmax, reshape
# ---------------------------------------------------------------------------


def _norm_axes(axes, ndim, op_name):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(int(ax) for ax in axes)
    norm = tuple(ax + ndim if ax < 0 else ax for ax in axes)
    if len(set(norm)) != len(norm) or any(ax < 0 or ax >= ndim for ax in norm):
        raise ShapeError(f"{op_name}: invalid axes {axes} for {ndim}-d tensor")
    return norm


def _reduce(op_name, a, axes, keepdims, scale):
    a = as_tensor(a)
    axes = _norm_axes(axes, a.data.ndim, op_name)
    out = a.data.sum(axis=axes, keepdims=keepdims) * scale(axes, a.shape)
    in_shape = a.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(in_shape))
    factor = scale(axes, in_shape)

    def grad(g):
        if not keepdims:
            g = g.reshape(kept)
        return np.broadcast_to(g * factor, in_shape)

    return _record(out, op_name, (a,), (grad,))


def reduce_sum(a, axes=None, keepdims=False):
    return _reduce("sum", a, axes, keepdims, lambda ax, sh: 1.0)


def reduce_mean(a, axes=None, keepdims=False):
    def inv_n(ax, sh):
        n = 1
        for i in ax:
            n *= sh[i]
        return 1.0 / n

    return _reduce("mean", a, axes, keepdims, inv_n)


def softmax(a, axis):
    a = as_tensor(a)
    (axis,) = _norm_axes(axis, a.data.ndim, "softmax")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad(g):
        return y * (g - (g * y).sum(axis=axis, keepdims=True))

    return _record(y, "softmax", (a,), (grad,))


def reshape(a, shape):
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape: {a.shape} -> {shape} changes element count")
    in_shape = a.shape
    return _record(
        a.data.reshape(shape), "reshape", (a,), (lambda g: g.reshape(in_shape),)
    )


# ---------------------------------------------------------------------------
# spatial ops
# ---------------------------------------------------------------------------


def conv3d(x, w, stride=1, padding=None):
    """Cross-correlate x[C_in,D,H,W] with kernel w[C_out,C_in,k,k,k]."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 5:
        raise ShapeError(f"conv3d: need 4-d input and 5-d kernel, got {x.shape}, {w.shape}")
    k = w.shape[2]
    if w.shape[2:] != (k, k, k) or k % 2 == 0:
        raise ConfigError(f"conv3d: kernel must be cubic with odd extent, got {w.shape[2:]}")
    if padding is None:
        padding = (k - 1) // 2
    stride, padding = int(stride), int(padding)
    want_cols = _tracked(x, w)
    out, cols = kernels.conv3d_forward(x.data, w.data, stride, padding, want_cols)
    w_data, x_shape, w_shape = w.data, x.shape, w.shape
    gx = lambda g: kernels.conv3d_grad_x(g, w_data, x_shape, stride, padding)
    gw = lambda g: kernels.conv3d_grad_w(g, cols, w_shape)
    return _record(out, "conv3d", (x, w), (gx, gw))


def downsample2(x):
    """Stride-2 average pooling over the three spatial axes."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"downsample2: need [C,D,H,W], got {x.shape}")
    if any(s % 2 for s in x.shape[1:]):
        raise ShapeError(f"downsample2: odd spatial extent in {x.shape}")
    out = kernels.avgpool2_forward(x.data)
    return _record(out, "downsample2", (x,), (kernels.avgpool2_grad,))


def upsample_nn2(x):
    """Nearest-neighbour factor-2 upsampling over the three spatial axes."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nn2: need [C,D,H,W], got {x.shape}")
    out = kernels.upsample2_forward(x.data)
    return _record(out, "upsample_nn2", (x,), (kernels.upsample2_grad,))


def group_norm(x, gain, bias, groups, eps=1e-5):
    """Normalize per channel group to mean 0 / variance 1, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.data.ndim != 4:
        raise ShapeError(f"group_norm: need [C,D,H,W], got {x.shape}")
    c = x.shape[0]
    if c % groups:
        raise ConfigError(f"group_norm: {c} channels not divisible by {groups} groups")
    gv = gain.data.reshape(c, 1, 1, 1)
    bv = bias.data.reshape(c, 1, 1, 1)
    xg = x.data.reshape(groups, -1)
    mu = xg.mean(axis=1, keepdims=True)
    var = xg.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(x.shape)
    out = gv * xhat + bv

    def grad_x(g):
        ghat = (g * gv).reshape(groups, -1)
        xh = xhat.reshape(groups, -1)
        gx = inv * (
            ghat
            - ghat.mean(axis=1, keepdims=True)
            - xh * (ghat * xh).mean(axis=1, keepdims=True)
        )
        return gx.reshape(x.shape)

    def grad_gain(g):
        return (g * xhat).sum(axis=(1, 2, 3)).reshape(gain.shape)

    def grad_bias(g):
        return g.sum(axis=(1, 2, 3)).reshape(bias.shape)

    return _record(out, "group_norm", (x, gain, bias), (grad_x, grad_gain, grad_bias))
