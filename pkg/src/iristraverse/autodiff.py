"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: every operation on a :class:`Tensor` that requires a gradient
records its parents and a backward rule. :func:`backward` walks the
:class:`ComputationRecord` built from the loss in reverse topological order
and accumulates gradients into the leaves. After the pass the intermediate
nodes are released unless ``retain_graph=True``.

Broadcasting is limited to scalar-with-tensor: the operands of a binary
operation must have equal shapes, or one of them must hold a single element.

Conventions at kinks: ``abs`` and ``relu`` use derivative 0 at 0; ``sqrt``
uses derivative 0 at exactly 0; clamped coordinates in :func:`grid_sample`
and clipped values in :func:`clip` receive zero gradient.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class NonDeterministicError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    @classmethod
    def _node(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self._backward is None

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    def detach(self):
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out.op = "detach"
        return out

    def zero_grad(self):
        self.grad = None

    def backward(self, retain_graph=False):
        backward(self, retain_graph=retain_graph)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # arithmetic -------------------------------------------------------
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

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# computation record and backward pass


class ComputationRecord:
    """Nodes reachable from ``output`` in topological order (inputs first)."""

    def __init__(self, output):
        self.output = output
        self.nodes = self._toposort(output)

    @staticmethod
    def _toposort(root):
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        return order

    def __len__(self):
        return len(self.nodes)

    def release(self):
        for node in self.nodes:
            if node._backward is not None:
                node._backward = None
                node._parents = ()


def backward(loss, retain_graph=False):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every differentiable leaf."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    record = ComputationRecord(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(record.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if not retain_graph:
        record.release()


# ---------------------------------------------------------------------------
# elementwise binary operations


def _binary_operands(a, b, kind):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _unbroadcast(g, shape, size):
    if g.shape == shape:
        return g
    if size == 1:
        return np.full(shape, g.sum())
    return g.reshape(shape)


def _out_shape(a, b):
    if a.shape == b.shape:
        return a.shape
    if a.size == 1 and b.size == 1:
        return a.shape if a.ndim >= b.ndim else b.shape
    return a.shape if b.size == 1 else b.shape


def _vals(a, b):
    """Operands as arrays ready for numpy, single-element sides flattened to scalars."""
    shape = _out_shape(a, b)
    da = a.data if a.shape == shape else a.data.reshape(())
    db = b.data if b.shape == shape else b.data.reshape(())
    return da, db, shape


def add(a, b):
    a, b = _binary_operands(a, b, "add")
    da, db, shape = _vals(a, b)
    out = np.add(da, db).reshape(shape)

    def _back(g):
        return _unbroadcast(g, a.shape, a.size), _unbroadcast(g, b.shape, b.size)

    return Tensor._node(out, (a, b), _back, "add")


def sub(a, b):
    a, b = _binary_operands(a, b, "sub")
    da, db, shape = _vals(a, b)
    out = np.subtract(da, db).reshape(shape)

    def _back(g):
        return _unbroadcast(g, a.shape, a.size), _unbroadcast(-g, b.shape, b.size)

    return Tensor._node(out, (a, b), _back, "sub")


def mul(a, b):
    a, b = _binary_operands(a, b, "mul")
    da, db, shape = _vals(a, b)
    out = np.multiply(da, db).reshape(shape)

    def _back(g):
        ga = _unbroadcast(g * db, a.shape, a.size) if a.requires_grad else None
        gb = _unbroadcast(g * da, b.shape, b.size) if b.requires_grad else None
        return ga, gb

    return Tensor._node(out, (a, b), _back, "mul")


def div(a, b):
    a, b = _binary_operands(a, b, "div")
    if np.any(b.data == 0.0):
        raise DomainError("div: division by exact zero")
    da, db, shape = _vals(a, b)
    out = np.divide(da, db).reshape(shape)

    def _back(g):
        ga = _unbroadcast(g / db, a.shape, a.size) if a.requires_grad else None
        gb = _unbroadcast(-g * out / db, b.shape, b.size) if b.requires_grad else None
        return ga, gb

    return Tensor._node(out, (a, b), _back, "div")


def power(a, b):
    a, b = _binary_operands(a, b, "pow")
    da, db, shape = _vals(a, b)
    with np.errstate(invalid="raise", divide="raise", over="raise"):
        try:
            out = np.power(da, db).reshape(shape)
        except FloatingPointError as exc:
            raise DomainError(f"pow: {exc}") from None

    def _back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g * db * np.power(da, db - 1.0), a.shape, a.size)
        if b.requires_grad:
            safe = np.where(da > 0, da, 1.0)
            gb = _unbroadcast(g * out * np.where(da > 0, np.log(safe), 0.0), b.shape, b.size)
        return ga, gb

    return Tensor._node(out, (a, b), _back, "pow")


def elementwise(kind, a, b):
    """Dispatch by name: ``add``, ``sub``, ``mul``, ``div`` or ``pow``."""
    ops = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": power}
    if kind not in ops:
        raise ValueError(f"unknown elementwise op {kind!r}")
    return ops[kind](a, b)


def atan2(y, x):
    y, x = _binary_operands(y, x, "atan2")
    dy, dx, shape = _vals(y, x)
    out = np.arctan2(dy, dx).reshape(shape)

    def _back(g):
        r2 = dx * dx + dy * dy
        r2 = np.where(r2 > 0, r2, 1.0)
        gy = _unbroadcast(g * dx / r2, y.shape, y.size) if y.requires_grad else None
        gx = _unbroadcast(-g * dy / r2, x.shape, x.size) if x.requires_grad else None
        return gy, gx

    return Tensor._node(out, (y, x), _back, "atan2")


# ---------------------------------------------------------------------------
# unary operations


def _unary(a, out, local_grad, op):
    def _back(g):
        return (g * local_grad(),)

    return Tensor._node(out, (a,), _back, op)


def neg(a):
    a = as_tensor(a)
    return Tensor._node(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _unary(a, out, lambda: out, "exp")


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log: input must be positive")
    out = np.log(a.data)
    return _unary(a, out, lambda: 1.0 / a.data, "log")


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: input must be non-negative")
    out = np.sqrt(a.data)

    def _local():
        safe = np.where(out > 0, out, 1.0)
        return np.where(out > 0, 0.5 / safe, 0.0)

    return _unary(a, out, _local, "sqrt")


def absolute(a):
    a = as_tensor(a)
    return _unary(a, np.abs(a.data), lambda: np.sign(a.data), "abs")


def sigmoid(a):
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)
    return _unary(a, out, lambda: out * (1.0 - out), "sigmoid")


def _stable_sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _unary(a, out, lambda: 1.0 - out * out, "tanh")


def relu(a):
    a = as_tensor(a)
    return _unary(a, np.maximum(a.data, 0.0), lambda: (a.data > 0).astype(np.float64), "relu")


def square(a):
    a = as_tensor(a)
    return _unary(a, a.data * a.data, lambda: 2.0 * a.data, "square")


def sin(a):
    a = as_tensor(a)
    return _unary(a, np.sin(a.data), lambda: np.cos(a.data), "sin")


def cos(a):
    a = as_tensor(a)
    return _unary(a, np.cos(a.data), lambda: -np.sin(a.data), "cos")


def softplus(a):
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _unary(a, out, lambda: _stable_sigmoid(a.data), "softplus")


_UNARY = {
    "neg": neg,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "abs": absolute,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "square": square,
    "sin": sin,
    "cos": cos,
    "softplus": softplus,
}


def unary(kind, a):
    if kind not in _UNARY:
        raise ValueError(f"unknown unary op {kind!r}")
    return _UNARY[kind](a)


def clip(a, lo, hi):
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)
    return _unary(a, out, lambda: inside, "clip")


# ---------------------------------------------------------------------------
# linear algebra, reductions, shape manipulation


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def _back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor._node(out, (a, b), _back, "matmul")


def _norm_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    normed = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for {ndim}-d tensor")
        normed.append(ax % ndim)
    return tuple(sorted(set(normed)))


def reduce_sum(x, axis=None):
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes)
    kept = tuple(1 if i in axes else n for i, n in enumerate(x.shape))

    def _back(g):
        return (np.broadcast_to(g.reshape(kept), x.shape).copy(),)

    return Tensor._node(np.asarray(out, dtype=np.float64), (x,), _back, "sum")


def reduce_mean(x, axis=None):
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(reduce_sum(x, axes), 1.0 / count)


def logsumexp(x, axis=None, temperature=1.0):
    """Smooth maximum ``temperature * log(sum(exp(x / temperature)))``."""
    x = as_tensor(x)
    if temperature <= 0:
        raise DomainError("logsumexp: temperature must be positive")
    axes = _norm_axes(axis, x.ndim)
    kept = tuple(1 if i in axes else n for i, n in enumerate(x.shape))
    scaled = x.data / temperature
    peak = np.max(scaled, axis=axes, keepdims=True)
    weights = np.exp(scaled - peak)
    total = np.sum(weights, axis=axes, keepdims=True)
    out = temperature * (np.log(total) + peak)
    soft = weights / total

    def _back(g):
        return (g.reshape(kept) * soft,)

    return Tensor._node(out.reshape([n for i, n in enumerate(x.shape) if i not in axes]), (x,), _back,
                        "logsumexp")


def reduce(kind, x, axes=None, temperature=1.0):
    if kind == "sum":
        return reduce_sum(x, axes)
    if kind == "mean":
        return reduce_mean(x, axes)
    if kind == "max-smooth":
        return logsumexp(x, axes, temperature)
    raise ValueError(f"unknown reduction {kind!r}")


def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return Tensor._node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None):
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = np.argsort(axes)
    return Tensor._node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), "transpose")


def getitem(x, index):
    x = as_tensor(x)
    out = np.array(x.data[index], dtype=np.float64)

    def _back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._node(out, (x,), _back, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._node(out, tuple(tensors), _back, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: shapes differ {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def _back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._node(out, tuple(tensors), _back, "stack")


def upsample2x(x):
    """Nearest-neighbour 2x upsampling of a C x H x W tensor."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"upsample2x expects C x H x W, got {x.shape}")
    out = x.data.repeat(2, axis=1).repeat(2, axis=2)
    C, H, W = x.shape

    def _back(g):
        return (g.reshape(C, H, 2, W, 2).sum(axis=(2, 4)),)

    return Tensor._node(out, (x,), _back, "upsample2x")


# ---------------------------------------------------------------------------
# padding and convolution


@lru_cache(maxsize=64)
def _pad_index(H, W, ph, pw, row_mode, col_mode):
    """Source flat index for every padded pixel; -1 marks zero padding."""
    rows = _axis_index(H, ph, row_mode)
    cols = _axis_index(W, pw, col_mode)
    idx = np.where((rows[:, None] >= 0) & (cols[None, :] >= 0), rows[:, None] * W + cols[None, :], -1)
    idx.setflags(write=False)
    return idx


def _axis_index(n, p, mode):
    positions = np.arange(-p, n + p)
    if mode == "zero":
        return np.where((positions >= 0) & (positions < n), positions, -1)
    if mode == "reflect":
        if p >= n:
            raise ShapeError(f"reflect padding {p} needs an axis longer than {p}, got {n}")
        period = 2 * (n - 1) if n > 1 else 1
        folded = np.mod(positions, period)
        return np.where(folded < n, folded, period - folded)
    if mode == "wrap":
        return np.mod(positions, n)
    raise ValueError(f"unknown padding mode {mode!r}")


def pad2d(x, pad, modes=("zero", "zero")):
    """Pad the last two axes of a C x H x W tensor by ``pad = (ph, pw)``.

    ``modes`` gives the row and column policy, each ``zero``, ``reflect`` or
    ``wrap``.
    """
    x = as_tensor(x)
    if isinstance(modes, str):
        modes = (modes, modes)
    ph, pw = pad
    C, H, W = x.shape
    if ph == 0 and pw == 0:
        return x
    idx = _pad_index(H, W, ph, pw, modes[0], modes[1])
    flat = x.data.reshape(C, H * W)
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    out = np.where(valid[None], flat[:, safe], 0.0)

    def _back(g):
        gx = np.empty((C, H * W))
        src = idx[valid]
        for c in range(C):
            gx[c] = np.bincount(src, weights=g[c][valid], minlength=H * W)
        return (gx.reshape(C, H, W),)

    return Tensor._node(out, (x,), _back, "pad2d")


def conv2d(x, k, stride=1, padding="zero", pad=None):
    """Cross-correlation of a C x H x W input with an F x C x kh x kw kernel stack.

    ``pad`` defaults to ``(kh // 2, kw // 2)`` ("same" size at stride 1).
    Output size per axis is ``(H + 2p - kh) // stride + 1``.
    """
    x = as_tensor(x)
    k = as_tensor(k)
    if x.ndim != 3 or k.ndim != 4:
        raise ShapeError(f"conv2d expects C x H x W input and F x C x kh x kw kernel, got {x.shape}, {k.shape}")
    F, C, kh, kw = k.shape
    if C != x.shape[0]:
        raise ShapeError(f"conv2d: kernel channels {C} do not match input channels {x.shape[0]}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel sides must be odd, got {kh}x{kw}")
    if stride < 1:
        raise ValueError("conv2d: stride must be >= 1")
    if pad is None:
        pad = (kh // 2, kw // 2)
    elif isinstance(pad, int):
        pad = (pad, pad)
    H, W = x.shape[1:]
    if kh > H + 2 * pad[0] or kw > W + 2 * pad[1]:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {H + 2 * pad[0]}x{W + 2 * pad[1]}")
    xp = pad2d(x, pad, padding) if pad != (0, 0) else x
    xpd = np.ascontiguousarray(xp.data)
    kd = np.ascontiguousarray(k.data)
    out = _kernels.conv2d_forward(xpd, kd, stride)
    Hp, Wp = xpd.shape[1:]

    def _back(g):
        g = np.ascontiguousarray(g)
        gx = _kernels.conv2d_grad_input(g, kd, stride, Hp, Wp) if xp.requires_grad else None
        gk = _kernels.conv2d_grad_kernel(g, xpd, kh, kw, stride) if k.requires_grad else None
        return gx, gk

    return Tensor._node(out, (xp, k), _back, "conv2d")


# ---------------------------------------------------------------------------
# resampling


def grid_sample(x, coords):
    """Bilinear sampling of an H x W image at ``coords[..., 0]`` = column, ``coords[..., 1]`` = row.

    Coordinates are continuous pixel units (pixel centres at integers) and are
    clamped to the image border; clamped coordinates carry zero gradient.
    """
    x = as_tensor(x)
    coords = as_tensor(coords)
    if x.ndim != 2 or coords.ndim != 3 or coords.shape[2] != 2:
        raise ShapeError(f"grid_sample expects H x W image and H' x W' x 2 coords, got {x.shape}, {coords.shape}")
    H, W = x.shape
    out_shape = coords.shape[:2]
    raw_x = coords.data[..., 0].reshape(-1)
    raw_y = coords.data[..., 1].reshape(-1)
    cx = np.clip(raw_x, 0.0, W - 1.0)
    cy = np.clip(raw_y, 0.0, H - 1.0)
    img = np.ascontiguousarray(x.data)
    out = _kernels.bilinear_forward(img, cx, cy).reshape(out_shape)

    def _back(g):
        gimg, gcx, gcy = _kernels.bilinear_backward(img, cx, cy, np.ascontiguousarray(g.reshape(-1)))
        gcoords = None
        if coords.requires_grad:
            gcx = np.where(cx == raw_x, gcx, 0.0)
            gcy = np.where(cy == raw_y, gcy, 0.0)
            gcoords = np.stack([gcx.reshape(out_shape), gcy.reshape(out_shape)], axis=-1)
        return (gimg if x.requires_grad else None), gcoords

    return Tensor._node(out, (x, coords), _back, "grid_sample")


# ---------------------------------------------------------------------------
# verification


def grad_check(f, x, eps=1e-5):
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``f`` maps a Tensor to a single-element Tensor. It is evaluated twice at
    ``x`` first; differing values raise :class:`NonDeterministicError`.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    first = f(Tensor(x0)).data
    second = f(Tensor(x0)).data
    if not np.array_equal(first, second):
        raise NonDeterministicError("function returned different values for identical inputs")
    leaf = Tensor(x0, requires_grad=True)
    out = f(leaf)
    if out.size != 1:
        raise ShapeError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    backward(out)
    analytic = np.zeros_like(x0) if leaf.grad is None else leaf.grad
    numeric = np.empty_like(x0)
    flat = x0.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(Tensor(x0)).item()
        flat[i] = orig - eps
        down = f(Tensor(x0)).item()
        flat[i] = orig
        num_flat[i] = (up - down) / (2.0 * eps)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
