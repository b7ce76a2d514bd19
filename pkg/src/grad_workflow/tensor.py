"""Dense tensors with a define-by-run reverse-mode tape.

Only the operations the workflow model needs are provided. Broadcasting in
binary ops is restricted to trailing-dimension expansion (the smaller operand's
shape must be a suffix of the larger one); anything else goes through
:func:`expand` explicitly.
"""

import threading
from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAKY_SLOPE = 0.2

_DTYPE = np.float32
_DEBUG = False
_local = threading.local()


class DimensionError(ValueError):
    pass


class NumericDomainError(ArithmeticError):
    pass


class TapeError(RuntimeError):
    pass


def get_dtype():
    return _DTYPE


def set_dtype(dtype):
    global _DTYPE
    _DTYPE = np.dtype(dtype).type


@contextmanager
def precision(dtype):
    """Temporarily switch the default float type (tests use float64)."""
    old = _DTYPE
    set_dtype(dtype)
    try:
        yield
    finally:
        set_dtype(old)


def set_debug(flag):
    """When on, every forward op asserts its output is finite."""
    global _DEBUG
    _DEBUG = bool(flag)


def _grad_enabled():
    return getattr(_local, "grad", True)


@contextmanager
def no_grad():
    old = _grad_enabled()
    _local.grad = False
    try:
        yield
    finally:
        _local.grad = old


class Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out, inputs, vjp):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of differentiable ops.

    Used as a context manager to isolate a sub-computation (the discriminator
    update runs on its own tape while the encoder graph stays alive).
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        _tapes().pop()
        return False

    def clear(self):
        for node in self.nodes:
            node.out._tape = None
        self.nodes = []

    def backward(self, loss):
        if loss._tape is not self:
            raise TapeError("loss was not recorded on this tape")
        pending = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = pending.pop(id(node.out), None)
            if g is None:
                continue
            node.out.grad = g
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp._tape is None:
                    inp.grad = gi.astype(inp.data.dtype, copy=True) if inp.grad is None else inp.grad + gi
                else:
                    key = id(inp)
                    pending[key] = gi if key not in pending else pending[key] + gi
        self.clear()


def _tapes():
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = [Tape()]
    return stack


def active_tape():
    return _tapes()[-1]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data)
        want = dtype or _DTYPE
        if arr.dtype != want:
            arr = arr.astype(want)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype.type)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype.type if like is not None else None
    return Tensor(x, dtype=dtype)


def _result(data, inputs, vjp):
    out = Tensor(data, dtype=data.dtype.type if data.dtype.kind == "f" else None)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise NumericDomainError("non-finite value produced by forward op")
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape = active_tape()
        tape.nodes.append(Node(out, inputs, vjp))
        out._tape = tape
    return out


def backward(loss):
    """Populate ``.grad`` on every requires_grad tensor reachable from ``loss``."""
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        raise TapeError("loss is not on an active tape (no input requires grad?)")
    loss._tape.backward(loss)


# ---------------------------------------------------------------- broadcasting

def _check_trailing(sa, sb):
    if sa == sb:
        return
    short, long_ = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if long_[len(long_) - len(short):] != short:
        raise DimensionError(f"shapes {sa} and {sb} are not trailing-broadcast compatible")


def _unbroadcast(g, shape):
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_trailing(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_trailing(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_trailing(a.shape, b.shape)
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(x, c):
    c = float(c)
    return _result(x.data * x.data.dtype.type(c), (x,), lambda g: (g * c,))


def relu(x):
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=LEAKY_SLOPE):
    d = x.data
    factor = np.where(d > 0, 1.0, slope).astype(d.dtype)
    return _result(d * factor, (x,), lambda g: (g * factor,))


def tanh(x):
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x):
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),))


def log(x):
    d = x.data
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NumericDomainError("log of non-positive or non-finite value")
    return _result(np.log(d), (x,), lambda g: (g / d,))


def exp(x):
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    if not np.all(np.isfinite(y)):
        raise NumericDomainError("exp overflow")
    return _result(y, (x,), lambda g: (g * y,))


def clip(x, lo, hi):
    d = x.data
    inside = (d >= lo) & (d <= hi)
    return _result(np.clip(d, lo, hi), (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _result(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x, w, b=None):
    """x [N, in] @ w [in, out] + b [out]."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


# ---------------------------------------------------------------- reductions and shape

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims=False):
    shape = x.shape
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.asarray(out), (x,), vjp)


def mean(x, axis=None, keepdims=False):
    axes = _norm_axis(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum_(x, axes, keepdims), 1.0 / n)


def reshape(x, shape):
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes=None):
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _result(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                   lambda g: (g.transpose(inv),))


def expand(x, shape):
    """Explicit broadcast of size-1 axes (same rank) to ``shape``."""
    shape = tuple(shape)
    if x.ndim != len(shape) or any(s != t and s != 1 for s, t in zip(x.shape, shape)):
        raise DimensionError(f"cannot expand {x.shape} to {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(x.shape, shape)) if s == 1 and t != 1)
    return _result(np.broadcast_to(x.data, shape).copy(), (x,),
                   lambda g: (g.sum(axis=axes, keepdims=True),))


def slice_(x, idx):
    shape = x.shape
    dtype = x.data.dtype

    def vjp(g):
        full = np.zeros(shape, dtype=dtype)
        full[idx] += g
        return (full,)

    return _result(np.array(x.data[idx]), (x,), vjp)


def concat(tensors, axis=0):
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of an empty list")
    if len(tensors) == 1:
        return tensors[0]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
                i != ax and a != b for i, (a, b) in enumerate(zip(t.shape, ref))):
            raise DimensionError(f"concat dimension mismatch: {ref} vs {t.shape} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return tuple(out)

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), vjp)


def stack(tensors, axis=0):
    tensors = list(tensors)
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        ax = axis % (len(shape) + 1)
        shape.insert(ax, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


# ---------------------------------------------------------------- softmax / dropout

def softmax(x, axis=-1):
    if x.shape[axis] < 1:
        raise DimensionError("softmax over an empty axis")
    d = x.data
    z = np.exp(d - d.max(axis=axis, keepdims=True))
    s = z / z.sum(axis=axis, keepdims=True)
    return _result(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def dropout(x, rate, rng, training):
    """Inverted dropout: survivors are scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.uniform(x.shape) >= rate).astype(x.data.dtype) / x.data.dtype.type(1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------- convolutions

def _same_pad(k):
    return (k - 1) // 2, k - 1 - (k - 1) // 2


def conv1d(x, w, b=None, padding="same"):
    """Cross-correlation of x [C_in, T] with w [C_out, C_in, k] -> [C_out, T']."""
    if x.ndim != 2 or w.ndim != 3 or w.shape[1] != x.shape[0]:
        raise DimensionError(f"conv1d shape mismatch: x {x.shape}, w {w.shape}")
    c_out, c_in, k = w.shape
    left, right = _same_pad(k) if padding == "same" else (int(padding), int(padding))
    T = x.shape[1]
    if T + left + right < k:
        raise DimensionError(f"kernel {k} larger than padded input {T + left + right}")
    xp = np.pad(x.data, ((0, 0), (left, right)))
    cols = sliding_window_view(xp, k, axis=1)  # C_in, T', k
    t_out = cols.shape[1]
    cols = np.ascontiguousarray(cols.transpose(1, 0, 2)).reshape(t_out, c_in * k)
    wm = w.data.reshape(c_out, c_in * k)
    out = (cols @ wm.T).T
    if b is not None:
        out = out + b.data[:, None]

    def vjp(g):
        dw = (g @ cols).reshape(w.shape)
        dcols = (g.T @ wm).reshape(t_out, c_in, k)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[:, j:j + t_out] += dcols[:, :, j].T
        dx = dxp[:, left:left + T]
        return (dx, dw) if b is None else (dx, dw, g.sum(axis=1))

    inputs = (x, w) if b is None else (x, w, b)
    return _result(np.ascontiguousarray(out), inputs, vjp)


def conv2d(x, w, b=None, padding="same"):
    """Cross-correlation of x [N, C, H, W] (or [C, H, W]) with w [O, C, kh, kw]."""
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4 or w.shape[1] != xd.shape[1]:
        raise DimensionError(f"conv2d shape mismatch: x {x.shape}, w {w.shape}")
    n, c, h, wd = xd.shape
    o, _, kh, kw = w.shape
    if padding == "same":
        (pt, pb), (pl, pr) = _same_pad(kh), _same_pad(kw)
    else:
        pt = pb = pl = pr = int(padding)
    if h + pt + pb < kh or wd + pl + pr < kw:
        raise DimensionError("kernel larger than padded input")
    xp = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N, C, H', W', kh, kw
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    wm = w.data.reshape(o, -1)
    out = cols @ wm.T
    if b is not None:
        out += b.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))
    if squeeze:
        out = out[0]
    need_dx = x.requires_grad

    def vjp(g):
        g4 = g[None] if squeeze else g
        gm = g4.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        dw = (gm.T @ cols).reshape(w.shape)
        dx = None
        if need_dx:
            dcols = (gm @ wm).reshape(n, ho, wo, c, kh, kw)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            dx = dxp[:, :, pt:pt + h, pl:pl + wd]
            if squeeze:
                dx = dx[0]
        return (dx, dw) if b is None else (dx, dw, gm.sum(axis=0))

    inputs = (x, w) if b is None else (x, w, b)
    return _result(out, inputs, vjp)


def max_pool1d(x, width=2):
    """Max-pool the last axis with ``width``; an odd tail is pooled on its own."""
    d = x.data
    T = d.shape[-1]
    tp = -(-T // width) * width
    if tp != T:
        pad = [(0, 0)] * (d.ndim - 1) + [(0, tp - T)]
        d = np.pad(d, pad, constant_values=-np.inf)
    blocks = d.reshape(d.shape[:-1] + (tp // width, width))
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        return (gb.reshape(d.shape)[..., :T],)

    return _result(np.ascontiguousarray(out), (x,), vjp)


def upsample1d(x, factor=2):
    """Nearest-neighbour upsampling of the last axis."""
    d = x.data
    out = np.repeat(d, factor, axis=-1)

    def vjp(g):
        return (g.reshape(d.shape + (factor,)).sum(axis=-1),)

    return _result(out, (x,), vjp)


def max_pool2d(x, size=2):
    """Non-overlapping max-pool over the last two axes (both divisible by ``size``)."""
    d = x.data
    h, w = d.shape[-2:]
    if h % size or w % size:
        raise DimensionError(f"max_pool2d needs spatial dims divisible by {size}, got {(h, w)}")
    lead = d.shape[:-2]
    blocks = d.reshape(lead + (h // size, size, w // size, size))
    blocks = np.moveaxis(blocks, -3, -2).reshape(lead + (h // size, w // size, size * size))
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(lead + (h // size, w // size, size, size))
        gb = np.moveaxis(gb, -2, -3).reshape(d.shape)
        return (gb,)

    return _result(np.ascontiguousarray(out), (x,), vjp)


# ---------------------------------------------------------------- recurrent

def _gate(z):
    # logistic via tanh: no overflow for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm(x, w_ih, w_hh, b):
    """Single-layer LSTM over x [T, D]; gates stacked (input, forget, cell, output).

    w_ih [D, 4H], w_hh [H, 4H], b [4H]. Returns hidden states [T, H], zero
    initial state. Backward is truncation-free BPTT over the whole sequence.
    """
    T, D = x.shape
    if w_ih.shape[0] != D or w_hh.shape[1] != w_ih.shape[1] or w_hh.shape[1] != 4 * w_hh.shape[0]:
        raise DimensionError(f"lstm shape mismatch: x {x.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape}")
    H = w_hh.shape[0]
    dt = x.data.dtype
    xw = x.data @ w_ih.data + b.data  # T, 4H
    Whh = w_hh.data
    hs = np.zeros((T + 1, H), dtype=dt)
    cs = np.zeros((T + 1, H), dtype=dt)
    gates = np.empty((T, 4 * H), dtype=dt)
    for t in range(T):
        z = xw[t] + hs[t] @ Whh
        i = _gate(z[:H])
        f = _gate(z[H:2 * H])
        gg = np.tanh(z[2 * H:3 * H])
        o = _gate(z[3 * H:])
        cs[t + 1] = f * cs[t] + i * gg
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:] = i, f, gg, o

    def vjp(g):
        dz = np.empty((T, 4 * H), dtype=dt)
        dh_next = np.zeros(H, dtype=dt)
        dc_next = np.zeros(H, dtype=dt)
        for t in range(T - 1, -1, -1):
            i, f, gg, o = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
            tc = np.tanh(cs[t + 1])
            dh = g[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz[t, :H] = dc * gg * i * (1.0 - i)
            dz[t, H:2 * H] = dc * cs[t] * f * (1.0 - f)
            dz[t, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
            dz[t, 3 * H:] = dh * tc * o * (1.0 - o)
            dh_next = dz[t] @ Whh.T
            dc_next = dc * f
        return (dz @ w_ih.data.T, x.data.T @ dz, hs[:-1].T @ dz, dz.sum(axis=0))

    return _result(hs[1:].copy(), (x, w_ih, w_hh, b), vjp)
