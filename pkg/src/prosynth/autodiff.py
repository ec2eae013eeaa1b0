"""Minimal reverse-mode differentiation engine.

Eager, tape-free design: every operation immediately computes its numpy
value and remembers how to push gradients to its parents. The graph is
whatever Python executed, so data-dependent control flow is free. All
arithmetic is float64. Broadcasting is deliberately restricted to bias-add
((m,n)+(n,)) and scalar-with-anything; everything else must match shapes
exactly so that mistakes surface as errors, not silent expansion.

Thread-safety: construction and backward are single-threaded per graph;
distinct graphs on distinct threads are fine because there is no shared
mutable state beyond the id counter (itertools.count is atomic in CPython).
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ShapeError

_IDS = itertools.count()


def _as_array(x):
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A node in the computation graph: a float64 array plus gradient plumbing.

    Leaf tensors created with requires_grad=True act as parameters; their
    .grad accumulates across backward calls until zero_grad().
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_id", "_grad_owned")

    def __init__(self, data, requires_grad=False, name=None, _parents=()):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = None
        self._id = next(_IDS)
        self._grad_owned = False

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, grad={'yes' if self.requires_grad else 'no'})"

    # -- gradient machinery ---------------------------------------------------

    def zero_grad(self):
        self.grad = None
        self._grad_owned = False

    def _accum(self, g):
        # borrow the incoming buffer on first touch (producers hand over
        # fresh arrays); copy-on-write only when a second path arrives
        if self.grad is None:
            self.grad = g
            self._grad_owned = False
        elif self._grad_owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def backward(self):
        """Reverse-accumulate d(self)/d(leaf) for every reachable leaf.

        self must be scalar (size 1). Gradients add into .grad, so call
        zero_grad() on parameters between optimisation steps.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward: output must be scalar, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError("backward: non-finite output value")
        # Creation ids are a topological order because ops are eager.
        nodes = []
        seen = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._id, reverse=True)
        self._accum(np.ones_like(self.data))
        for t in nodes:
            if t._backward is not None:
                t._backward(t.grad)

    def detach(self):
        """Return a constant view of this value (blocks gradient flow)."""
        return Tensor(self.data, requires_grad=False)

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), -self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req, _parents=tuple(p for p in parents if p.requires_grad))
    if req:
        out._backward = backward
    return out


def _is_scalar(t):
    return t.data.ndim == 0 or t.data.size == 1


# -- arithmetic primitives ----------------------------------------------------


def add(a, b):
    """Elementwise sum. Allowed pairings: same shape, (m,n)+(n,) bias-add,
    or scalar with anything."""
    a, b = _wrap(a), _wrap(b)
    bias = a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]
    if not (a.data.shape == b.data.shape or bias or _is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_reduce_to(g, a.data.shape))
        if b.requires_grad:
            b._accum(_reduce_to(g, b.data.shape))

    return _result(data, (a, b), backward)


def _reduce_to(g, shape):
    """Sum g down to a smaller operand shape (bias or scalar broadcast)."""
    if g.shape == shape:
        return g
    if shape == () or int(np.prod(shape)) == 1:
        return np.sum(g).reshape(shape)
    # bias-add case: (m,n) grad -> (n,)
    return g.sum(axis=0).reshape(shape)


def mul(a, b):
    """Elementwise product; same shape or scalar-with-anything."""
    a, b = _wrap(a), _wrap(b)
    if not (a.data.shape == b.data.shape or _is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_reduce_to(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_reduce_to(g * a.data, b.data.shape))

    return _result(data, (a, b), backward)


def div(a, b):
    """Elementwise quotient; same shape or scalar-with-anything."""
    a, b = _wrap(a), _wrap(b)
    if not (a.data.shape == b.data.shape or _is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"div: incompatible shapes {a.data.shape} and {b.data.shape}")
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_reduce_to(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_reduce_to(-g * a.data / (b.data * b.data), b.data.shape))

    return _result(data, (a, b), backward)


def matmul(a, b):
    """numpy-style matmul for the 1-D/2-D combinations."""
    a, b = _wrap(a), _wrap(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != (bd.shape[0] if bd.ndim >= 1 else None):
        raise ShapeError(f"matmul: inner dims differ, {ad.shape} @ {bd.shape}")
    data = ad @ bd

    def backward(g):
        if ad.ndim == 2 and bd.ndim == 2:
            if a.requires_grad:
                a._accum(g @ bd.T)
            if b.requires_grad:
                b._accum(ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            if a.requires_grad:
                a._accum(bd @ g)
            if b.requires_grad:
                b._accum(np.outer(ad, g))
        elif ad.ndim == 2 and bd.ndim == 1:
            if a.requires_grad:
                a._accum(np.outer(g, bd))
            if b.requires_grad:
                b._accum(ad.T @ g)
        else:  # 1-D @ 1-D -> scalar
            if a.requires_grad:
                a._accum(g * bd)
            if b.requires_grad:
                b._accum(g * ad)

    return _result(data, (a, b), backward)


# -- elementwise nonlinearities -------------------------------------------------


def tanh(x):
    x = _wrap(x)
    data = np.tanh(x.data)

    def backward(g):
        x._accum(g * (1.0 - data * data))

    return _result(data, (x,), backward)


def sigmoid(x):
    x = _wrap(x)
    data = 0.5 * (1.0 + np.tanh(0.5 * x.data))  # stable logistic

    def backward(g):
        x._accum(g * data * (1.0 - data))

    return _result(data, (x,), backward)


def relu(x):
    x = _wrap(x)
    data = np.maximum(x.data, 0.0)

    def backward(g):
        x._accum(g * (x.data > 0.0))

    return _result(data, (x,), backward)


def exp(x):
    x = _wrap(x)
    data = np.exp(x.data)

    def backward(g):
        x._accum(g * data)

    return _result(data, (x,), backward)


def log(x):
    x = _wrap(x)
    data = np.log(x.data)

    def backward(g):
        x._accum(g / x.data)

    return _result(data, (x,), backward)


def softplus(x):
    """log(1 + e^x), computed without overflow."""
    x = _wrap(x)
    data = np.logaddexp(0.0, x.data)

    def backward(g):
        x._accum(g * 0.5 * (1.0 + np.tanh(0.5 * x.data)))

    return _result(data, (x,), backward)


def square(x):
    x = _wrap(x)
    data = x.data * x.data

    def backward(g):
        x._accum(g * 2.0 * x.data)

    return _result(data, (x,), backward)


def clamp_max(x, cap):
    """min(x, cap); gradient passes where x <= cap."""
    x = _wrap(x)
    data = np.minimum(x.data, cap)

    def backward(g):
        x._accum(g * (x.data <= cap))

    return _result(data, (x,), backward)


def threshold_keep(x, thr):
    """x where x > thr, else 0. Gradient is identity above, zero below."""
    x = _wrap(x)
    mask = x.data > thr
    data = x.data * mask

    def backward(g):
        x._accum(g * mask)

    return _result(data, (x,), backward)


# -- reductions and softmax family ---------------------------------------------


def sum_(x):
    x = _wrap(x)
    data = np.sum(x.data)

    def backward(g):
        x._accum(np.full_like(x.data, float(g)))

    return _result(data, (x,), backward)


def mean_(x):
    x = _wrap(x)
    n = x.data.size
    data = np.sum(x.data) / n

    def backward(g):
        x._accum(np.full_like(x.data, float(g) / n))

    return _result(data, (x,), backward)


def softmax(x):
    """Stable softmax over a 1-D vector; output sums to 1."""
    x = _wrap(x)
    if x.data.ndim != 1:
        raise ShapeError(f"softmax: expected 1-D input, got {x.data.shape}")
    z = x.data - x.data.max()
    e = np.exp(z)
    data = e / e.sum()

    def backward(g):
        x._accum(data * (g - np.dot(g, data)))

    return _result(data, (x,), backward)


def logsumexp(x):
    """Stable log-sum-exp of a 1-D vector (max-subtraction form)."""
    x = _wrap(x)
    if x.data.ndim != 1:
        raise ShapeError(f"logsumexp: expected 1-D input, got {x.data.shape}")
    m = x.data.max()
    data = m + np.log(np.exp(x.data - m).sum())

    def backward(g):
        s = np.exp(x.data - data)
        x._accum(float(g) * s)

    return _result(np.asarray(data), (x,), backward)


# -- shape manipulation ----------------------------------------------------------


def concat(parts, axis=0):
    """Concatenate 1-D or 2-D tensors along axis."""
    parts = [_wrap(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accum(g[tuple(sl)])

    return _result(data, tuple(parts), backward)


def narrow(x, key):
    """Basic slice/index view; gradient scatters back into place."""
    x = _wrap(x)
    data = x.data[key]

    def backward(g):
        buf = np.zeros_like(x.data)
        buf[key] = g
        x._accum(buf)

    return _result(data, (x,), backward)


def reshape(x, shape):
    x = _wrap(x)
    data = x.data.reshape(shape)

    def backward(g):
        x._accum(g.reshape(x.data.shape))

    return _result(data, (x,), backward)


def index_rows(table, ids):
    """Gather rows of a 2-D table by integer ids; grad scatter-adds."""
    table = _wrap(table)
    ids = np.asarray(ids, dtype=np.intp)
    if table.data.ndim != 2:
        raise ShapeError(f"index_rows: table must be 2-D, got {table.data.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(f"index_rows: id out of range 0..{table.data.shape[0] - 1}")
    data = table.data[ids]

    def backward(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, g)
        table._accum(buf)

    return _result(data, (table,), backward)


def conv1d(x, w, bias=None):
    """'Same'-padded 1-D convolution over time.

    x: (T, Cin), w: (K, Cin, Cout) with odd K, bias: (Cout,) or None.
    out[t, o] = sum_k sum_i x[t + k - K//2, i] * w[k, i, o] (+ bias[o])
    """
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ShapeError(f"conv1d: expected (T,Cin) and (K,Cin,Cout), got {x.data.shape}, {w.data.shape}")
    k, cin, cout = w.data.shape
    if k % 2 != 1:
        raise ShapeError(f"conv1d: kernel size must be odd, got {k}")
    if x.data.shape[1] != cin:
        raise ShapeError(f"conv1d: channel mismatch {x.data.shape[1]} vs {cin}")
    t = x.data.shape[0]
    pad = k // 2
    xp = np.zeros((t + 2 * pad, cin))
    xp[pad:pad + t] = x.data
    data = np.zeros((t, cout))
    for j in range(k):
        data += xp[j:j + t] @ w.data[j]
    parents = [x, w]
    if bias is not None:
        bias = _wrap(bias)
        data = data + bias.data
        parents.append(bias)

    def backward(g):
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[j:j + t] += g @ w.data[j].T
            x._accum(gxp[pad:pad + t])
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for j in range(k):
                gw[j] = xp[j:j + t].T @ g
            w._accum(gw)
        if bias is not None and bias.requires_grad:
            bias._accum(g.sum(axis=0))

    return _result(data, tuple(parents), backward)


def lstm_step(x, h, c, wx, wh, b):
    """One fused LSTM cell update (single graph node for speed).

    x: (I,), h/c: (H,), wx: (I,4H), wh: (H,4H), b: (4H,); gate order i,f,g,o.
    Returns (h', c').
    """
    x, h, c = _wrap(x), _wrap(h), _wrap(c)
    hid = h.data.shape[0]
    if wx.data.shape != (x.data.shape[0], 4 * hid) or wh.data.shape != (hid, 4 * hid):
        raise ShapeError(f"lstm_step: weight shapes {wx.data.shape}/{wh.data.shape} do not fit "
                         f"input {x.data.shape} and state {h.data.shape}")
    z = x.data @ wx.data + h.data @ wh.data + b.data
    i = 0.5 * (1.0 + np.tanh(0.5 * z[:hid]))
    f = 0.5 * (1.0 + np.tanh(0.5 * z[hid:2 * hid]))
    g = np.tanh(z[2 * hid:3 * hid])
    o = 0.5 * (1.0 + np.tanh(0.5 * z[3 * hid:]))
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    def backward(grad):
        gh, gc = grad[:hid], grad[hid:]
        gc_total = gc + gh * o * (1.0 - tc * tc)
        gz = np.empty_like(z)
        gz[:hid] = gc_total * g * i * (1.0 - i)
        gz[hid:2 * hid] = gc_total * c.data * f * (1.0 - f)
        gz[2 * hid:3 * hid] = gc_total * i * (1.0 - g * g)
        gz[3 * hid:] = gh * tc * o * (1.0 - o)
        if x.requires_grad:
            x._accum(wx.data @ gz)
        if h.requires_grad:
            h._accum(wh.data @ gz)
        if c.requires_grad:
            c._accum(gc_total * f)
        if wx.requires_grad:
            wx._accum(np.outer(x.data, gz))
        if wh.requires_grad:
            wh._accum(np.outer(h.data, gz))
        if b.requires_grad:
            b._accum(gz.copy())

    hc = _result(np.concatenate([h_new, c_new]), (x, h, c, wx, wh, b), backward)
    return hc[:hid], hc[hid:]


# -- parameters, optimiser, gradient checking ------------------------------------


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def glorot(rng, fan_in, fan_out, shape=None):
    """Uniform Glorot init; shape defaults to (fan_in, fan_out)."""
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-lim, lim, size=shape)


class SGD:
    """Plain gradient descent with momentum over a name->Tensor dict.

    Iteration order is sorted by name so steps are bit-reproducible.
    """

    def __init__(self, params, lr, momentum=0.9, grad_clip=None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.grad_clip = grad_clip
        self.velocity = {k: np.zeros_like(p.data) for k, p in sorted(params.items())}

    def zero_grad(self):
        for _, p in sorted(self.params.items()):
            p.zero_grad()

    def global_grad_norm(self):
        total = 0.0
        for _, p in sorted(self.params.items()):
            if p.grad is not None:
                total += float(np.sum(p.grad * p.grad))
        return float(np.sqrt(total))

    def step(self):
        scale = 1.0
        if self.grad_clip is not None:
            norm = self.global_grad_norm()
            if norm > self.grad_clip:
                scale = self.grad_clip / norm
        for name, p in sorted(self.params.items()):
            if p.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v -= self.lr * scale * p.grad
            p.data = p.data + v

    def state_tensors(self):
        """Momentum buffers as plain arrays keyed for checkpointing."""
        return {f"opt.velocity.{k}": v for k, v in self.velocity.items()}

    def load_state_tensors(self, table):
        for k in self.velocity:
            key = f"opt.velocity.{k}"
            if key in table:
                self.velocity[k] = np.asarray(table[key], dtype=np.float64)


def finite_diff_check(build, param, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    build() must re-evaluate the graph from scratch and return a scalar
    Tensor. The relative error for each entry of param is
    |analytic - fd| / max(|analytic|, 1e-8). Raises FloatingPointError if
    any evaluation goes non-finite (reported, never clipped).
    """
    if step <= 0:
        raise ValueError("finite_diff_check: step must be > 0")
    param.zero_grad()
    out = build()
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("finite_diff_check: non-finite forward value")
    out.backward()
    analytic = np.zeros_like(param.data) if param.grad is None else param.grad.copy()
    flat = param.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(build().data)
        flat[i] = orig - step
        lo = float(build().data)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError("finite_diff_check: non-finite perturbed value")
        fd = (hi - lo) / (2.0 * step)
        a = analytic.reshape(-1)[i]
        err = abs(a - fd) / max(abs(a), 1e-8)
        worst = max(worst, err)
    return worst
