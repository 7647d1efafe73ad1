"""Reverse-mode automatic differentiation on a tape.

A :class:`Tape` records primitive operations in execution order. Every
operation here also accepts plain arrays; when none of its operands is a
:class:`Var` it just returns the numpy result, so the same model code serves
both training (on a tape) and inference (no tape, no overhead).

>>> tape = Tape()
>>> x = tape.param(3.0)
>>> y = x * x
>>> tape.gradients(y, [x])[0]
array(6.)
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .fourier import dft


class NumericError(FloatingPointError):
    """A tape value became NaN or infinite."""


class Var:
    """A node on a tape. ``value`` is never mutated after creation."""

    __slots__ = ("tape", "id", "value")
    __array_priority__ = 1000

    def __init__(self, tape: "Tape", node_id: int, value: np.ndarray):
        self.tape = tape
        self.id = node_id
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.value.shape})"

    def __float__(self):
        return float(self.value)

    __add__ = lambda a, b: add(a, b)
    __radd__ = lambda a, b: add(b, a)
    __sub__ = lambda a, b: sub(a, b)
    __rsub__ = lambda a, b: sub(b, a)
    __mul__ = lambda a, b: mul(a, b)
    __rmul__ = lambda a, b: mul(b, a)
    __truediv__ = lambda a, b: div(a, b)
    __rtruediv__ = lambda a, b: div(b, a)
    __matmul__ = lambda a, b: matmul(a, b)
    __rmatmul__ = lambda a, b: matmul(b, a)
    __neg__ = lambda a: neg(a)
    __pow__ = lambda a, p: power(a, p)
    __getitem__ = lambda a, idx: getitem(a, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Tape:
    """Ordered record of primitive operations.

    Only nodes created through :meth:`param` are leaves that receive
    gradients; plain arrays mixed into operations act as constants.
    """

    def __init__(self):
        self._n = 0
        self._records: list[tuple[int, tuple, Callable]] = []
        self.params: list[Var] = []

    def __len__(self):
        return len(self._records)

    def param(self, value) -> Var:
        v = Var(self, self._n, np.array(value, dtype=np.float64))
        self._n += 1
        self.params.append(v)
        return v

    def record(self, value, parents: Sequence, backward: Callable) -> Var:
        """Append a primitive: ``backward(g)`` returns one gradient per parent
        (``None`` for non-differentiable parents)."""
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericError("non-finite value produced on tape")
        out = Var(self, self._n, value)
        self._n += 1
        self._records.append((out.id, tuple(parents), backward))
        return out

    def gradients(self, output: Var, wrt: Sequence[Var] | None = None) -> list[np.ndarray]:
        """d(output)/d(leaf) for each leaf in ``wrt`` (default: all params).

        Disconnected leaves get a zero gradient. The tape is left untouched.
        """
        if not isinstance(output, Var) or output.tape is not self:
            raise ValueError("output is not a node of this tape")
        if output.size != 1:
            raise ValueError(f"output must be scalar, got shape {output.shape}")
        wrt = self.params if wrt is None else list(wrt)
        grads: dict[int, np.ndarray] = {output.id: np.ones_like(output.value)}
        for out_id, parents, backward in reversed(self._records):
            g = grads.pop(out_id, None)
            if g is None:
                continue
            for parent, pg in zip(parents, backward(g)):
                if pg is None or not isinstance(parent, Var):
                    continue
                if parent.id in grads:
                    grads[parent.id] = grads[parent.id] + pg
                else:
                    grads[parent.id] = pg
        return [grads.get(p.id, np.zeros_like(p.value)) for p in wrt]


def backward_gradients(tape: Tape, output: Var) -> list[np.ndarray]:
    """Gradient of a scalar node with respect to every parameter of ``tape``."""
    if len(tape) == 0:
        raise ValueError("tape is empty")
    return tape.gradients(output)


# ---------------------------------------------------------------- helpers


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _unary(x, out, grad_fn):
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape.record(out, (x,), lambda g: (grad_fn(g),))


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape.record(
        out, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    return tape.record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * av / (bv * bv), bv.shape)),
    )


def neg(x):
    return _unary(x, -value_of(x), lambda g: -g)


def power(x, p: float):
    xv = value_of(x)
    return _unary(x, xv**p, lambda g: g * p * xv ** (p - 1))


def square(x):
    xv = value_of(x)
    return _unary(x, xv * xv, lambda g: 2.0 * g * xv)


def matmul(a, b):
    """Matrix product with numpy broadcasting over leading axes (ndim >= 2)."""
    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    out = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def backward(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return tape.record(out, (a, b), backward)


# ---------------------------------------------------------------- elementwise


def exp(x):
    out = np.exp(value_of(x))
    return _unary(x, out, lambda g: g * out)


def log(x):
    xv = value_of(x)
    return _unary(x, np.log(xv), lambda g: g / xv)


def sqrt(x):
    out = np.sqrt(value_of(x))
    return _unary(x, out, lambda g: 0.5 * g / out)


def tanh(x):
    out = np.tanh(value_of(x))
    return _unary(x, out, lambda g: g * (1.0 - out * out))


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x):
    out = _sigmoid(value_of(x))
    return _unary(x, out, lambda g: g * out * (1.0 - out))


def relu(x):
    xv = value_of(x)
    return _unary(x, np.maximum(xv, 0.0), lambda g: g * (xv > 0))


def silu(x):
    xv = value_of(x)
    s = _sigmoid(xv)
    return _unary(x, xv * s, lambda g: g * (s + xv * s * (1.0 - s)))


def clip(x, lo: float, hi: float):
    """Clamp to ``[lo, hi]``; gradient is zero where clamping is active."""
    xv = value_of(x)
    inside = (xv >= lo) & (xv <= hi)
    return _unary(x, np.clip(xv, lo, hi), lambda g: g * inside)


# ---------------------------------------------------------------- reductions and shape


def sum_(x, axis=None, keepdims=False):
    xv = value_of(x)
    out = np.sum(xv, axis=axis, keepdims=keepdims)

    def grad(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, xv.shape).copy()

    return _unary(x, out, grad)


def mean(x, axis=None, keepdims=False):
    xv = value_of(x)
    count = xv.size if axis is None else np.prod([xv.shape[a] for a in np.atleast_1d(axis)])
    return div(sum_(x, axis=axis, keepdims=keepdims), float(count))


def l2norm(x, axis=-1):
    """Euclidean norm along ``axis`` (not squared); zero vectors get zero gradient."""
    xv = value_of(x)
    n = np.sqrt(np.sum(xv * xv, axis=axis))

    def grad(g):
        safe = np.where(n > 0, n, 1.0)
        scale = np.where(n > 0, g / safe, 0.0)
        return np.expand_dims(scale, axis) * xv

    return _unary(x, n, grad)


def reshape(x, shape):
    xv = value_of(x)
    return _unary(x, xv.reshape(shape), lambda g: g.reshape(xv.shape))


def transpose(x, axes=None):
    xv = value_of(x)
    inv = None if axes is None else np.argsort(axes)
    return _unary(x, np.transpose(xv, axes), lambda g: np.transpose(g, inv))


def getitem(x, idx):
    xv = value_of(x)

    def grad(g):
        out = np.zeros_like(xv)
        np.add.at(out, idx, g)
        return out

    return _unary(x, xv[idx], grad)


def concat(xs: Sequence, axis=-1):
    vals = [value_of(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return tape.record(out, tuple(xs), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(xs: Sequence, axis=0):
    vals = [value_of(x) for x in xs]
    out = np.stack(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    n = len(vals)
    return tape.record(
        out, tuple(xs), lambda g: tuple(np.take(g, i, axis=axis) for i in range(n))
    )


# ---------------------------------------------------------------- Fourier


def dft_real(x, axis=-1):
    """Real part of the DFT along ``axis`` (a linear map, so its adjoint is
    again a DFT of the incoming gradient)."""
    out = dft(value_of(x), axis=axis).real
    return _unary(x, out, lambda g: dft(g, axis=axis).real)


def dft_imag(x, axis=-1):
    out = dft(value_of(x), axis=axis).imag
    return _unary(x, out, lambda g: dft(g, axis=axis).imag)


# ---------------------------------------------------------------- recurrent


def _gru_forward(xv, wx, wh, b):
    n_batch, n_steps, _ = xv.shape
    H = wh.shape[0]
    gx = xv @ wx + b  # input contributions of all steps at once
    h = np.zeros((n_batch, H))
    hs = np.empty((n_batch, n_steps, H))
    cache = []
    for t in range(n_steps):
        gh = h @ wh
        z = _sigmoid(gx[:, t, :H] + gh[:, :H])
        r = _sigmoid(gx[:, t, H : 2 * H] + gh[:, H : 2 * H])
        hn = gh[:, 2 * H :]
        n = np.tanh(gx[:, t, 2 * H :] + r * hn)
        h_new = (1.0 - z) * n + z * h
        cache.append((h, z, r, n, hn))
        hs[:, t] = h = h_new
    return hs, cache


def gru_sequence(x, wx, wh, b):
    """Run a gated recurrent unit over ``x`` of shape ``(batch, steps, d)``
    from a zero state; returns every hidden state, ``(batch, steps, H)``.

    Weights are packed gate-wise as (update, reset, candidate):
    ``wx`` is ``(d, 3H)``, ``wh`` is ``(H, 3H)``, ``b`` is ``(3H,)``. The
    reset gate multiplies the recurrent part of the candidate. Gradients come
    from a single hand-written backpropagation-through-time pass.
    """
    xv, wxv, whv, bv = (value_of(a) for a in (x, wx, wh, b))
    if xv.ndim != 3 or wxv.shape[0] != xv.shape[2] or whv.shape[1] != 3 * whv.shape[0]:
        raise ValueError("gru_sequence: inconsistent input/weight shapes")
    hs, cache = _gru_forward(xv, wxv, whv, bv)
    tape = _tape_of(x, wx, wh, b)
    if tape is None:
        return hs
    H = whv.shape[0]

    def backward(g):
        dx = np.zeros_like(xv)
        dwx = np.zeros_like(wxv)
        dwh = np.zeros_like(whv)
        db = np.zeros_like(bv)
        dh = np.zeros((xv.shape[0], H))
        for t in range(xv.shape[1] - 1, -1, -1):
            h, z, r, n, hn = cache[t]
            dh = dh + g[:, t]
            dn = dh * (1.0 - z) * (1.0 - n * n)
            dz = dh * (h - n) * z * (1.0 - z)
            dr = dn * hn * r * (1.0 - r)
            d_in = np.concatenate([dz, dr, dn], axis=1)
            d_rec = np.concatenate([dz, dr, dn * r], axis=1)
            dwx += xv[:, t].T @ d_in
            db += d_in.sum(axis=0)
            dx[:, t] = d_in @ wxv.T
            dwh += h.T @ d_rec
            dh = dh * z + d_rec @ whv.T
        return dx, dwx, dwh, db

    return tape.record(hs, (x, wx, wh, b), backward)
