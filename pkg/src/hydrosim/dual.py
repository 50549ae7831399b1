"""Forward-mode automatic differentiation over numpy arrays.

A :class:`Dual` pairs a value array with a block of directional derivatives
("tangents") stacked along one extra leading axis, so a single sweep through
the simulator propagates derivatives with respect to many control coordinates
at once. The numerical code stays plain numpy; it just has to follow one
convention: index and reduce along *trailing* axes (``x[..., :3]``,
``x.sum(axis=-1)``), never along absolute leading axes, because the tangent
block owns axis 0.

Kink conventions (deterministic one-sided derivatives):
  * ``np.maximum(a, b)`` ties take ``b``, so ``relu(x) = maximum(x, 0.0)``
    has derivative 0 at x = 0.
  * ``np.minimum(a, b)`` ties take ``b``, so ``minimum(1.0, s)`` at s = 1
    follows the s-branch.
  * ``abs`` has derivative 0 at 0; ``sqrt`` has derivative 0 at 0 (callers
    guard the value side with ``maximum(., eps)``).

Only the operations the engine uses are implemented; anything else raises,
so coverage gaps fail loudly instead of silently dropping derivatives.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Dual", "seed", "value", "tangent", "is_dual"]


def _as_val(x):
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def _as_dot(x, ntan, shape):
    """Tangent block of x, broadcastable to (ntan,) + shape."""
    if isinstance(x, Dual):
        dot = x.dot
        return dot if dot.shape == (ntan,) + shape else np.broadcast_to(dot, (ntan,) + shape)
    return np.zeros((1,) * (len(shape) + 1))  # broadcasts as zero


class Dual:
    """Value array plus tangents stacked along a leading axis."""

    __slots__ = ("val", "dot")
    __array_priority__ = 100.0

    def __init__(self, val, dot):
        val = np.asarray(val, dtype=float)
        dot = np.asarray(dot, dtype=float)
        if dot.ndim != val.ndim + 1:
            dot = np.broadcast_to(dot, (dot.shape[0],) + val.shape)
        self.val = val
        self.dot = dot

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    @property
    def ntan(self):
        return self.dot.shape[0]

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, ntan={self.ntan})"

    def copy(self):
        return Dual(self.val.copy(), self.dot.copy())

    # -- indexing ------------------------------------------------------
    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            # Ellipsis absorbs the tangent axis on the left.
            dot_idx = idx
        else:
            dot_idx = (slice(None),) + idx
        return Dual(self.val[idx], self.dot[dot_idx])

    # -- arithmetic ----------------------------------------------------
    def _binary(self, other, op):
        return op(self, other)

    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            return NotImplemented
        return Dual(self.val**n, n * self.val ** (n - 1) * self.dot)

    # comparisons look at values only and return plain bool arrays
    def __lt__(self, other):
        return self.val < _as_val(other)

    def __le__(self, other):
        return self.val <= _as_val(other)

    def __gt__(self, other):
        return self.val > _as_val(other)

    def __ge__(self, other):
        return self.val >= _as_val(other)

    # -- reductions ----------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return _sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        shape = tuple(shape)
        return Dual(self.val.reshape(shape), self.dot.reshape((self.ntan,) + shape))

    # -- numpy protocol ------------------------------------------------
    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        fn = _UFUNCS.get(ufunc)
        if fn is None:
            raise TypeError(f"Dual does not support ufunc {ufunc.__name__}")
        return fn(*inputs)

    def __array_function__(self, func, types, args, kwargs):
        fn = _FUNCS.get(func)
        if fn is None:
            raise TypeError(f"Dual does not support function {func.__name__}")
        return fn(*args, **kwargs)


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def value(x):
    """Plain value array of x (identity for non-Dual inputs)."""
    return x.val if isinstance(x, Dual) else x


def tangent(x, ntan: int):
    """Tangent block of x, zeros for non-Dual inputs."""
    if isinstance(x, Dual):
        return x.dot
    x = np.asarray(x, dtype=float)
    return np.zeros((ntan,) + x.shape)


def seed(u: np.ndarray, coords) -> Dual:
    """Lift u to a Dual with one unit tangent per entry of coords.

    coords is a sequence of index tuples into u; tangent lane d is the
    partial-derivative direction of u[coords[d]].
    """
    u = np.asarray(u, dtype=float)
    dot = np.zeros((len(coords),) + u.shape)
    for d, idx in enumerate(coords):
        dot[(d,) + tuple(idx)] = 1.0
    return Dual(u, dot)


# ---------------------------------------------------------------------
# operations


def _expand_dot(dot, val_ndim, out_ndim):
    """Insert singleton axes after the tangent axis so trailing dims align."""
    if val_ndim == out_ndim:
        return dot
    shape = dot.shape[:1] + (1,) * (out_ndim - val_ndim) + dot.shape[1:]
    return dot.reshape(shape)


def _pair(a, b):
    av, bv = _as_val(a), _as_val(b)
    out_ndim = max(av.ndim, bv.ndim)
    ntan = (a.ntan if isinstance(a, Dual) else 0) or (b.ntan if isinstance(b, Dual) else 0)
    if isinstance(a, Dual) and isinstance(b, Dual) and a.ntan != b.ntan:
        raise ValueError(f"tangent counts differ: {a.ntan} vs {b.ntan}")
    ad = _expand_dot(_as_dot(a, ntan, av.shape), av.ndim, out_ndim)
    bd = _expand_dot(_as_dot(b, ntan, bv.shape), bv.ndim, out_ndim)
    return av, bv, ad, bd


def _split(a, b):
    """(dual operand, plain operand value) for exactly one Dual argument."""
    if isinstance(a, Dual):
        return a, np.asarray(_as_val(b), dtype=float), True
    return b, np.asarray(_as_val(a), dtype=float), False


def _add(a, b):
    if isinstance(a, Dual) and isinstance(b, Dual):
        av, bv, ad, bd = _pair(a, b)
        return Dual(av + bv, ad + bd)
    d, pv, a_first = _split(a, b)
    out_ndim = max(d.ndim, pv.ndim)
    return Dual(d.val + pv, _expand_dot(d.dot, d.ndim, out_ndim))


def _sub(a, b):
    if isinstance(a, Dual) and isinstance(b, Dual):
        av, bv, ad, bd = _pair(a, b)
        return Dual(av - bv, ad - bd)
    d, pv, a_first = _split(a, b)
    out_ndim = max(d.ndim, pv.ndim)
    dot = _expand_dot(d.dot, d.ndim, out_ndim)
    return Dual(d.val - pv, dot) if a_first else Dual(pv - d.val, -dot)


def _mul(a, b):
    if isinstance(a, Dual) and isinstance(b, Dual):
        av, bv, ad, bd = _pair(a, b)
        return Dual(av * bv, ad * bv + av * bd)
    d, pv, _ = _split(a, b)
    out_ndim = max(d.ndim, pv.ndim)
    return Dual(d.val * pv, _expand_dot(d.dot, d.ndim, out_ndim) * pv)


def _div(a, b):
    if isinstance(a, Dual) and isinstance(b, Dual):
        av, bv, ad, bd = _pair(a, b)
        inv = 1.0 / bv
        return Dual(av * inv, (ad - av * inv * bd) * inv)
    if isinstance(a, Dual):
        inv = 1.0 / np.asarray(_as_val(b), dtype=float)
        out_ndim = max(a.ndim, inv.ndim)
        return Dual(a.val * inv, _expand_dot(a.dot, a.ndim, out_ndim) * inv)
    av = np.asarray(_as_val(a), dtype=float)
    out_ndim = max(av.ndim, b.ndim)
    inv = 1.0 / b.val
    v = av * inv
    return Dual(v, -v * inv * _expand_dot(b.dot, b.ndim, out_ndim))


def _neg(a):
    return -a


def _pos(a):
    return a


def _sqrt(a):
    # derivative pinned to 0 at the origin (callers guard with maximum(., eps))
    v = np.sqrt(a.val)
    slope = np.where(v > 0.0, 0.5 / np.where(v > 0.0, v, 1.0), 0.0)
    return Dual(v, a.dot * slope)


def _square(a):
    return Dual(a.val * a.val, 2.0 * a.val * a.dot)


def _exp(a):
    v = np.exp(a.val)
    return Dual(v, a.dot * v)


def _log(a):
    return Dual(np.log(a.val), a.dot / a.val)


def _sin(a):
    return Dual(np.sin(a.val), a.dot * np.cos(a.val))


def _cos(a):
    return Dual(np.cos(a.val), -a.dot * np.sin(a.val))


def _tanh(a):
    v = np.tanh(a.val)
    return Dual(v, a.dot * (1.0 - v * v))


def _abs(a):
    return Dual(np.abs(a.val), a.dot * np.sign(a.val))


def _maximum(a, b):
    av, bv, ad, bd = _pair(a, b)
    take_a = av > bv  # ties take b
    return Dual(np.where(take_a, av, bv), np.where(take_a, ad, bd))


def _minimum(a, b):
    av, bv, ad, bd = _pair(a, b)
    take_a = av < bv  # ties take b
    return Dual(np.where(take_a, av, bv), np.where(take_a, ad, bd))


def _power(a, b):
    if isinstance(b, Dual):
        raise TypeError("Dual exponents are not supported")
    return a.__pow__(b)


def _cmp(op):
    def fn(a, b):
        return op(_as_val(a), _as_val(b))

    return fn


_UFUNCS = {
    np.add: _add,
    np.subtract: _sub,
    np.multiply: _mul,
    np.true_divide: _div,
    np.negative: _neg,
    np.positive: _pos,
    np.sqrt: _sqrt,
    np.square: _square,
    np.exp: _exp,
    np.log: _log,
    np.sin: _sin,
    np.cos: _cos,
    np.tanh: _tanh,
    np.absolute: _abs,
    np.maximum: _maximum,
    np.minimum: _minimum,
    np.power: _power,
    np.less: _cmp(np.less),
    np.less_equal: _cmp(np.less_equal),
    np.greater: _cmp(np.greater),
    np.greater_equal: _cmp(np.greater_equal),
    np.equal: _cmp(np.equal),
    np.not_equal: _cmp(np.not_equal),
    np.isfinite: lambda a: np.isfinite(_as_val(a)),
    np.isnan: lambda a: np.isnan(_as_val(a)),
}


def _norm_axis(axis, ndim):
    """Normalize reduction axes to negative form so they match dot axes."""
    if axis is None:
        return tuple(range(-ndim, 0))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a - ndim if a >= 0 else a for a in axis)


def _sum(a, axis=None, keepdims=False, **kwargs):
    if not isinstance(a, Dual):
        return np.sum(a, axis=axis, keepdims=keepdims, **kwargs)
    ax = _norm_axis(axis, a.ndim)
    return Dual(
        np.sum(a.val, axis=ax, keepdims=keepdims),
        np.sum(a.dot, axis=ax, keepdims=keepdims),
    )


def _where(cond, a, b):
    cond = np.asarray(_as_val(cond))
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.where(cond, a, b)
    av, bv = _as_val(a), _as_val(b)
    out_ndim = max(cond.ndim, av.ndim, bv.ndim)
    ntan = (a.ntan if isinstance(a, Dual) else 0) or (b.ntan if isinstance(b, Dual) else 0)
    ad = _expand_dot(_as_dot(a, ntan, av.shape), av.ndim, out_ndim)
    bd = _expand_dot(_as_dot(b, ntan, bv.shape), bv.ndim, out_ndim)
    return Dual(np.where(cond, av, bv), np.where(cond, ad, bd))


def _lift_all(arrays):
    ntan = max(a.ntan for a in arrays if isinstance(a, Dual))
    vals, dots = [], []
    for a in arrays:
        v = _as_val(a)
        vals.append(v)
        if isinstance(a, Dual):
            dots.append(np.broadcast_to(a.dot, (ntan,) + v.shape))
        else:
            dots.append(np.zeros((ntan,) + v.shape))
    return vals, dots


def _stack(arrays, axis=0):
    if not any(isinstance(a, Dual) for a in arrays):
        return np.stack(arrays, axis=axis)
    vals, dots = _lift_all(arrays)
    ax = axis if axis < 0 else axis - vals[0].ndim - 1
    return Dual(np.stack(vals, axis=ax), np.stack(dots, axis=ax))


def _concatenate(arrays, axis=0):
    if not any(isinstance(a, Dual) for a in arrays):
        return np.concatenate(arrays, axis=axis)
    vals, dots = _lift_all(arrays)
    ax = axis if axis < 0 else axis - vals[0].ndim
    return Dual(np.concatenate(vals, axis=ax), np.concatenate(dots, axis=ax))


def _broadcast_to(a, shape):
    if not isinstance(a, Dual):
        return np.broadcast_to(a, shape)
    return Dual(
        np.broadcast_to(a.val, shape), np.broadcast_to(a.dot, (a.ntan,) + tuple(shape))
    )


_FUNCS = {
    np.where: _where,
    np.stack: _stack,
    np.concatenate: _concatenate,
    np.sum: _sum,
    np.broadcast_to: _broadcast_to,
}
