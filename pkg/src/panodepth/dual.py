"""Forward-mode dual numbers and finite-difference gradient checking.

Every scalar loss in this package is written against the small algebra
below (exp, log, absolute, minimum, where, dsum, dmean), so the same code
evaluates on plain numpy arrays and on Dual pairs.  Seeding the inputs
with Dual(x, direction) makes a loss return a Dual whose .dot is the
directional derivative, which is what the gradient suite compares against
central finite differences.

Non-smooth points: |x|' at 0 is taken as 0, and minimum/maximum propagate
the derivative of the selected branch with ties resolved toward the first
operand.
"""

from __future__ import annotations

import numpy as np


class Dual:
    """Value plus directional derivative; payload is a scalar or ndarray."""

    __slots__ = ("val", "dot")
    __array_ufunc__ = None  # defer mixed numpy expressions to our operators

    def __init__(self, val, dot=None):
        val = np.asarray(val, dtype=np.float64)
        if dot is None:
            dot = np.zeros_like(val)
        else:
            dot = np.asarray(dot, dtype=np.float64)
            if dot.shape != val.shape:
                dot = np.broadcast_to(dot, val.shape).copy()
        self.val = val
        self.dot = dot

    # -- structure ---------------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    def __getitem__(self, key):
        return Dual(self.val[key], self.dot[key])

    def reshape(self, *shape):
        return Dual(self.val.reshape(*shape), self.dot.reshape(*shape))

    def sum(self, axis=None):
        return Dual(self.val.sum(axis=axis), self.dot.sum(axis=axis))

    def mean(self, axis=None):
        return Dual(self.val.mean(axis=axis), self.dot.mean(axis=axis))

    def __float__(self):
        return float(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, dot={self.dot!r})"

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val + o.val, self.dot + o.dot)
        return Dual(self.val + o, self.dot + np.zeros(np.shape(o)))

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val - o.val, self.dot - o.dot)
        return Dual(self.val - o, self.dot + np.zeros(np.shape(o)))

    def __rsub__(self, o):
        return Dual(o - self.val, -self.dot + np.zeros(np.shape(o)))

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val * o.val, self.dot * o.val + self.val * o.dot)
        return Dual(self.val * o, self.dot * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            q = self.val / o.val
            return Dual(q, (self.dot - q * o.dot) / o.val)
        return Dual(self.val / o, self.dot / o)

    def __rtruediv__(self, o):
        q = o / self.val
        return Dual(q, -q * self.dot / self.val)

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __pow__(self, p):
        return Dual(self.val**p, p * self.val ** (p - 1) * self.dot)

    # -- value comparisons (plain booleans) ----------------------------------
    def __lt__(self, o):
        return self.val < _value(o)

    def __le__(self, o):
        return self.val <= _value(o)

    def __gt__(self, o):
        return self.val > _value(o)

    def __ge__(self, o):
        return self.val >= _value(o)


def _value(x):
    return x.val if isinstance(x, Dual) else x


def value(x) -> np.ndarray:
    """Plain-array view of a Dual or array."""
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=np.float64)


def promote(x) -> Dual:
    return x if isinstance(x, Dual) else Dual(np.asarray(x, dtype=np.float64))


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.val)
        return Dual(e, e * x.dot)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(np.log(x.val), x.dot / x.val)
    return np.log(x)


def absolute(x):
    if isinstance(x, Dual):
        return Dual(np.abs(x.val), np.sign(x.val) * x.dot)
    return np.abs(x)


def where(cond, a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        a, b = promote(a), promote(b)
        return Dual(np.where(cond, a.val, b.val), np.where(cond, a.dot, b.dot))
    return np.where(cond, a, b)


def minimum(a, b):
    """Elementwise min; on ties the first operand wins (value and derivative)."""
    if isinstance(a, Dual) or isinstance(b, Dual):
        a, b = promote(a), promote(b)
        take = a.val <= b.val
        return Dual(np.where(take, a.val, b.val), np.where(take, a.dot, b.dot))
    return np.where(a <= b, a, b)


def maximum(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        a, b = promote(a), promote(b)
        take = a.val >= b.val
        return Dual(np.where(take, a.val, b.val), np.where(take, a.dot, b.dot))
    return np.where(a >= b, a, b)


def dsum(x):
    return x.sum() if isinstance(x, Dual) else np.sum(x)


def dmean(x):
    return x.mean() if isinstance(x, Dual) else np.mean(x)


def unsqueeze_last(x):
    """Append a trailing length-1 axis (for channel broadcasting)."""
    if isinstance(x, Dual):
        return Dual(x.val[..., None], x.dot[..., None])
    return np.asarray(x)[..., None]


def stack_last(items):
    """Stack along a new trailing axis, promoting if any item is a Dual."""
    if any(isinstance(i, Dual) for i in items):
        items = [promote(i) for i in items]
        return Dual(
            np.stack([i.val for i in items], axis=-1),
            np.stack([i.dot for i in items], axis=-1),
        )
    return np.stack(items, axis=-1)


def directional_derivative(f, x, direction) -> float:
    """Derivative of f at x along direction, via a seeded dual evaluation.

    f must accept its flat parameter vector as a Dual (or plain array).  A
    plain-float result means no seeded value reached the output, i.e. the
    derivative is exactly 0.
    """
    x = np.asarray(x, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    out = f(Dual(x, direction))
    d = _as_scalar(out.dot) if isinstance(out, Dual) else 0.0
    if not np.isfinite(d):
        raise ValueError("directional derivative is not finite")
    return d


def _as_scalar(x) -> float:
    arr = np.asarray(x)
    if arr.size != 1:
        raise ValueError("expected a scalar-valued function")
    return float(arr.reshape(-1)[0])


def finite_difference(f, x, direction, step: float = 1e-4) -> float:
    """Central finite difference of f at x along direction."""
    x = np.asarray(x, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    hi = f(x + step * direction)
    lo = f(x - step * direction)
    return (_as_scalar(_value(hi)) - _as_scalar(_value(lo))) / (2.0 * step)
