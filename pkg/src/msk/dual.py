"""Forward-mode dual numbers for sensitivity propagation.

A ``Dual`` is a scalar value paired with a tangent row (one entry per seed
direction). Arithmetic propagates exact first derivatives. Because numpy
ufuncs on object arrays dispatch to same-named methods, the interpreted
kernels in ``msk._core`` run unchanged on arrays of Duals: seed the inputs,
call the kernel, read tangents off the outputs.

Duals are treated as immutable; every operation returns a fresh instance, so
sharing a tangent array between instances is safe.
"""

import numpy as np


def _val(x):
    return x.val if isinstance(x, Dual) else x


class Dual:
    __slots__ = ("val", "tan")

    def __init__(self, val, tan):
        self.val = float(val)
        self.tan = np.asarray(tan, dtype=np.float64)

    def __repr__(self):
        return "Dual({!r}, {!r})".format(self.val, self.tan)

    # arithmetic
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.tan + other.tan)
        return Dual(self.val + other, self.tan)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.tan - other.tan)
        return Dual(self.val - other, self.tan)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.tan)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.tan * other.val + other.tan * self.val)
        return Dual(self.val * other, self.tan * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(self.val * inv,
                        (self.tan - (self.val * inv) * other.tan) * inv)
        return Dual(self.val / other, self.tan / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        return Dual(other * inv, (-other * inv * inv) * self.tan)

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        v = self.val ** p
        return Dual(v, (p * self.val ** (p - 1.0)) * self.tan)

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __pos__(self):
        return self

    def __abs__(self):
        return Dual(self.val, self.tan.copy()) if self.val >= 0.0 else -self

    # comparisons branch on the primal value only
    def __lt__(self, other):
        return self.val < _val(other)

    def __le__(self, other):
        return self.val <= _val(other)

    def __gt__(self, other):
        return self.val > _val(other)

    def __ge__(self, other):
        return self.val >= _val(other)

    def __eq__(self, other):
        return self.val == _val(other)

    def __ne__(self, other):
        return self.val != _val(other)

    __hash__ = None

    def __float__(self):
        # Intentionally refuse silent truncation of the tangent.
        raise TypeError("cannot coerce Dual to float; use .val")

    # numpy ufunc hooks
    def sin(self):
        return Dual(np.sin(self.val), np.cos(self.val) * self.tan)

    def cos(self):
        return Dual(np.cos(self.val), -np.sin(self.val) * self.tan)

    def sqrt(self):
        r = np.sqrt(self.val)
        return Dual(r, (0.5 / r) * self.tan)

    def exp(self):
        e = np.exp(self.val)
        return Dual(e, e * self.tan)

    def log(self):
        return Dual(np.log(self.val), self.tan / self.val)

    def fabs(self):
        return self.__abs__()


def seed(values, rows):
    """Object array of Duals: values (n,) with tangent rows (n, k)."""
    values = np.asarray(values, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    out = np.empty(values.shape[0], dtype=object)
    for i in range(values.shape[0]):
        out[i] = Dual(values[i], rows[i])
    return out


def lift(values, width):
    """Object array of Duals with zero tangents of the given width."""
    values = np.asarray(values, dtype=np.float64)
    zrow = np.zeros(width)
    out = np.empty(values.shape[0], dtype=object)
    for i in range(values.shape[0]):
        out[i] = Dual(values[i], zrow)
    return out


def value(x):
    return x.val if isinstance(x, Dual) else float(x)


def values(arr):
    """Primal values of an object array (any shape) as a float array."""
    arr = np.asarray(arr)
    out = np.empty(arr.shape, dtype=np.float64)
    for idx in np.ndindex(arr.shape):
        out[idx] = value(arr[idx])
    return out


def tangents(arr, width):
    """Tangent rows of an object array; plain floats count as zero rows."""
    arr = np.asarray(arr)
    out = np.zeros(arr.shape + (width,), dtype=np.float64)
    for idx in np.ndindex(arr.shape):
        x = arr[idx]
        if isinstance(x, Dual):
            out[idx] = x.tan
    return out
