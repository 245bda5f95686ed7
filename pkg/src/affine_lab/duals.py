"""Nested first-order perturbation arithmetic (dual-number towers).

A tower of depth ``d`` is an element of ``R[e_1, ..., e_d]`` with
``e_i**2 = 0``.  Coefficients are stored as one flat float vector of
length ``2**d``: bit ``i`` of an index marks the presence of the factor
``e_{i+1}``, so ``c[0]`` is the real part and ``c[2**d - 1]`` is the
coefficient of the full product ``e_1 * ... * e_d``.  Multiplying two
towers is a subset convolution restricted to disjoint index pairs, which
is exactly the result of nesting ``d`` first-order dual numbers, just
flattened for speed.

Levels behave like a stack.  ``push_level(x, s)`` adjoins a new topmost
infinitesimal with slope ``s``; ``split(x)`` removes it again, returning
the (value, derivative) pair with respect to that level.  Mixed-depth
arithmetic pads the shallower operand with zeros, which is only correct
when the shallow value does not depend on the newer levels -- guaranteed
as long as levels are pushed and popped in LIFO order, as every caller
in this package does.

Derivatives of an entire construction (metric, normal, connection, ...)
are obtained by running it unchanged on seeded towers; no code path in
the geometry modules ever differentiates by finite differences unless
the underlying map is only sample-defined.
"""

from __future__ import annotations

import math

import numpy as np

_SCALARS = (int, float, np.floating, np.integer)

# size -> (i, j, k) index triples with i & j == 0 and i | j == k.
_TABLES: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _table(size):
    tab = _TABLES.get(size)
    if tab is None:
        ii, jj, kk = [], [], []
        for k in range(size):
            sub = k
            while True:
                ii.append(sub)
                jj.append(k ^ sub)
                kk.append(k)
                if sub == 0:
                    break
                sub = (sub - 1) & k
        tab = (np.array(ii, dtype=np.intp),
               np.array(jj, dtype=np.intp),
               np.array(kk, dtype=np.intp))
        _TABLES[size] = tab
    return tab


def _mul_c(a, b):
    size = a.shape[0]
    if size == 2:
        return np.array([a[0] * b[0], a[0] * b[1] + a[1] * b[0]])
    ii, jj, kk = _table(size)
    return np.bincount(kk, weights=a[ii] * b[jj], minlength=size)


def _aligned(a, b):
    la, lb = a.shape[0], b.shape[0]
    if la == lb:
        return a, b
    if la < lb:
        a = np.concatenate([a, np.zeros(lb - la)])
    else:
        b = np.concatenate([b, np.zeros(la - lb)])
    return a, b


def _poly_in_nil(m, coeffs):
    """Evaluate sum coeffs[k] * m**k for nilpotent m (Horner)."""
    size = m.shape[0]
    acc = np.zeros(size)
    acc[0] = coeffs[-1]
    for ck in reversed(coeffs[:-1]):
        acc = _mul_c(acc, m)
        acc[0] += ck
    return acc


class Dual:
    """One tower of nested dual numbers; see module docstring."""

    __slots__ = ("c",)
    # Force numpy to defer all arithmetic to our reflected operators.
    __array_ufunc__ = None

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim != 1 or c.shape[0] & (c.shape[0] - 1):
            raise ValueError("coefficient vector length must be a power of 2")
        self.c = c

    @classmethod
    def _new(cls, c):
        obj = object.__new__(cls)
        obj.c = c
        return obj

    @property
    def real(self):
        return float(self.c[0])

    @property
    def depth(self):
        return self.c.shape[0].bit_length() - 1

    def __repr__(self):
        return f"Dual(depth={self.depth}, real={self.c[0]!r})"

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            a, b = _aligned(self.c, other.c)
            return Dual._new(a + b)
        if isinstance(other, _SCALARS):
            c = self.c.copy()
            c[0] += float(other)
            return Dual._new(c)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Dual._new(-self.c)

    def __sub__(self, other):
        if isinstance(other, Dual):
            a, b = _aligned(self.c, other.c)
            return Dual._new(a - b)
        if isinstance(other, _SCALARS):
            c = self.c.copy()
            c[0] -= float(other)
            return Dual._new(c)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _SCALARS):
            c = -self.c
            c[0] += float(other)
            return Dual._new(c)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Dual):
            a, b = _aligned(self.c, other.c)
            return Dual._new(_mul_c(a, b))
        if isinstance(other, _SCALARS):
            return Dual._new(self.c * float(other))
        return NotImplemented

    __rmul__ = __mul__

    def _recip(self):
        a0 = self.c[0]
        if a0 == 0.0:
            raise ZeroDivisionError("division by a tower with zero real part")
        m = self.c / a0
        m[0] = 0.0
        coeffs = [(-1.0) ** k for k in range(self.depth + 1)]
        return Dual._new(_poly_in_nil(m, coeffs) / a0)

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other._recip()
        if isinstance(other, _SCALARS):
            return Dual._new(self.c / float(other))
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _SCALARS):
            return self._recip() * float(other)
        return NotImplemented

    # -- analytic functions -------------------------------------------------

    def _compose(self, coeffs):
        """f(self) where coeffs[k] = f^(k)(real)/k!."""
        m = self.c.copy()
        m[0] = 0.0
        return Dual._new(_poly_in_nil(m, coeffs))

    def exp(self):
        e = math.exp(self.c[0])
        fac = 1.0
        coeffs = []
        for k in range(self.depth + 1):
            coeffs.append(e / fac)
            fac *= k + 1
        return self._compose(coeffs)

    def log(self):
        a0 = self.c[0]
        if a0 <= 0.0:
            raise ValueError("log requires a positive real part")
        coeffs = [math.log(a0)]
        for k in range(1, self.depth + 1):
            coeffs.append((-1.0) ** (k + 1) / (k * a0 ** k))
        return self._compose(coeffs)

    def sqrt(self):
        return self.__pow__(0.5)

    def __pow__(self, p):
        if isinstance(p, Dual):
            return (p * self.log()).exp()
        p = float(p)
        a0 = self.c[0]
        d = self.depth
        if p.is_integer():
            ip = int(p)
            if ip >= 0:
                coeffs, binom = [], 1.0
                for k in range(d + 1):
                    if k > ip:
                        coeffs.append(0.0)
                        continue
                    coeffs.append(binom * (a0 ** (ip - k) if ip != k else 1.0))
                    binom = binom * (ip - k) / (k + 1)
                return self._compose(coeffs)
            if a0 == 0.0:
                raise ZeroDivisionError("negative power of zero real part")
            coeffs, binom = [], 1.0
            for k in range(d + 1):
                coeffs.append(binom * a0 ** (ip - k))
                binom = binom * (ip - k) / (k + 1)
            return self._compose(coeffs)
        if a0 <= 0.0:
            raise ValueError("fractional power requires a positive real part")
        coeffs, binom = [], 1.0
        for k in range(d + 1):
            coeffs.append(binom * a0 ** (p - k))
            binom = binom * (p - k) / (k + 1)
        return self._compose(coeffs)

    def __rpow__(self, base):
        if isinstance(base, _SCALARS):
            return (self * math.log(float(base))).exp()
        return NotImplemented

    def sin(self):
        s, c = math.sin(self.c[0]), math.cos(self.c[0])
        cycle = [s, c, -s, -c]
        fac = 1.0
        coeffs = []
        for k in range(self.depth + 1):
            coeffs.append(cycle[k % 4] / fac)
            fac *= k + 1
        return self._compose(coeffs)

    def cos(self):
        s, c = math.sin(self.c[0]), math.cos(self.c[0])
        cycle = [c, -s, -c, s]
        fac = 1.0
        coeffs = []
        for k in range(self.depth + 1):
            coeffs.append(cycle[k % 4] / fac)
            fac *= k + 1
        return self._compose(coeffs)

    def sinh(self):
        sh, ch = math.sinh(self.c[0]), math.cosh(self.c[0])
        fac = 1.0
        coeffs = []
        for k in range(self.depth + 1):
            coeffs.append((sh if k % 2 == 0 else ch) / fac)
            fac *= k + 1
        return self._compose(coeffs)

    def cosh(self):
        sh, ch = math.sinh(self.c[0]), math.cosh(self.c[0])
        fac = 1.0
        coeffs = []
        for k in range(self.depth + 1):
            coeffs.append((ch if k % 2 == 0 else sh) / fac)
            fac *= k + 1
        return self._compose(coeffs)

    def tan(self):
        return self.sin() / self.cos()

    # -- order and misc ------------------------------------------------------

    def __abs__(self):
        return self if self.c[0] >= 0.0 else Dual._new(-self.c)

    def __float__(self):
        raise TypeError("implicit Dual -> float conversion discards "
                        "derivatives; use duals.real() explicitly")

    def __lt__(self, other):
        return self.c[0] < real(other)

    def __le__(self, other):
        return self.c[0] <= real(other)

    def __gt__(self, other):
        return self.c[0] > real(other)

    def __ge__(self, other):
        return self.c[0] >= real(other)


# -- generic scalar helpers (float or Dual) ----------------------------------

def is_dual(x):
    return isinstance(x, Dual)


def real(x):
    """Real part of a float or tower."""
    return float(x.c[0]) if isinstance(x, Dual) else float(x)


def depth(x):
    return x.depth if isinstance(x, Dual) else 0


def lift(x, levels=1):
    """Embed into `levels` additional top levels as a constant."""
    if levels <= 0:
        return x
    if isinstance(x, Dual):
        size = x.c.shape[0]
        c = np.zeros(size << levels)
        c[:size] = x.c
        return Dual._new(c)
    c = np.zeros(1 << levels)
    c[0] = float(x)
    return Dual._new(c)


def push_level(x, slope):
    """Adjoin a new topmost infinitesimal: value x, derivative `slope`."""
    if isinstance(x, Dual):
        size = x.c.shape[0]
        c = np.zeros(2 * size)
        c[:size] = x.c
        c[size] = float(slope)
        return Dual._new(c)
    return Dual._new(np.array([float(x), float(slope)]))


def pair(lo, hi):
    """Tower with (value, top-level derivative) = (lo, hi); lo, hi same depth."""
    dlo, dhi = depth(lo), depth(hi)
    if dlo != dhi:
        m = max(dlo, dhi)
        if dlo < m:
            lo = lift(lo, m - dlo)
        if dhi < m:
            hi = lift(hi, m - dhi)
    if isinstance(lo, Dual):
        return Dual._new(np.concatenate([lo.c, hi.c]))
    return Dual._new(np.array([float(lo), float(hi)]))


def split(x):
    """Remove the topmost level: return (value, derivative) one level down."""
    if not isinstance(x, Dual):
        return x, 0.0
    size = x.c.shape[0] // 2
    if size == 1:
        return float(x.c[0]), float(x.c[1])
    return Dual._new(x.c[:size].copy()), Dual._new(x.c[size:].copy())


def coeff(x, mask, levels):
    """Coefficient of the product of a subset of the top `levels` levels.

    `mask` is a bit mask over the top levels (bit j = the j-th pushed of
    those levels).  Returns a scalar whose depth is depth(x) - levels.
    """
    if not isinstance(x, Dual):
        if mask == 0:
            return x
        return 0.0
    base = x.c.shape[0] >> levels
    seg = x.c[mask * base:(mask + 1) * base]
    if base == 1:
        return float(seg[0])
    return Dual._new(seg.copy())


def align(values):
    """Pad a list of scalars to a common depth (low-bit embedding)."""
    m = max(depth(v) for v in values)
    return [lift(v, m - depth(v)) for v in values]


def derivative(f, x):
    """d/dx of a scalar function built from this module's arithmetic."""
    v = f(push_level(x, 1.0))
    return split(v)[1]


# -- math functions dispatching on scalar type --------------------------------

def exp(x):
    return x.exp() if isinstance(x, Dual) else math.exp(x)


def log(x):
    return x.log() if isinstance(x, Dual) else math.log(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Dual) else math.sqrt(x)


def sin(x):
    return x.sin() if isinstance(x, Dual) else math.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Dual) else math.cos(x)


def tan(x):
    return x.tan() if isinstance(x, Dual) else math.tan(x)


def sinh(x):
    return x.sinh() if isinstance(x, Dual) else math.sinh(x)


def cosh(x):
    return x.cosh() if isinstance(x, Dual) else math.cosh(x)


def power(x, p):
    if isinstance(x, Dual):
        return x ** p
    p = float(p)
    if p.is_integer():
        return float(x) ** int(p)
    return math.pow(x, p)


def absolute(x):
    return abs(x) if isinstance(x, Dual) else abs(float(x))


def sign(x):
    r = real(x)
    return 1.0 if r >= 0.0 else -1.0
