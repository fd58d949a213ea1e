"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` holds the Taylor coefficients of a scalar function of ``m``
variables up to total order ``K`` about a base point, optionally batched
over trailing array dimensions.  Evaluating a closed-form map on jets gives
its exact partial derivatives (up to rounding), which is how every
derivative oracle in the package is built.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


def _compositions(total, dim):
    # exponent tuples of a fixed total degree, lex-descending
    if dim == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, dim - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def multi_indices(dim, order):
    """Exponent tuples of total degree <= order in graded-lex order."""
    out = []
    for d in range(order + 1):
        out.extend(_compositions(d, dim))
    return tuple(out)


class _Algebra:
    def __init__(self, dim, order):
        self.dim = dim
        self.order = order
        self.index = multi_indices(dim, order)
        self.pos = {a: k for k, a in enumerate(self.index)}
        self.size = len(self.index)
        self.factorial = np.array(
            [math.prod(math.factorial(e) for e in a) for a in self.index], dtype=float
        )
        pairs = []
        for ia, a in enumerate(self.index):
            for ib, b in enumerate(self.index):
                s = tuple(x + y for x, y in zip(a, b))
                if sum(s) <= order:
                    pairs.append((self.pos[s], ia, ib))
        pairs.sort()
        t = np.array([p[0] for p in pairs])
        self.ia = np.array([p[1] for p in pairs])
        self.ib = np.array([p[2] for p in pairs])
        self.starts = np.searchsorted(t, np.arange(self.size))
        self._tensor_index = {}

    def tensor_index(self, k):
        """Gather indices and factorial weights for an order-k derivative tensor."""
        if k not in self._tensor_index:
            idx, fac = [], []
            for tup in itertools.product(range(self.dim), repeat=k):
                a = [0] * self.dim
                for i in tup:
                    a[i] += 1
                a = tuple(a)
                idx.append(self.pos[a])
                fac.append(self.factorial[self.pos[a]])
            self._tensor_index[k] = (np.array(idx), np.array(fac))
        return self._tensor_index[k]


@lru_cache(maxsize=None)
def algebra(dim, order):
    return _Algebra(dim, order)


class Jet:
    """Truncated Taylor expansion; ``c[k]`` is the coefficient of ``index[k]``."""

    __slots__ = ("alg", "c")
    __array_priority__ = 1000

    def __init__(self, alg, c):
        self.alg = alg
        self.c = c

    @classmethod
    def variable(cls, alg, i, value):
        value = np.asarray(value, dtype=float)
        c = np.zeros((alg.size,) + value.shape)
        c[0] = value
        e = [0] * alg.dim
        e[i] = 1
        c[alg.pos[tuple(e)]] = 1.0
        return cls(alg, c)

    @classmethod
    def constant(cls, alg, value, batch_shape=()):
        value = np.asarray(value, dtype=float)
        shape = np.broadcast_shapes(value.shape, batch_shape)
        c = np.zeros((alg.size,) + shape)
        c[0] = value
        return cls(alg, c)

    @property
    def value(self):
        return self.c[0]

    def _lift(self, other):
        shape = (self.alg.size,) + np.broadcast_shapes(self.c.shape[1:], np.shape(other))
        return np.broadcast_to(self.c, shape).copy()

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.alg, self.c + other.c)
        c = self._lift(other)
        c[0] = c[0] + other
        return Jet(self.alg, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.alg, -self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = np.broadcast_arrays(self.c, other.c)
            prod = a[self.alg.ia] * b[self.alg.ib]
            return Jet(self.alg, np.add.reduceat(prod, self.alg.starts, axis=0))
        return Jet(self.alg, self.c * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.alg, self.c / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Jet.constant(self.alg, 1.0, self.c.shape[1:])
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def compose(self, derivs):
        """Apply a scalar function given its derivatives ``f^(k)(c0)``, k = 0..K."""
        h = Jet(self.alg, self.c.copy())
        h.c[0] = 0.0
        out = Jet.constant(self.alg, derivs[0], self.c.shape[1:])
        power = None
        for k in range(1, self.alg.order + 1):
            power = h if power is None else power * h
            out = out + power * (derivs[k] / math.factorial(k))
        return out

    def sin(self):
        x = self.c[0]
        s, co = np.sin(x), np.cos(x)
        cycle = [s, co, -s, -co]
        return self.compose([cycle[k % 4] for k in range(self.alg.order + 1)])

    def cos(self):
        x = self.c[0]
        s, co = np.sin(x), np.cos(x)
        cycle = [co, -s, -co, s]
        return self.compose([cycle[k % 4] for k in range(self.alg.order + 1)])

    def sqrt(self):
        x = self.c[0]
        derivs, coef = [], 1.0
        for k in range(self.alg.order + 1):
            derivs.append(coef * x ** (0.5 - k))
            coef *= 0.5 - k
        return self.compose(derivs)

    def reciprocal(self):
        x = self.c[0]
        return self.compose(
            [(-1) ** k * math.factorial(k) * x ** (-(k + 1)) for k in range(self.alg.order + 1)]
        )

    def derivative(self, alpha):
        """Partial derivative D^alpha at the base point."""
        k = self.alg.pos[tuple(alpha)]
        return self.c[k] * self.alg.factorial[k]


def sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


def derivative_tensors(components, alg, batch_shape, order):
    """Stack jet components of a vector map into derivative tensors.

    Returns ``[T0, ..., T_order]`` with ``T_k`` of shape
    ``batch + (m,)*k + (n,)``.
    """
    coeffs = []
    for comp in components:
        if isinstance(comp, Jet):
            c = np.broadcast_to(comp.c, (alg.size,) + batch_shape)
        else:
            c = np.zeros((alg.size,) + batch_shape)
            c[0] = comp
        coeffs.append(c)
    C = np.stack(coeffs, axis=-1)  # (size, *batch, n)
    out = [C[0]]
    nb = len(batch_shape)
    for k in range(1, order + 1):
        idx, fac = alg.tensor_index(k)
        T = C[idx] * fac.reshape((-1,) + (1,) * (nb + 1))
        T = T.reshape((alg.dim,) * k + batch_shape + (C.shape[-1],))
        # move derivative axes after the batch axes
        T = np.moveaxis(T, list(range(k)), list(range(nb, nb + k)))
        out.append(T)
    return out
