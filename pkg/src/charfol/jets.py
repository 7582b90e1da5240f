"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` of order ``N`` in ``dim`` variables holds the Taylor
coefficients ``c_alpha = d^alpha f / alpha!`` of a scalar function for every
multi-index ``|alpha| <= N``.  Coefficients are stored in graded order, so
truncating to a lower order is a prefix slice and every unordered pair of
second derivatives is stored once (the Hessian is symmetric by construction).

All module level functions (:func:`sin`, :func:`exp`, ...) accept plain floats
as well as jets, which lets the geometric code be written once and evaluated
either pointwise or with derivatives attached.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Sequence, Union

import numpy as np


class DomainError(ValueError):
    """A function was evaluated outside its domain (log of 0, division by 0, ...)."""


class _Basis:
    def __init__(self, dim: int, order: int):
        self.dim = dim
        self.order = order
        alphas: list[tuple[int, ...]] = []
        self.prefix = []
        for deg in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(dim), deg):
                alpha = [0] * dim
                for c in combo:
                    alpha[c] += 1
                alphas.append(tuple(alpha))
            self.prefix.append(len(alphas))
        self.alphas = alphas
        self.n = len(alphas)
        self.index = {a: i for i, a in enumerate(alphas)}
        self.degree = np.array([sum(a) for a in alphas])

        I, J, K = [], [], []
        for i, ai in enumerate(alphas):
            for j, aj in enumerate(alphas):
                if self.degree[i] + self.degree[j] <= order:
                    I.append(i)
                    J.append(j)
                    K.append(self.index[tuple(x + y for x, y in zip(ai, aj))])
        self.I = np.array(I, dtype=np.intp)
        self.J = np.array(J, dtype=np.intp)
        self.K = np.array(K, dtype=np.intp)

        # d/dx_k maps coefficient of beta + e_k to beta with factor beta_k + 1
        self.partial_src = []
        self.partial_fac = []
        n_low = self.prefix[order - 1] if order >= 1 else 0
        for k in range(dim):
            src, fac = [], []
            for beta in alphas[:n_low]:
                up = list(beta)
                up[k] += 1
                src.append(self.index[tuple(up)])
                fac.append(beta[k] + 1.0)
            self.partial_src.append(np.array(src, dtype=np.intp))
            self.partial_fac.append(np.array(fac))

        self.hess_pairs = [
            (self.index[a], *[i for i, x in enumerate(a) for _ in range(x)])
            for a in alphas
            if sum(a) == 2
        ]


@lru_cache(maxsize=None)
def basis(dim: int, order: int) -> _Basis:
    return _Basis(dim, order)


class Jet:
    """Taylor polynomial of a scalar function about a fixed point."""

    __slots__ = ("c", "dim", "order")
    __array_priority__ = 1000

    def __init__(self, coeffs, dim: int, order: int):
        self.c = np.asarray(coeffs, dtype=float)
        self.dim = dim
        self.order = order

    # construction -----------------------------------------------------------
    @classmethod
    def constant(cls, value: float, dim: int, order: int) -> "Jet":
        c = np.zeros(basis(dim, order).n)
        c[0] = value
        return cls(c, dim, order)

    @classmethod
    def variable(cls, value: float, k: int, dim: int, order: int) -> "Jet":
        c = np.zeros(basis(dim, order).n)
        c[0] = value
        if order >= 1:
            c[1 + k] = 1.0
        return cls(c, dim, order)

    # accessors --------------------------------------------------------------
    @property
    def value(self) -> float:
        return float(self.c[0])

    @property
    def gradient(self) -> np.ndarray:
        if self.order < 1:
            raise ValueError("order-0 jet carries no gradient")
        return self.c[1 : 1 + self.dim].copy()

    @property
    def hessian(self) -> np.ndarray:
        if self.order < 2:
            raise ValueError("jet of order < 2 carries no Hessian")
        H = np.zeros((self.dim, self.dim))
        for idx, i, j in basis(self.dim, self.order).hess_pairs:
            if i == j:
                H[i, i] = 2.0 * self.c[idx]
            else:
                H[i, j] = H[j, i] = self.c[idx]
        return H

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"Jet(value={self.value!r}, dim={self.dim}, order={self.order})"

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        if order < 0:
            raise ValueError("cannot truncate below order 0")
        n = basis(self.dim, self.order).prefix[order]
        return Jet(self.c[:n], self.dim, order)

    def partial(self, k: int) -> "Jet":
        """Exact partial derivative; the result has one order less."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        b = basis(self.dim, self.order)
        return Jet(self.c[b.partial_src[k]] * b.partial_fac[k], self.dim, self.order - 1)

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError("jets of different dimension")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return None

    def __add__(self, other):
        pair = self._coerce(other)
        if pair is not None:
            a, b = pair
            return Jet(a.c + b.c, a.dim, a.order)
        c = self.c.copy()
        c[0] += float(other)
        return Jet(c, self.dim, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.dim, self.order)

    def __pos__(self):
        return self

    def __sub__(self, other):
        pair = self._coerce(other)
        if pair is not None:
            a, b = pair
            return Jet(a.c - b.c, a.dim, a.order)
        c = self.c.copy()
        c[0] -= float(other)
        return Jet(c, self.dim, self.order)

    def __rsub__(self, other):
        c = -self.c
        c[0] += float(other)
        return Jet(c, self.dim, self.order)

    def __mul__(self, other):
        pair = self._coerce(other)
        if pair is None:
            return Jet(self.c * float(other), self.dim, self.order)
        a, b = pair
        if a.order == 0:
            return Jet(a.c * b.c, a.dim, 0)
        bs = basis(a.dim, a.order)
        c = np.bincount(bs.K, weights=a.c[bs.I] * b.c[bs.J], minlength=bs.n)
        return Jet(c, a.dim, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        other = float(other)
        if other == 0.0:
            raise DomainError("division by zero")
        return Jet(self.c / other, self.dim, self.order)

    def __rtruediv__(self, other):
        return float(other) * reciprocal(self)

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        p = float(p)
        if p.is_integer() and abs(p) <= 8:
            n = int(abs(p))
            out: Union[Jet, float] = 1.0
            base = self
            for _ in range(n):
                out = base * out
            if n == 0:
                return Jet.constant(1.0, self.dim, self.order)
            return reciprocal(out) if p < 0 else out
        return _power(self, p)

    def __rpow__(self, base):
        base = float(base)
        if base <= 0.0:
            raise DomainError("non-positive base with jet exponent")
        return exp(self * math.log(base))


Number = Union[float, Jet]


def _compose(a: Jet, taylor: Sequence[float]) -> Jet:
    """f(a) given taylor[n] = f^(n)(a0)/n! for n = 0..a.order."""
    if a.order == 0:
        return Jet(np.array([taylor[0]]), a.dim, 0)
    delta = Jet(a.c.copy(), a.dim, a.order)
    delta.c[0] = 0.0
    out = Jet.constant(taylor[a.order], a.dim, a.order)
    for n in range(a.order - 1, -1, -1):
        out = out * delta + taylor[n]
    return out


def _power(a: Jet, p: float) -> Jet:
    a0 = a.value
    if a0 < 0.0 or (a0 == 0.0 and a.order > 0):
        raise DomainError(f"power {p} undefined at {a0}")
    taylor, coef = [], 1.0
    for n in range(a.order + 1):
        taylor.append(coef * a0 ** (p - n))
        coef *= (p - n) / (n + 1)
    return _compose(a, taylor)


def reciprocal(a: Number) -> Number:
    if not isinstance(a, Jet):
        if a == 0.0:
            raise DomainError("division by zero")
        return 1.0 / a
    a0 = a.value
    if a0 == 0.0:
        raise DomainError("division by zero")
    return _compose(a, [(-1.0) ** n / a0 ** (n + 1) for n in range(a.order + 1)])


def sqrt(a: Number) -> Number:
    if not isinstance(a, Jet):
        if a < 0.0:
            raise DomainError("sqrt of negative number")
        return math.sqrt(a)
    return _power(a, 0.5)


def exp(a: Number) -> Number:
    if not isinstance(a, Jet):
        return math.exp(a)
    e = math.exp(a.value)
    return _compose(a, [e / math.factorial(n) for n in range(a.order + 1)])


def log(a: Number) -> Number:
    if not isinstance(a, Jet):
        if a <= 0.0:
            raise DomainError("log of non-positive number")
        return math.log(a)
    a0 = a.value
    if a0 <= 0.0:
        raise DomainError("log of non-positive number")
    taylor = [math.log(a0)] + [(-1.0) ** (n + 1) / (n * a0**n) for n in range(1, a.order + 1)]
    return _compose(a, taylor)


def _cyclic(a: Jet, cycle: Sequence[float]) -> Jet:
    return _compose(a, [cycle[n % len(cycle)] / math.factorial(n) for n in range(a.order + 1)])


def sin(a: Number) -> Number:
    if not isinstance(a, Jet):
        return math.sin(a)
    s, c = math.sin(a.value), math.cos(a.value)
    return _cyclic(a, (s, c, -s, -c))


def cos(a: Number) -> Number:
    if not isinstance(a, Jet):
        return math.cos(a)
    s, c = math.sin(a.value), math.cos(a.value)
    return _cyclic(a, (c, -s, -c, s))


def sinh(a: Number) -> Number:
    if not isinstance(a, Jet):
        return math.sinh(a)
    return _cyclic(a, (math.sinh(a.value), math.cosh(a.value)))


def cosh(a: Number) -> Number:
    if not isinstance(a, Jet):
        return math.cosh(a)
    return _cyclic(a, (math.cosh(a.value), math.sinh(a.value)))


def value(a: Number) -> float:
    return a.value if isinstance(a, Jet) else float(a)


def variables(point: Sequence[float], order: int) -> list[Jet]:
    """Coordinate functions as jets about ``point``."""
    dim = len(point)
    return [Jet.variable(float(x), k, dim, order) for k, x in enumerate(point)]


def as_jet(x: Number, dim: int, order: int) -> Jet:
    if isinstance(x, Jet):
        return x
    return Jet.constant(float(x), dim, order)


def order_of(x: Number) -> float:
    return x.order if isinstance(x, Jet) else math.inf
