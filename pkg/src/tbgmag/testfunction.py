"""Smooth test functions with exact derivatives of every order.

The trace functionals only ever evaluate a test function and a few of its
derivatives at Landau-level positions, so test functions are small
expression trees whose nodes know how to differentiate themselves.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb, inf, sqrt, pi
from numbers import Real

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import expit

Support = tuple[float, float] | None  # None means identically zero


def _hull(a: Support, b: Support) -> Support:
    if a is None:
        return b
    if b is None:
        return a
    return (min(a[0], b[0]), max(a[1], b[1]))


def _meet(a: Support, b: Support) -> Support:
    if a is None or b is None:
        return None
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    return (lo, hi) if lo <= hi else None


class TestFunction:
    """Base class of the test-function algebra.

    Subclasses implement :meth:`_eval` returning the ``order``-th derivative.
    ``support`` is a closed interval (possibly unbounded) outside which the
    function vanishes identically, and ``smoothness`` is the number of
    continuous derivatives (``inf`` for analytic nodes).
    """

    __test__ = False  # keep pytest from collecting the class
    support: Support = (-inf, inf)
    smoothness: float = inf

    def _eval(self, x: np.ndarray, order: int) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x, order: int = 0) -> np.ndarray:
        if order < 0:
            raise ValueError("derivative order must be nonnegative")
        x = np.asarray(x, dtype=float)
        return self._eval(x, order)

    def __call__(self, x) -> np.ndarray:
        return self.derivative(x, 0)

    def d(self, order: int = 1) -> "TestFunction":
        """The ``order``-th derivative as a new test function."""
        return Derivative(self, order)

    # algebra -------------------------------------------------------------
    def __add__(self, other):
        other = _lift(other)
        return Sum((self, other))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * _lift(other)

    def __rsub__(self, other):
        return _lift(other) + (-1.0) * self

    def __mul__(self, other):
        if np.isscalar(other):
            return Scaled(float(other), self)
        return Product(self, _lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return Scaled(-1.0, self)

    def shift(self, c: float) -> "TestFunction":
        """``x -> f(x - c)``."""
        return Affine(self, 1.0, -c)

    def affine(self, a: float, b: float) -> "TestFunction":
        """``x -> f(a x + b)``."""
        return Affine(self, a, b)


def _lift(obj) -> TestFunction:
    if isinstance(obj, TestFunction):
        return obj
    if isinstance(obj, Real):
        return Constant(float(obj))
    raise TypeError(f"cannot combine test function with {type(obj).__name__}")


class Constant(TestFunction):
    def __init__(self, c: float):
        self.c = float(c)
        self.support = None if self.c == 0 else (-inf, inf)

    def _eval(self, x, order):
        return np.full_like(x, self.c if order == 0 else 0.0)


class Poly(TestFunction):
    """Polynomial with coefficients in increasing degree."""

    def __init__(self, coeffs):
        self.p = Polynomial(np.asarray(coeffs, dtype=float))
        self.support = None if not np.any(self.p.coef) else (-inf, inf)

    def _eval(self, x, order):
        return self.p.deriv(order)(x) if order else self.p(x)


class Gaussian(TestFunction):
    """Normalised Gaussian density with mean ``mu`` and width ``sigma``."""

    def __init__(self, mu: float = 0.0, sigma: float = 1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.mu, self.sigma = float(mu), float(sigma)

    def _eval(self, x, order):
        t = (x - self.mu) / self.sigma
        base = np.exp(-0.5 * t * t) / (self.sigma * sqrt(2 * pi))
        if order == 0:
            return base
        # d^k/dx^k exp(-t^2/2) = (-1)^k He_k(t) exp(-t^2/2) / sigma^k
        he_prev, he = np.ones_like(t), t
        if order == 1:
            hk = he
        else:
            for k in range(1, order):
                he_prev, he = he, t * he - k * he_prev
            hk = he
        return (-1) ** order * hk * base / self.sigma**order


@lru_cache(maxsize=None)
def _logistic_q(order: int) -> Polynomial:
    """``Q_k`` with ``d^k/dx^k n = beta^k n (1-n) Q_k(n)`` for ``k >= 1``."""
    if order == 1:
        return Polynomial([-1.0])
    nm = Polynomial([0.0, 1.0, -1.0])  # n (1 - n)
    return -(nm * _logistic_q(order - 1)).deriv()


class Logistic(TestFunction):
    """Fermi-Dirac occupation ``n_beta(x) = 1 / (exp(beta x) + 1)``."""

    def __init__(self, beta: float):
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.beta = float(beta)

    def _eval(self, x, order):
        bx = self.beta * x
        n = expit(-bx)
        if order == 0:
            return n
        m = expit(bx)
        return self.beta**order * n * m * _logistic_q(order)(n)


class Softplus(TestFunction):
    """``f_beta(x) = -log(exp(beta x) + 1) / beta`` with ``f_beta' = n_beta - 1``."""

    def __init__(self, beta: float):
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.beta = float(beta)
        self._n = Logistic(beta)

    def _eval(self, x, order):
        if order == 0:
            return -np.logaddexp(0.0, self.beta * x) / self.beta
        if order == 1:
            return -expit(self.beta * x)
        return self._n._eval(x, order - 1)


@lru_cache(maxsize=None)
def _smoothstep_poly(order: int) -> Polynomial:
    N = order
    coef = np.zeros(2 * N + 2)
    for j in range(N + 1):
        coef[N + 1 + j] = comb(N + j, j) * comb(2 * N + 1, N - j) * (-1) ** j
    return Polynomial(coef)


class SmoothStep(TestFunction):
    """Polynomial smoothstep rising from 0 at ``x0`` to 1 at ``x1``.

    The transition polynomial of degree ``2*order + 1`` has ``order``
    continuous derivatives at both ends.
    """

    def __init__(self, x0: float, x1: float, order: int = 9):
        if not x1 > x0:
            raise ValueError("smoothstep requires x1 > x0")
        self.x0, self.x1, self.order = float(x0), float(x1), int(order)
        self.support = (self.x0, inf)
        self.smoothness = self.order

    def _eval(self, x, order):
        w = self.x1 - self.x0
        t = (x - self.x0) / w
        p = _smoothstep_poly(self.order)
        inside = (t > 0) & (t < 1)
        out = np.zeros_like(t)
        if order == 0:
            out[t >= 1] = 1.0
        # p(t) = 1 - p(1 - t); evaluating near 0 avoids cancellation in the monomial basis
        tt = t[inside]
        lo = tt <= 0.5
        q = p.deriv(order) if order else p
        v = np.empty_like(tt)
        v[lo] = q(tt[lo])
        r = q(1.0 - tt[~lo])
        v[~lo] = 1.0 - r if order == 0 else (-1) ** (order + 1) * r
        out[inside] = v / w**order
        return out


class Sum(TestFunction):
    def __init__(self, terms):
        self.terms = tuple(terms)
        sup: Support = None
        for t in self.terms:
            sup = _hull(sup, t.support)
        self.support = sup
        self.smoothness = min(t.smoothness for t in self.terms)

    def _eval(self, x, order):
        out = np.zeros_like(x)
        for t in self.terms:
            out = out + t._eval(x, order)
        return out


class Scaled(TestFunction):
    def __init__(self, c: float, f: TestFunction):
        self.c, self.f = float(c), f
        self.support = None if self.c == 0 else f.support
        self.smoothness = f.smoothness

    def _eval(self, x, order):
        return self.c * self.f._eval(x, order)


class Product(TestFunction):
    """Pointwise product; derivatives by the Leibniz rule."""

    def __init__(self, f: TestFunction, g: TestFunction):
        self.f, self.g = f, g
        self.support = _meet(f.support, g.support)
        self.smoothness = min(f.smoothness, g.smoothness)

    def _eval(self, x, order):
        out = np.zeros_like(x)
        for j in range(order + 1):
            out = out + comb(order, j) * self.f._eval(x, j) * self.g._eval(x, order - j)
        return out


class Affine(TestFunction):
    """``x -> f(a x + b)``."""

    def __init__(self, f: TestFunction, a: float, b: float):
        if a == 0:
            raise ValueError("affine scale must be nonzero")
        self.f, self.a, self.b = f, float(a), float(b)
        self.smoothness = f.smoothness
        if f.support is None:
            self.support = None
        else:
            lo, hi = ((s - self.b) / self.a for s in f.support)
            self.support = (min(lo, hi), max(lo, hi))

    def _eval(self, x, order):
        return self.a**order * self.f._eval(self.a * x + self.b, order)


class Derivative(TestFunction):
    def __init__(self, f: TestFunction, k: int):
        self.f, self.k = f, int(k)
        self.support = f.support
        self.smoothness = f.smoothness - self.k

    def _eval(self, x, order):
        return self.f._eval(x, order + self.k)


# convenience constructors ------------------------------------------------


def gaussian(mu: float = 0.0, sigma: float = 1.0) -> TestFunction:
    return Gaussian(mu, sigma)


def fermi_dirac(beta: float, mu: float = 0.0) -> TestFunction:
    """``x -> n_beta(x - mu)``."""
    return Logistic(beta).shift(mu)


def free_energy_kernel(beta: float, mu: float = 0.0) -> TestFunction:
    """``x -> f_beta(mu - x)``."""
    return Softplus(beta).affine(-1.0, mu)


def plateau(lo: float, inner_lo: float, inner_hi: float, hi: float, order: int = 9) -> TestFunction:
    """Equal to 1 on ``[inner_lo, inner_hi]`` and supported in ``[lo, hi]``."""
    if not lo < inner_lo <= inner_hi < hi:
        raise ValueError("plateau requires lo < inner_lo <= inner_hi < hi")
    rise = SmoothStep(lo, inner_lo, order)
    fall = SmoothStep(-hi, -inner_hi, order).affine(-1.0, 0.0)
    return Product(rise, fall)
