"""Truncated multivariate Taylor jets.

A jet of order ``k`` in ``n`` variables stores the Taylor coefficients
``c_alpha`` of a function at a chart point for every multi-index with
``|alpha| <= k``.  Arithmetic is exact modulo truncation.  Coefficients are
stored densely, ordered by total degree, so the monomials of a lower-order
algebra form a prefix of the higher-order one.

A jet may also carry a first-order *tangent* component: the value is then
``primal + t * tangent`` with ``t**2 = 0``.  This is how directional
derivatives ``d/dt expr(g + t h)`` are carried through every formula without
finite differences.

Jets of tensors are a single :class:`Jet` whose coefficient array has the
tensor axes first and the coefficient axis last.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from numbers import Number

import numpy as np

from .errors import DegenerateMetricError, DimensionMismatchError, OrderExhaustedError
from .fields import TensorField

_INTERNAL = "PQ"


class JetAlgebra:
    """Monomial bookkeeping for jets of a given dimension and order."""

    def __init__(self, dim: int, order: int):
        if dim < 1 or order < 0:
            raise ValueError("need dim >= 1 and order >= 0")
        self.dim = dim
        self.order = order
        exps = []
        for deg in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(dim), deg):
                e = [0] * dim
                for i in combo:
                    e[i] += 1
                exps.append(tuple(e))
        self.exponents = np.array(exps, dtype=np.int64).reshape(len(exps), dim)
        self.size = len(exps)
        self.degree = self.exponents.sum(axis=1)
        self.index = {e: i for i, e in enumerate(exps)}
        self._build_products()
        self._build_derivatives()

    def _key(self, exps):
        base = self.order + 1
        return exps @ (base ** np.arange(self.dim))

    def _lookup(self, exps):
        keys = self._key(exps)
        own = self._key(self.exponents)
        order = np.argsort(own)
        pos = np.searchsorted(own[order], keys)
        return order[pos]

    def _build_products(self):
        pa, pb = [], []
        for a in range(self.size):
            room = self.order - self.degree[a]
            bs = np.nonzero(self.degree <= room)[0]
            pa.append(np.full(bs.shape, a))
            pb.append(bs)
        pa = np.concatenate(pa)
        pb = np.concatenate(pb)
        pc = self._lookup(self.exponents[pa] + self.exponents[pb])
        perm = np.argsort(pc, kind="stable")
        self.pa, self.pb, self.pc = pa[perm], pb[perm], pc[perm]
        self.starts = np.searchsorted(self.pc, np.arange(self.size))

    def _build_derivatives(self):
        self.dsrc = np.zeros((self.dim, self.size), dtype=np.int64)
        self.dfac = np.zeros((self.dim, self.size))
        inner = np.nonzero(self.degree < self.order)[0]
        for i in range(self.dim):
            shifted = self.exponents[inner].copy()
            shifted[:, i] += 1
            self.dsrc[i, inner] = self._lookup(shifted)
            self.dfac[i, inner] = self.exponents[inner, i] + 1

    def multiply(self, xs, x, ys, y, outs):
        """Contract two coefficient arrays with truncated polynomial products."""
        p = _INTERNAL[0]
        z = np.einsum(f"{xs}{p},{ys}{p}->{outs}{p}", x[..., self.pa], y[..., self.pb])
        return np.add.reduceat(z, self.starts, axis=-1)

    def __repr__(self):
        return f"JetAlgebra(dim={self.dim}, order={self.order})"


@lru_cache(maxsize=None)
def get_algebra(dim: int, order: int) -> JetAlgebra:
    return JetAlgebra(dim, order)


class Jet(TensorField):
    """Tensor-valued truncated Taylor jet, optionally with a tangent part.

    ``valid`` is the highest total degree whose coefficients are exact; every
    differentiation lowers it by one.
    """

    __array_priority__ = 100
    __slots__ = ("alg", "coef", "tangent", "valid")

    def __init__(self, alg: JetAlgebra, coef, tangent=None, valid=None):
        coef = np.asarray(coef, dtype=float)
        if coef.shape[-1] != alg.size:
            raise DimensionMismatchError(
                f"coefficient axis has length {coef.shape[-1]}, algebra needs {alg.size}")
        if tangent is not None:
            tangent = np.asarray(tangent, dtype=float)
            if tangent.shape != coef.shape:
                tangent = np.broadcast_to(tangent, coef.shape).copy()
        self.alg = alg
        self.coef = coef
        self.tangent = tangent
        self.valid = alg.order if valid is None else valid

    # -- basic properties ---------------------------------------------------
    @property
    def shape(self):
        return self.coef.shape[:-1]

    @property
    def dim(self):
        return self.alg.dim

    @property
    def order(self):
        return self.alg.order

    def _new(self, coef, tangent, valid=None):
        return Jet(self.alg, coef, tangent, self.valid if valid is None else valid)

    def _check(self, other):
        if other.alg is not self.alg:
            raise DimensionMismatchError(f"jet algebras differ: {self.alg} vs {other.alg}")

    def value(self):
        """Value at the base point (primal part)."""
        return self.coef[..., 0]

    def tangent_value(self):
        if self.tangent is None:
            return np.zeros(self.shape)
        return self.tangent[..., 0]

    def primal(self):
        return self._new(self.coef, None)

    def tangent_part(self):
        """The ``d/dt`` component as a jet of its own (zero if absent)."""
        t = np.zeros_like(self.coef) if self.tangent is None else self.tangent
        return self._new(t, None)

    def with_tangent(self, direction):
        """Attach ``direction`` (a Jet of the same shape) as tangent part."""
        self._check(direction)
        if direction.shape != self.shape:
            raise DimensionMismatchError("direction shape differs from jet shape")
        return self._new(self.coef, direction.coef, min(self.valid, direction.valid))

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self._new(self.coef + other.coef, _tadd(self.tangent, other.tangent),
                             min(self.valid, other.valid))
        other = np.asarray(other, dtype=float)
        coef = np.array(np.broadcast_to(self.coef, np.broadcast_shapes(self.coef.shape, other.shape + (1,))))
        coef[..., 0] += other
        return self._new(coef, self.tangent)

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.coef, None if self.tangent is None else -self.tangent)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return self._new(self.coef * other, None if self.tangent is None else self.tangent * other)
        if isinstance(other, Jet):
            self._check(other)
            shape = np.broadcast_shapes(self.shape, other.shape)
            s = "abcdefghijklmno"[:len(shape)]
            return Jet.contract2(s, self.broadcast_to(shape), s, other.broadcast_to(shape), s)
        arr = np.asarray(other, dtype=float)
        return self._new(self.coef * arr[..., None],
                         None if self.tangent is None else self.tangent * arr[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def broadcast_to(self, shape):
        full = tuple(shape) + (self.alg.size,)
        t = None if self.tangent is None else np.broadcast_to(self.tangent, full)
        return self._new(np.broadcast_to(self.coef, full), t)

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        key = key + (Ellipsis,) if Ellipsis not in key else key
        if key.count(Ellipsis) and key[-1] is not Ellipsis:
            raise IndexError("ellipsis only supported as trailing index")
        key = tuple(k for k in key if k is not Ellipsis)
        full = key + (slice(None),) * (len(self.shape) - len(key)) + (slice(None),)
        t = None if self.tangent is None else self.tangent[full]
        return self._new(self.coef[full], t)

    def transpose(self, *axes):
        axes = tuple(axes) + (len(self.shape),)
        t = None if self.tangent is None else self.tangent.transpose(axes)
        return self._new(self.coef.transpose(axes), t)

    def constant_like(self, value):
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (self.alg.size,))
        coef[..., 0] = value
        return Jet(self.alg, coef)

    @classmethod
    def contract1(cls, xs, x, outs):
        p = _INTERNAL[0]
        coef = np.einsum(f"{xs}{p}->{outs}{p}", x.coef)
        t = None if x.tangent is None else np.einsum(f"{xs}{p}->{outs}{p}", x.tangent)
        return x._new(coef, t)

    @classmethod
    def contract2(cls, xs, x, ys, y, outs):
        p = _INTERNAL[0]
        if not isinstance(x, Jet):
            x = np.asarray(x, dtype=float)
            coef = np.einsum(f"{xs},{ys}{p}->{outs}{p}", x, y.coef)
            t = None if y.tangent is None else np.einsum(f"{xs},{ys}{p}->{outs}{p}", x, y.tangent)
            return y._new(coef, t)
        if not isinstance(y, Jet):
            y = np.asarray(y, dtype=float)
            coef = np.einsum(f"{xs}{p},{ys}->{outs}{p}", x.coef, y)
            t = None if x.tangent is None else np.einsum(f"{xs}{p},{ys}->{outs}{p}", x.tangent, y)
            return x._new(coef, t)
        x._check(y)
        alg = x.alg
        coef = alg.multiply(xs, x.coef, ys, y.coef, outs)
        t = None
        if x.tangent is not None:
            t = alg.multiply(xs, x.tangent, ys, y.coef, outs)
        if y.tangent is not None:
            ty = alg.multiply(xs, x.coef, ys, y.tangent, outs)
            t = ty if t is None else t + ty
        return Jet(alg, coef, t, min(x.valid, y.valid))

    # -- calculus -------------------------------------------------------------
    def d(self):
        """Gradient: returns a jet of shape ``(dim,) + shape``, one order less valid."""
        if self.valid < 1:
            raise OrderExhaustedError("jet order exhausted: cannot differentiate further")
        alg = self.alg

        def grad(c):
            out = c[..., alg.dsrc] * alg.dfac
            out = np.moveaxis(out, -2, 0)
            out[..., alg.degree > self.valid - 1] = 0.0
            return out

        t = None if self.tangent is None else grad(self.tangent)
        return self._new(grad(self.coef), t, self.valid - 1)

    def evaluate(self, x):
        """Evaluate the Taylor polynomial at offset ``x`` from the base point."""
        x = np.asarray(x, dtype=float)
        mono = np.prod(x[None, :] ** self.alg.exponents, axis=1)
        return self.coef @ mono

    def truncate(self, order: int):
        """Restrict to a lower-order algebra (monomials form a prefix)."""
        if order > self.alg.order:
            raise ValueError("cannot truncate to a higher order")
        alg = get_algebra(self.alg.dim, order)
        t = None if self.tangent is None else self.tangent[..., :alg.size]
        return Jet(alg, self.coef[..., :alg.size], t, min(self.valid, order))

    def reciprocal(self):
        a0 = self.coef[..., 0]
        if np.any(a0 == 0):
            raise ZeroDivisionError("jet has zero constant term")
        return compose(self, lambda m, x: (-1.0) ** m * math.factorial(m) / x ** (m + 1))

    def inv(self, spd=False):
        """Matrix inverse of a square-matrix jet by Neumann series."""
        return matrix_inverse(self, spd=spd)

    def __repr__(self):
        return f"Jet(shape={self.shape}, dim={self.dim}, order={self.order}, valid={self.valid})"


def _tadd(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


# -- construction ---------------------------------------------------------------

def constant(alg: JetAlgebra, value) -> Jet:
    value = np.asarray(value, dtype=float)
    coef = np.zeros(value.shape + (alg.size,))
    coef[..., 0] = value
    return Jet(alg, coef)


def variable(alg: JetAlgebra, i: int) -> Jet:
    """The coordinate function ``x_i``."""
    coef = np.zeros(alg.size)
    e = [0] * alg.dim
    e[i] = 1
    coef[alg.index[tuple(e)]] = 1.0
    return Jet(alg, coef)


def coordinates(alg: JetAlgebra):
    return [variable(alg, i) for i in range(alg.dim)]


def from_terms(alg: JetAlgebra, terms: dict) -> Jet:
    """Scalar jet from ``{exponent tuple: coefficient}``."""
    coef = np.zeros(alg.size)
    for e, c in terms.items():
        if sum(e) <= alg.order:
            coef[alg.index[tuple(e)]] += c
    return Jet(alg, coef)


def random_jet(alg: JetAlgebra, rng, shape=(), amplitude=1.0, symmetric=False) -> Jet:
    """Jet with every coefficient uniform in ``[-amplitude, amplitude]``."""
    coef = rng.uniform(-amplitude, amplitude, size=tuple(shape) + (alg.size,))
    if symmetric:
        coef = 0.5 * (coef + np.swapaxes(coef, -2, -3))
    return Jet(alg, coef)


def stack(jets, shape=None) -> Jet:
    """Assemble scalar (or equal-shape) jets into one tensor jet."""
    jets = list(jets)
    alg = jets[0].alg
    coef = np.stack([j.coef for j in jets])
    tangent = None
    if any(j.tangent is not None for j in jets):
        tangent = np.stack([j.tangent_part().coef for j in jets])
    out = Jet(alg, coef, tangent, min(j.valid for j in jets))
    if shape is not None:
        c = coef.reshape(tuple(shape) + coef.shape[1:])
        t = None if tangent is None else tangent.reshape(c.shape)
        out = Jet(alg, c, t, out.valid)
    return out


# -- nonlinear functions ----------------------------------------------------------

def compose(a: Jet, derivative):
    """``f(a)`` from the Taylor series of ``f`` around the constant term of ``a``.

    ``derivative(m, x0)`` must return the m-th derivative of ``f`` at ``x0``
    (elementwise on arrays).  The non-constant part of ``a`` is nilpotent, so
    the series terminates.
    """
    a0 = a.coef[..., 0]
    delta = a - a0
    terms = a.order + (2 if a.tangent is not None else 1)
    out = constant(a.alg, derivative(0, a0))
    power = None
    for m in range(1, terms):
        power = delta if power is None else power * delta
        out = out + power * (derivative(m, a0) / math.factorial(m))
    out.valid = a.valid
    return out


def exp(a: Jet) -> Jet:
    return compose(a, lambda m, x: np.exp(x))


def cos(a: Jet) -> Jet:
    return compose(a, lambda m, x: np.cos(x + m * np.pi / 2))


def sin(a: Jet) -> Jet:
    return compose(a, lambda m, x: np.sin(x + m * np.pi / 2))


def power(a: Jet, p: float) -> Jet:
    def deriv(m, x):
        c = 1.0
        for j in range(m):
            c *= p - j
        return c * x ** (p - m)
    return compose(a, deriv)


def matrix_inverse(g: Jet, *, spd=False) -> Jet:
    """Inverse of a square-matrix jet by a Neumann series around ``g(0)``.

    With ``spd=True`` the constant term must be symmetric positive definite
    (min eigenvalue above ``1e-10`` times the largest entry).
    """
    if len(g.shape) != 2 or g.shape[0] != g.shape[1]:
        raise DimensionMismatchError("matrix inverse needs a square matrix jet")
    g0 = g.coef[..., 0]
    scale = max(np.max(np.abs(g0)), 1e-300)
    if spd:
        if not np.allclose(g0, g0.T, rtol=0, atol=1e-14 * scale):
            raise DegenerateMetricError("metric is not symmetric at base point")
        if np.linalg.eigvalsh(g0).min() <= 1e-10 * scale:
            raise DegenerateMetricError("degenerate metric at base point")
    else:
        if np.linalg.svd(g0, compute_uv=False).min() <= 1e-10 * scale:
            raise DegenerateMetricError("degenerate endomorphism at base point")
    g0inv = np.linalg.inv(g0)
    nil = g - g0
    step = -Jet.contract2("ij", g0inv, "jk", nil, "ik")
    out = constant(g.alg, g0inv)
    term = out
    terms = g.order + (2 if g.tangent is not None else 1)
    for _ in range(1, terms):
        term = Jet.contract2("ij", step, "jk", term, "ik")
        out = out + term
    out.valid = g.valid
    return out


def jet_metric_inverse(g: Jet) -> Jet:
    return matrix_inverse(g, spd=True)


def jet_arithmetic(a: Jet, b, op: str) -> Jet:
    """Checked binary jet arithmetic, ``op`` in ``{"add", "mul", "scale"}``."""
    if op == "scale":
        if not isinstance(b, Number):
            raise TypeError("scale expects a number")
        return a * float(b)
    if not isinstance(b, Jet):
        raise TypeError(f"{op} expects two jets")
    if a.alg.dim != b.alg.dim or a.alg.order != b.alg.order:
        raise DimensionMismatchError(
            f"dimension/order mismatch: ({a.dim}, {a.order}) vs ({b.dim}, {b.order})")
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown jet operation {op!r}")
