"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` holds the Taylor coefficients of a quantity depending on the
2n variables ``(x^1..x^n, y^1..y^n)`` of a slit tangent bundle chart,
expanded around a base point and truncated at total degree ``order`` and at
degree ``x_order`` in the x block.  Coefficients live in the last axis of a
numpy array; any leading axes are batch or tensor axes and broadcast like
ordinary arrays, so a whole matrix of jets (or a batch of base points) is a
single object.

Only the operations the metric catalog and the connection pipeline need are
provided: ring arithmetic, smooth univariate functions by composition with
their Taylor series, contractions, matrix inversion and differentiation.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import JetDepthError

__all__ = [
    "Jet",
    "JetSpace",
    "jet_space",
    "contract",
    "stack",
    "inv",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "power",
]


def _monomials(nvars, order):
    if nvars == 0:
        yield ()
        return
    for d in range(order + 1):
        for rest in _monomials(nvars - 1, order - d):
            yield (d,) + rest


class JetSpace:
    """Monomial bookkeeping for jets in ``2n`` variables.

    Variables ``0..n-1`` are the base coordinates x, ``n..2n-1`` the fiber
    coordinates y.
    """

    def __init__(self, n: int, order: int, x_order: int):
        self.n = n
        self.order = order
        self.x_order = min(x_order, order)
        monos = [
            m for m in _monomials(2 * n, order) if sum(m[:n]) <= self.x_order
        ]
        monos.sort(key=lambda m: (sum(m), tuple(-d for d in m)))
        self.monomials = monos
        self.size = len(monos)
        self.index = {m: i for i, m in enumerate(monos)}
        self.degree = np.array([sum(m) for m in monos])
        self.x_degree = np.array([sum(m[:n]) for m in monos])

        pairs = []
        for ia, a in enumerate(monos):
            da = sum(a)
            for ib, b in enumerate(monos):
                if da + sum(b) > order:
                    continue
                k = self.index.get(tuple(p + q for p, q in zip(a, b)))
                if k is not None:
                    pairs.append((k, ia, ib))
        pairs.sort()
        arr = np.array(pairs, dtype=np.intp)
        self._target = arr[:, 0]
        self._left = arr[:, 1]
        self._right = arr[:, 2]
        self._starts = np.flatnonzero(np.r_[True, np.diff(self._target) != 0])

        # d/dv: coefficient of m in the derivative is (m_v + 1) c[m + e_v]
        self._diff = []
        for v in range(2 * n):
            dst, src, fac = [], [], []
            for i, m in enumerate(monos):
                up = list(m)
                up[v] += 1
                j = self.index.get(tuple(up))
                if j is not None:
                    dst.append(i)
                    src.append(j)
                    fac.append(up[v])
            self._diff.append(
                (np.array(dst, dtype=np.intp), np.array(src, dtype=np.intp),
                 np.array(fac, dtype=float))
            )

    def reduce(self, prod):
        """Sum pairwise products (last axis indexed by pair) into coefficients."""
        return np.add.reduceat(prod, self._starts, axis=-1)

    def variable(self, value, var: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (self.size,))
        coef[..., 0] = value
        e = [0] * (2 * self.n)
        e[var] = 1
        slot = self.index.get(tuple(e))
        if slot is not None:  # absent when the x-order truncation is zero
            coef[..., slot] = 1.0
        return Jet(coef, self)

    def constant(self, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (self.size,))
        coef[..., 0] = value
        return Jet(coef, self)

    def seed(self, x, y):
        """Jet variables for the chart point ``x`` and direction ``y``.

        ``x`` and ``y`` have shape ``(..., n)``; returns two lists of n jets.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xs = [self.variable(x[..., i], i) for i in range(self.n)]
        ys = [self.variable(y[..., i], self.n + i) for i in range(self.n)]
        return xs, ys

    @lru_cache(maxsize=None)
    def partial_table(self, kx: int, ky: int):
        """Flat coefficient indices and factorial weights of all partials
        with ``kx`` x-slots followed by ``ky`` y-slots."""
        n = self.n
        idx, fac = [], []
        for slots in itertools.product(range(n), repeat=kx + ky):
            m = [0] * (2 * n)
            for s in slots[:kx]:
                m[s] += 1
            for s in slots[kx:]:
                m[n + s] += 1
            idx.append(self.index[tuple(m)])
            fac.append(math.prod(math.factorial(d) for d in m))
        return np.array(idx, dtype=np.intp), np.array(fac, dtype=float)


@lru_cache(maxsize=None)
def jet_space(n: int, order: int, x_order: int) -> JetSpace:
    return JetSpace(n, order, x_order)


class Jet:
    """Truncated Taylor expansion with array-valued coefficients.

    ``exact`` and ``exact_x`` record up to which total / x degree the
    coefficients are still trustworthy; differentiation lowers them and
    :meth:`partials` refuses to read beyond them.
    """

    __array_ufunc__ = None

    def __init__(self, coef, space: JetSpace, exact=None, exact_x=None):
        self.coef = coef
        self.space = space
        self.exact = space.order if exact is None else exact
        self.exact_x = space.x_order if exact_x is None else exact_x

    # -- helpers -----------------------------------------------------------
    @property
    def shape(self):
        return self.coef.shape[:-1]

    @property
    def value(self):
        return self.coef[..., 0]

    def _like(self, coef, other=None):
        exact, exact_x = self.exact, self.exact_x
        if isinstance(other, Jet):
            exact = min(exact, other.exact)
            exact_x = min(exact_x, other.exact_x)
        return Jet(coef, self.space, exact, exact_x)

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return self._like(self.coef[key + (slice(None),)] if Ellipsis in key
                          else self.coef[key])

    def __repr__(self):
        return f"Jet(shape={self.shape}, order={self.space.order}, value={self.value!r})"

    # -- arithmetic --------------------------------------------------------
    def __neg__(self):
        return self._like(-self.coef)

    def __add__(self, other):
        if isinstance(other, Jet):
            return self._like(self.coef + other.coef, other)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        coef = np.broadcast_to(self.coef, shape + (self.space.size,)).copy()
        coef[..., 0] += other
        return self._like(coef)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            prod = self.coef[..., self.space._left] * other.coef[..., self.space._right]
            return self._like(self.space.reduce(prod), other)
        return self._like(self.coef * np.asarray(other, dtype=float)[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self._like(self.coef / np.asarray(other, dtype=float)[..., None])

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            out = self.space.constant(np.ones(self.shape))
            base = self
            while p:
                if p & 1:
                    out = out * base
                p >>= 1
                if p:
                    base = base * base
            return self._like(out.coef)
        return self.power(float(p))

    # -- composition with univariate functions ------------------------------
    def compose(self, taylor):
        """Return f(self) given ``taylor(a0, K)`` -> list of f^(k)(a0)/k!."""
        a0 = self.value
        h = self._like(self.coef.copy())
        h.coef[..., 0] = 0.0
        d = taylor(a0, self.space.order)
        out = self.space.constant(d[-1])
        for c in reversed(d[:-1]):
            out = out * h + c
        return self._like(out.coef)

    def power(self, p: float):
        def series(a0, K):
            if np.any(a0 <= 0):
                raise ValueError("non-integer power of a non-positive jet")
            return [_binom(p, k) * a0 ** (p - k) for k in range(K + 1)]
        return self.compose(series)

    def reciprocal(self):
        def series(a0, K):
            return [(-1.0) ** k * a0 ** (-(k + 1)) for k in range(K + 1)]
        return self.compose(series)

    def sqrt(self):
        return self.power(0.5)

    def exp(self):
        def series(a0, K):
            e = np.exp(a0)
            return [e / math.factorial(k) for k in range(K + 1)]
        return self.compose(series)

    def log(self):
        def series(a0, K):
            return [np.log(a0)] + [(-1.0) ** (k + 1) / (k * a0 ** k) for k in range(1, K + 1)]
        return self.compose(series)

    def sin(self):
        def series(a0, K):
            s, c = np.sin(a0), np.cos(a0)
            cyc = [s, c, -s, -c]
            return [cyc[k % 4] / math.factorial(k) for k in range(K + 1)]
        return self.compose(series)

    def cos(self):
        def series(a0, K):
            s, c = np.sin(a0), np.cos(a0)
            cyc = [c, -s, -c, s]
            return [cyc[k % 4] / math.factorial(k) for k in range(K + 1)]
        return self.compose(series)

    # -- calculus ----------------------------------------------------------
    def diff(self, var: int) -> "Jet":
        dst, src, fac = self.space._diff[var]
        coef = np.zeros_like(self.coef)
        coef[..., dst] = self.coef[..., src] * fac
        is_x = var < self.space.n
        return Jet(coef, self.space, self.exact - 1, self.exact_x - (1 if is_x else 0))

    def partials(self, kx: int = 0, ky: int = 0):
        """Dense array of partial derivatives at the base point.

        The result has shape ``self.shape + (n,) * (kx + ky)``; the first kx
        derivative slots are x-slots, the remaining ky are y-slots.
        """
        if kx + ky > self.exact or kx > self.exact_x:
            raise JetDepthError(
                f"derivative of order (x={kx}, y={ky}) exceeds jet accuracy "
                f"(total {self.exact}, x {self.exact_x})"
            )
        idx, fac = self.space.partial_table(kx, ky)
        out = self.coef[..., idx] * fac
        return out.reshape(self.shape + (self.space.n,) * (kx + ky))


def _binom(p: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= (p - i) / (i + 1)
    return out


def contract(subscripts: str, a, b) -> Jet:
    """Einstein contraction of two jets (or a jet and a plain array).

    ``subscripts`` refers to the trailing tensor axes only, e.g.
    ``"ij,j->i"``; leading batch axes are matched with ``...``.
    """
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    if isinstance(a, Jet) and isinstance(b, Jet):
        space = a.space
        A = a.coef[..., space._left]
        B = b.coef[..., space._right]
        prod = np.einsum(f"...{sa}z,...{sb}z->...{out}z", A, B)
        return a._like(space.reduce(prod), b)
    if isinstance(a, Jet):
        return a._like(np.einsum(f"...{sa}z,...{sb}->...{out}z", a.coef, b))
    return b._like(np.einsum(f"...{sa},...{sb}z->...{out}z", a, b.coef))


def stack(jets, axis: int = -1) -> Jet:
    """Stack jets along a new tensor axis (``axis`` counts tensor axes)."""
    jets = list(jets)
    coef_axis = axis - 1 if axis < 0 else axis
    coef = np.stack(np.broadcast_arrays(*[j.coef for j in jets]), axis=coef_axis)
    exact = min(j.exact for j in jets)
    exact_x = min(j.exact_x for j in jets)
    return Jet(coef, jets[0].space, exact, exact_x)


def inv(a: Jet) -> Jet:
    """Inverse of a jet-valued square matrix (last two tensor axes)."""
    a0inv = np.linalg.inv(a.value)
    h = a._like(a.coef.copy())
    h.coef[..., 0] = 0.0
    step = -contract("ij,jk->ik", a0inv, h)
    term = a.space.constant(a0inv)
    out = term
    for _ in range(max(a.exact, 0)):
        term = contract("ij,jk->ik", step, term)
        out = out + term
    return a._like(out.coef)


def _dispatch(name, npfunc):
    def f(a):
        if isinstance(a, Jet):
            return getattr(a, name)()
        return npfunc(a)
    f.__name__ = name
    f.__doc__ = f"{name} for plain arrays and jets alike."
    return f


sqrt = _dispatch("sqrt", np.sqrt)
exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)


def power(a, p):
    if isinstance(a, Jet):
        return a ** p
    return np.power(a, p)
