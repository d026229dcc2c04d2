"""Geodesic spray, nonlinear connection, Berwald connection and tensors.

Index convention: the first slot of every connection quantity is the upper
index, so ``N[..., i, j] = dG^i/dy^j``, ``Gamma[..., k, j, m]`` is
Gamma^k_jm and ``B3[..., k, j, m, l]`` is B^k_jml.  All functions accept a
:class:`~finslerkit.metrics.Tangent` or batched arrays ``x, y`` of shape
``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .jets import Jet, contract, inv, stack
from .metrics import MetricModel, _xy

__all__ = [
    "SprayData",
    "spray_jet",
    "spray",
    "nonlinear_connection",
    "berwald",
    "landsberg",
    "lowered_y",
    "spray_fields",
]


def _build_spray_jet(model: MetricModel, x, y, order: int, x_order: int) -> Jet:
    n = model.dim
    f2 = model.jet(x, y, order + 2, x_order + 1)
    space = f2.space
    ys = [space.variable(np.asarray(y, dtype=float)[..., i], n + i) for i in range(n)]
    fy = [f2.diff(n + l) for l in range(n)]
    g = stack([stack([0.5 * fy[i].diff(n + j) for j in range(n)]) for i in range(n)])
    fx = [f2.diff(k) for k in range(n)]
    rhs = []
    for l in range(n):
        acc = -fx[l]
        for k in range(n):
            acc = acc + fx[k].diff(n + l) * ys[k]
        rhs.append(acc)
    return 0.25 * contract("il,l->i", inv(g), stack(rhs))


# batches larger than this many numbers bypass the memo (bounded memory)
_CACHE_MAX_SIZE = 64


@lru_cache(maxsize=512)
def _cached_spray_jet(model, xb, yb, shape, order, x_order):
    x = np.frombuffer(xb).reshape(shape[0])
    y = np.frombuffer(yb).reshape(shape[1])
    return _build_spray_jet(model, x, y, order, x_order)


def spray_jet(model: MetricModel, x, y, order: int = 0, x_order: int = 0) -> Jet:
    """Jet of the spray coefficients G^i at (x, y).

    The result is exact through total degree ``order`` and x-degree
    ``x_order``; requires F^2 jets of degree ``order + 2``.  Results for
    small inputs are memoized per (model, x, y, order) on the exact bytes of
    the inputs, so repeated pointwise queries are bit-stable and cheap.
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if max(x.size, y.size) > _CACHE_MAX_SIZE:
        return _build_spray_jet(model, x, y, order, x_order)
    return _cached_spray_jet(model, x.tobytes(), y.tobytes(), (x.shape, y.shape), order, x_order)


def spray_fields(model: MetricModel, x, y, with_N: bool = False, with_Gx: bool = False):
    """G, and optionally N = dG/dy and dG/dx, from one F^2 jet.

    A fast path for the geodesic and transport equations: instead of
    propagating a jet through the matrix inverse, differentiate the linear
    system 4 g G = [F^2]_{x^k y^l} y^k - [F^2]_{x^l} by hand.  Returns
    ``(G, N, Gx)`` with ``Gx[..., i, s] = dG^i/dx^s`` (None when not asked).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = 3 if (with_N or with_Gx) else 2
    f2 = model.jet(x, y, order, 2 if with_Gx else 1)
    fx = f2.partials(1, 0)
    fxy = f2.partials(1, 1)
    g = 0.5 * f2.partials(0, 2)
    ginv = np.linalg.inv(g)
    rhs = np.einsum("...kl,...k->...l", fxy, y) - fx
    G = 0.25 * np.einsum("...il,...l->...i", ginv, rhs)
    N = Gx = None
    if with_N:
        d_rhs = (np.einsum("...klj,...k->...lj", f2.partials(1, 2), y)
                 + np.swapaxes(fxy, -1, -2) - fxy)
        d_g = 0.5 * f2.partials(0, 3)
        N = np.einsum("...il,...lj->...ij", ginv,
                      0.25 * d_rhs - np.einsum("...lmj,...m->...lj", d_g, G))
    if with_Gx:
        dx_rhs = (np.einsum("...skl,...k->...ls", f2.partials(2, 1), y)
                  - f2.partials(2, 0))
        dx_g = 0.5 * f2.partials(1, 2)
        Gx = np.einsum("...il,...ls->...is", ginv,
                       0.25 * dx_rhs - np.einsum("...slm,...m->...ls", dx_g, G))
    return G, N, Gx


@dataclass(frozen=True)
class SprayData:
    x: np.ndarray
    y: np.ndarray
    G: np.ndarray
    N: np.ndarray
    Gamma: np.ndarray
    B3: np.ndarray | None = None
    B4: np.ndarray | None = None
    B5: np.ndarray | None = None


def spray(model: MetricModel, x, y=None) -> np.ndarray:
    """G^i = 1/4 g^il {[F^2]_{x^k y^l} y^k - [F^2]_{x^l}}."""
    x, y = _xy(x, y)
    return spray_jet(model, x, y, 0, 0).value


def nonlinear_connection(model: MetricModel, x, y=None) -> np.ndarray:
    """N^i_j = dG^i/dy^j."""
    x, y = _xy(x, y)
    return spray_jet(model, x, y, 1, 0).partials(0, 1)


def berwald(model: MetricModel, x, y=None, depth: int = 3) -> SprayData:
    """Berwald coefficients and the Berwald tensors up to ``depth`` y-derivatives.

    ``depth`` 3 fills B3 only, 5 fills B3, B4 and B5 (order-7 jets of F^2).
    """
    x, y = _xy(x, y)
    depth = max(2, int(depth))
    G = spray_jet(model, x, y, depth, 0)
    return SprayData(
        x=x, y=y, G=G.value, N=G.partials(0, 1), Gamma=G.partials(0, 2),
        B3=G.partials(0, 3) if depth >= 3 else None,
        B4=G.partials(0, 4) if depth >= 4 else None,
        B5=G.partials(0, 5) if depth >= 5 else None,
    )


def lowered_y(model: MetricModel, x, y) -> np.ndarray:
    """The covector y_k = g_kl(x, y) y^l = 1/2 [F^2]_{y^k}."""
    return 0.5 * model.jet(x, y, 1, 0).partials(0, 1)


def landsberg(model: MetricModel, x, y=None) -> np.ndarray:
    """L_ijk = -1/2 y_m B^m_ijk."""
    x, y = _xy(x, y)
    B3 = spray_jet(model, x, y, 3, 0).partials(0, 3)
    return -0.5 * np.einsum("...m,...mijk->...ijk", lowered_y(model, x, y), B3)
