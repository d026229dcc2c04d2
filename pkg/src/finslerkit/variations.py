"""Numerical checks of the variation formulas, the distance-Hessian
decomposition and the derivative identity for T along a geodesic.

Each check computes a quantity twice: once by brute force (quadrature of
lengths of varied curves, differencing of distances) and once from the
curvature engine, and reports the residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curvature import riemann, t_curvature, t_dot
from .errors import ChartError, ShootingError
from .geodesics import GeodesicPath, distance, flow, integrate_geodesic, shoot
from .metrics import MetricModel, cartan_torsion, fundamental_tensor
from .numerics import cheb_diff_matrix, cheb_nodes, clenshaw_curtis, richardson
from .spray import spray_fields

__all__ = [
    "ParallelVariation",
    "VariationReport",
    "HessianReport",
    "ParallelIdentityReport",
    "linear_profile",
    "bump_profile",
    "variation_check",
    "hessian_distance_check",
    "parallel_t_identity_check",
]

TRANSVERSE_RTOL = 1e-13
TRANSVERSE_ATOL = 1e-15


@dataclass(frozen=True)
class ParallelVariation:
    """Variation field V(t) = profile(t) E(t), E parallel with E(0) = e0.

    The transverse curves H(t, .) are the geodesics through gamma(t) with
    velocity V(t), followed backward in time for s < 0.
    """

    e0: np.ndarray
    profile: Callable


def linear_profile(Q: float) -> Callable:
    """t -> 1 - t/Q."""
    return lambda t: 1.0 - np.asarray(t) / Q


def bump_profile(Q: float) -> Callable:
    """t -> sin(pi t / Q), vanishing at both ends."""
    return lambda t: np.sin(np.pi * np.asarray(t) / Q)


@dataclass
class VariationReport:
    s: np.ndarray
    L: np.ndarray
    L1_numeric: float
    L1_formula: float
    L2_numeric: float
    L2_formula: float
    integral_term: float
    kappa_term: float
    T_start: float
    T_end: float
    residual1: float
    residual2: float
    passed: bool


def _ip(g, a, b):
    return np.einsum("...i,...ij,...j->...", a, g, b)


def _transverse(model, X, V, s):
    if s == 0:
        return X.copy()
    res = flow(model, X, V, s, rtol=TRANSVERSE_RTOL, atol=TRANSVERSE_ATOL)
    if not np.all(res.alive):
        raise ChartError("variation leaves the chart")
    return res.x


def variation_check(model: MetricModel, gamma: GeodesicPath, V: ParallelVariation,
                    h: float = 1e-3, nodes: int = 48, rtol1: float = 1e-8,
                    rtol2: float = 1e-4) -> VariationReport:
    """Compare L'(0) and L''(0) from quadrature against the variation formulas.

    ``gamma`` must have unit speed on [0, t_end].  L(s) is evaluated with
    Clenshaw-Curtis quadrature on Chebyshev nodes (tangents by spectral
    differentiation) for s in {0, +-h, +-2h}; derivatives by 5-point
    differences.  The second-variation formula is
    ``int g(DV_perp, DV_perp) - g(R V_perp, V_perp) dt
    + T_{gamma'(a)}(V(a)) - T_{gamma'(b)}(V(b))`` with the geodesic
    curvature terms zero (transverse curves are geodesics).

    ``residual1`` is absolute; ``residual2`` is relative to
    max(|L''(0)|, 1).
    """
    if abs(gamma.speed - 1.0) > 1e-9:
        raise ValueError(f"gamma must have unit speed, got F = {gamma.speed}")
    a, b = 0.0, gamma.t_end
    path = integrate_geodesic(model, gamma.x0, gamma.y0, b, frames=[V.e0])
    t = cheb_nodes(a, b, nodes)
    D = cheb_diff_matrix(a, b, nodes)
    w = clenshaw_curtis(a, b, nodes)
    X, Y = path.point(t), path.velocity(t)
    E = path.frame(t)[:, 0]
    f = np.asarray(V.profile(t), dtype=float)
    Vt = f[:, None] * E

    svals = np.array([-2 * h, -h, 0.0, h, 2 * h])
    L = np.empty(5)
    for k, s in enumerate(svals):
        H = _transverse(model, X, Vt, s)
        L[k] = w @ model.F(H, D @ H)
    L1 = (L[0] - 8 * L[1] + 8 * L[3] - L[4]) / (12 * h)
    L2 = (-L[0] + 16 * L[1] - 30 * L[2] + 16 * L[3] - L[4]) / (12 * h * h)

    g = fundamental_tensor(model, X, Y)
    first = _ip(g[-1], Vt[-1], Y[-1]) - _ip(g[0], Vt[0], Y[0])
    Vp = Vt - _ip(g, Y, Vt)[:, None] * Y
    N = spray_fields(model, X, Y, with_N=True)[1]
    DVp = D @ Vp + np.einsum("bij,bj->bi", N, Vp)
    R = riemann(model, X, Y)
    integrand = _ip(g, DVp, DVp) - _ip(g, np.einsum("bik,bk->bi", R, Vp), Vp)
    integral = float(w @ integrand)
    T_a = float(t_curvature(model, X[0], Y[0], Vt[0]))
    T_b = float(t_curvature(model, X[-1], Y[-1], Vt[-1]))
    second = integral + T_a - T_b
    r1 = abs(L1 - first)
    r2 = abs(L2 - second) / max(abs(second), 1.0)
    return VariationReport(svals, L, float(L1), float(first), float(L2), float(second),
                           integral, 0.0, T_a, T_b, float(r1), float(r2),
                           bool(r1 <= max(rtol1, rtol1 * abs(first)) and r2 <= rtol2))


# ---------------------------------------------------------------------------
# Hessian of the distance function
# ---------------------------------------------------------------------------


@dataclass
class HessianReport:
    p: np.ndarray
    x: np.ndarray
    v: np.ndarray
    rho: float
    grad: np.ndarray
    H2: float
    H2_hat: float
    T: float
    residual: float
    passed: bool


def hessian_distance_check(model: MetricModel, p, x, v, h: float = 1e-3, delta: float = 1e-4,
                           tol: float = 3e-3) -> HessianReport:
    """Check H^2 rho(v) = H^2_hat rho(v) - T_{grad rho}(v) for rho = d(p, .).

    H^2 rho(v) is the second derivative of rho along the F-geodesic through
    x with velocity v; H^2_hat rho(v) the one along the geodesic of the
    Riemannian metric g_hat(z) = g_{Y(z)} with Y(z) the unit velocity at z of
    the minimal geodesic from p.  Both use second differences with steps h
    and h/2 and one Richardson pass.  Raises :class:`ShootingError` when
    the minimal geodesic from p to x is ambiguous.
    """
    p, x, v = (np.asarray(a, dtype=float) for a in (p, x, v))
    n = model.dim
    best = distance(model, p, x, path=False)
    if not best.converged:
        raise ShootingError("no geodesic from p to x converged")
    if best.ambiguous:
        raise ShootingError("x is (numerically) on the cut locus of p; refusing")
    w_star = best.w

    def rho_batch(Z):
        shot = shoot(model, p, Z, np.broadcast_to(w_star, Z.shape), tol=1e-13)
        if not np.all(np.isfinite(shot.residual)) or np.max(shot.residual) > 1e-9:
            raise ShootingError("shooting failed near x")
        return shot

    end = flow(model, p, w_star, 1.0)
    Y = end.y[0] / best.d
    fwd = [flow(model, x, v, s, rtol=TRANSVERSE_RTOL, atol=TRANSVERSE_ATOL).x[0] for s in (h, h / 2)]
    bwd = [flow(model, x, v, -s, rtol=TRANSVERSE_RTOL, atol=TRANSVERSE_ATOL).x[0] for s in (h, h / 2)]

    # g_hat and its first derivatives at x from Y(z) at x +- delta e_k
    eye = np.eye(n)
    Zs = np.concatenate([x + delta * eye, x - delta * eye])
    shotZ = rho_batch(Zs)
    endZ = flow(model, p, shotZ.w, 1.0)
    YZ = endZ.y / shotZ.d[:, None]
    dY = (YZ[:n] - YZ[n:]).T / (2 * delta)  # dY^a / dz^k  -> [a, k]
    jet = model.jet(x, Y, 3, 1)
    g_hat = 0.5 * jet.partials(0, 2)
    dxg = 0.5 * jet.partials(1, 2)  # [k, i, j]
    dyg = 0.5 * jet.partials(0, 3)  # [i, j, a]
    dg = dxg + np.einsum("ija,ak->kij", dyg, dY)  # d_k g_hat_ij
    gi = np.linalg.inv(g_hat)
    Gam = 0.5 * np.einsum("kl,ijl->kij", gi,
                          np.einsum("ijl->ijl", dg) + np.einsum("jil->ijl", dg)
                          - np.einsum("lij->ijl", dg))
    acc_hat = -np.einsum("kij,i,j->k", Gam, v, v)
    hat_p = [x + s * v + 0.5 * s * s * acc_hat for s in (h, h / 2)]
    hat_m = [x - s * v + 0.5 * s * s * acc_hat for s in (h, h / 2)]

    # rho(x) is reshot with the same tolerance as the differenced points;
    # a mismatch of 1e-9 would be amplified by 1/h^2 in the second differences
    Z = np.array(fwd + bwd + hat_p + hat_m + [x])
    d = rho_batch(Z).d
    rho0 = d[8]
    d2 = [(d[0] - 2 * rho0 + d[2]) / h ** 2, (d[1] - 2 * rho0 + d[3]) / (h / 2) ** 2]
    d2h = [(d[4] - 2 * rho0 + d[6]) / h ** 2, (d[5] - 2 * rho0 + d[7]) / (h / 2) ** 2]
    H2, _ = richardson(d2, ratio=2.0, passes=1, first_power=2)
    H2h, _ = richardson(d2h, ratio=2.0, passes=1, first_power=2)
    T = float(t_curvature(model, x, Y, v))
    res = abs(H2 - (H2h - T))
    return HessianReport(p, x, v, float(rho0), Y, float(H2), float(H2h), T, float(res),
                         bool(res <= tol))


# ---------------------------------------------------------------------------
# T along a parallel field
# ---------------------------------------------------------------------------


@dataclass
class ParallelIdentityReport:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: float
    integral_residual: float
    passed: bool


def parallel_t_identity_check(model: MetricModel, x0, y0, e0, Q: float, nodes: int = 48,
                              tol: float = 1e-4) -> ParallelIdentityReport:
    """Check f^2 Tdot_{gamma'}(E) = d/dt T_{gamma'}(V) - 2 f' f T_{gamma'}(E)
    along the geodesic from (x0, y0) with E parallel, V = f E, f = 1 - t/Q.

    d/dt T(V) is obtained by spectral differentiation on Chebyshev nodes;
    the report also checks the integrated form
    int_0^Q d/dt T(V) dt = -T_{gamma'(0)}(e0).  The residual is the max
    absolute pointwise difference divided by (1 + max |lhs|).
    """
    path = integrate_geodesic(model, x0, y0, Q, frames=[e0])
    if path.truncated:
        raise ChartError("geodesic leaves the chart before Q")
    t = cheb_nodes(0.0, Q, nodes)
    D = cheb_diff_matrix(0.0, Q, nodes)
    w = clenshaw_curtis(0.0, Q, nodes)
    X, Y, E = path.point(t), path.velocity(t), path.frame(t)[:, 0]
    f = 1.0 - t / Q
    fp = -1.0 / Q
    TE = t_curvature(model, X, Y, E)
    TdE = t_dot(model, X, Y, E)
    TV = t_curvature(model, X, Y, f[:, None] * E)
    dTV = D @ TV
    lhs = f ** 2 * TdE
    rhs = dTV - 2 * fp * f * TE
    scale = 1.0 + np.max(np.abs(lhs))
    res = float(np.max(np.abs(lhs - rhs)) / scale)
    ires = float(abs(w @ dTV + TE[0]) / scale)
    return ParallelIdentityReport(t, lhs, rhs, res, ires, bool(res <= tol and ires <= tol))
