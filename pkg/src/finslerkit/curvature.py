"""Riemann, flag, T-curvature, its geodesic derivative and the weighted flag
curvature K^alpha, plus the small-flag Taylor probes.

All scalar functions broadcast over leading batch axes of ``x, y, v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .metrics import Flag, MetricModel, Tangent, fundamental_tensor
from .numerics import richardson
from .spray import lowered_y, spray_jet

__all__ = [
    "CurvatureReport",
    "ProbeReport",
    "riemann",
    "flag_curvature",
    "t_curvature",
    "t_dot",
    "landsberg_dot",
    "weighted_flag",
    "weighted_flag_terms",
    "weighted_flag_pairs",
    "PointData",
    "point_data",
    "curvature_report",
    "small_flag_limit",
    "taylor_probe",
]


def _xyv(x, y=None, v=None):
    if isinstance(x, Flag):
        return x.x, x.y, x.v
    if isinstance(x, Tangent):
        return x.x, x.y, np.asarray(y if v is None else v, dtype=float)
    return (np.asarray(x, dtype=float), np.asarray(y, dtype=float),
            np.asarray(v, dtype=float))


def _ip(g, a, b):
    return np.einsum("...i,...ij,...j->...", a, g, b)


def riemann(model: MetricModel, x, y=None) -> np.ndarray:
    """R^i_k = 2 G^i_{x^k} - G^i_{x^l y^k} y^l + 2 G^l G^i_{y^k y^l} - N^i_l N^l_k."""
    if isinstance(x, Tangent):
        x, y = x.x, x.y
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    J = spray_jet(model, x, y, 2, 1)
    G = J.value
    N = J.partials(0, 1)
    return (
        2.0 * J.partials(1, 0)
        - np.einsum("...ilk,...l->...ik", J.partials(1, 1), y)
        + 2.0 * np.einsum("...l,...ikl->...ik", G, J.partials(0, 2))
        - N @ N
    )


def _perp(g, y, v):
    F2 = _ip(g, y, y)
    v_perp = v - (_ip(g, y, v) / F2)[..., None] * y
    return v_perp, F2


def _check_flag(tau2, vv, min_tau=1e-6):
    if np.any(~(tau2 > min_tau ** 2 * vv)):
        raise DegenerateError("degenerate flag: v (nearly) parallel to y")


def flag_curvature(model: MetricModel, x, y=None, v=None) -> np.ndarray:
    """K(y, v) = g_y(R_y v, v) / (F(y)^2 g_y(v_perp, v_perp))."""
    x, y, v = _xyv(x, y, v)
    g = fundamental_tensor(model, x, y)
    R = riemann(model, x, y)
    v_perp, F2 = _perp(g, y, v)
    tau2 = _ip(g, v_perp, v_perp)
    _check_flag(tau2, _ip(g, v, v))
    return _ip(g, np.einsum("...ik,...k->...i", R, v), v) / (F2 * tau2)


def _safe_direction(model, y, v):
    small = np.max(np.abs(v), axis=-1) < model.guard()
    if np.any(small):
        v = np.where(small[..., None], y, v)
    return v, small


def t_curvature(model: MetricModel, x, y=None, v=None) -> np.ndarray:
    """T_y(v) = y_k {Gamma^k_jm(x, v) - Gamma^k_jm(x, y)} v^j v^m.

    v may be parallel to y (``T_y(y) = 0``); below the guard radius the
    limit value 0 is returned.
    """
    x, y, v = _xyv(x, y, v)
    v, small = _safe_direction(model, y, v)
    gam_y = spray_jet(model, x, y, 2, 0).partials(0, 2)
    gam_v = spray_jet(model, x, v, 2, 0).partials(0, 2)
    out = np.einsum("...k,...kjm,...j,...m->...", lowered_y(model, x, y), gam_v - gam_y, v, v)
    return np.where(small, 0.0, out)


@dataclass(frozen=True)
class PointData:
    """Connection data at (x, y) needed by T, Tdot and K^alpha.

    Arrays carry the leading batch axes of (x, y); ``dxGam[..., k, s, j, m]``
    is d Gamma^k_jm / dx^s and ``dyGam[..., k, j, m, s]`` is d/dy^s.
    """

    y: np.ndarray
    g: np.ndarray
    yl: np.ndarray
    G: np.ndarray
    N: np.ndarray
    Gam: np.ndarray
    dxGam: np.ndarray
    dyGam: np.ndarray
    R: np.ndarray

    def expand(self, axis: int) -> "PointData":
        """Insert a batch axis in front of the tensor slots (for pairing)."""
        def ins(a, rank):
            return np.expand_dims(a, a.ndim - rank + axis if axis < 0 else axis)
        return PointData(ins(self.y, 1), ins(self.g, 2), ins(self.yl, 1), ins(self.G, 1),
                         ins(self.N, 2), ins(self.Gam, 3), ins(self.dxGam, 4),
                         ins(self.dyGam, 4), ins(self.R, 2))


def point_data(model: MetricModel, x, y) -> PointData:
    """Evaluate :class:`PointData` at batched (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    J = spray_jet(model, x, y, 3, 1)
    f2 = model.jet(x, y, 2, 0)
    G = J.value
    N = J.partials(0, 1)
    Gam = J.partials(0, 2)
    R = (2.0 * J.partials(1, 0)
         - np.einsum("...ilk,...l->...ik", J.partials(1, 1), y)
         + 2.0 * np.einsum("...l,...ikl->...ik", G, Gam)
         - N @ N)
    return PointData(y, 0.5 * f2.partials(0, 2), 0.5 * f2.partials(0, 1), G, N, Gam,
                     J.partials(1, 2), J.partials(0, 3), R)


def _t_from(Dy: PointData, Dv: PointData, v):
    return np.einsum("...k,...kjm,...j,...m->...", Dy.yl, Dv.Gam - Dy.Gam, v, v)


def _tdot_from(Dy: PointData, Dv: PointData, v):
    y = Dy.y
    Nv = np.einsum("...ij,...j->...i", Dy.N, v)
    brace = (
        np.einsum("...ksjm,...s->...kjm", Dv.dxGam, y)
        - np.einsum("...kjms,...s->...kjm", Dv.dyGam, Nv)
        - np.einsum("...ksjm,...s->...kjm", Dy.dxGam, y)
        + 2.0 * np.einsum("...kjms,...s->...kjm", Dy.dyGam, Dy.G)
    )
    dgam = Dv.Gam - Dy.Gam
    return (
        np.einsum("...k,...kjm,...j,...m->...", Dy.yl, brace, v, v)
        - 2.0 * np.einsum("...k,...kjm,...j,...m->...", Dy.yl, dgam, Nv, v)
        + np.einsum("...l,...lk,...kjm,...j,...m->...", Dy.yl, Dy.N, dgam, v, v)
    )


def t_dot(model: MetricModel, x, y=None, v=None) -> np.ndarray:
    """Derivative of T_{gamma'(t)}(E(t)) at t = 0, gamma the geodesic with
    gamma'(0) = y and E the parallel field with E(0) = v.

    Evaluated pointwise by the chain rule: along the geodesic y'' = -2G,
    E' = -N E and the covector y_k moves by y_l N^l_k.
    """
    x, y, v = _xyv(x, y, v)
    v, small = _safe_direction(model, y, v)
    out = _tdot_from(point_data(model, x, y), point_data(model, x, v), v)
    return np.where(small, 0.0, out)


def _terms_from(Dy: PointData, Dv: PointData, v, min_tau=1e-6, strict=True):
    y = Dy.y
    g = Dy.g
    F2 = _ip(g, y, y)
    v_perp = v - (_ip(g, y, v) / F2)[..., None] * y
    tau2 = _ip(g, v_perp, v_perp)
    vv = _ip(g, v, v)
    bad = ~(tau2 > min_tau ** 2 * vv)
    if strict and np.any(bad):
        raise DegenerateError("degenerate flag: v (nearly) parallel to y")
    with np.errstate(divide="ignore", invalid="ignore"):
        Rv = np.einsum("...ik,...k->...i", Dy.R, v)
        r_term = _ip(g, Rv, v) / tau2 / F2
        td_term = _tdot_from(Dy, Dv, v) * np.sqrt(vv / tau2 ** 3) / F2
        t2_term = _t_from(Dy, Dv, v) ** 2 * vv / tau2 ** 3 / F2
    if not strict:
        r_term, td_term, t2_term = (np.where(bad, np.nan, a) for a in (r_term, td_term, t2_term))
    return r_term, td_term, t2_term


def weighted_flag_pairs(model: MetricModel, x, dirs, pole_index, alpha: float = 1.0,
                        beta: float = 1.0, min_tau: float = 1e-6):
    """K^alpha and K for every (flagpole, transverse) pair of directions.

    ``x`` has shape (B, n) and ``dirs`` (B, k, n); ``pole_index`` selects
    the flagpoles among the k directions.  Returns ``(K_alpha, K)`` of shape
    (B, len(pole_index), k), with NaN for degenerate pairs.  Connection data
    is evaluated once per (x, direction) and shared by all pairs.
    """
    x = np.asarray(x, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    B, k, n = dirs.shape
    D = point_data(model, np.repeat(x, k, axis=0), dirs.reshape(B * k, n))
    D = PointData(*(np.asarray(a).reshape((B, k) + np.asarray(a).shape[1:]) for a in
                    (D.y, D.g, D.yl, D.G, D.N, D.Gam, D.dxGam, D.dyGam, D.R)))
    pole = np.asarray(pole_index)
    Dy = PointData(*(a[:, pole] for a in (D.y, D.g, D.yl, D.G, D.N, D.Gam, D.dxGam, D.dyGam, D.R)))
    Dy2, Dv2 = Dy.expand(2), D.expand(1)
    v = dirs[:, None, :, :]
    r, td, t2 = _terms_from(Dy2, Dv2, v, min_tau, strict=False)
    return r + beta * td - alpha * t2, r


def _landsberg_pieces(model, x, y):
    J = spray_jet(model, x, y, 4, 1)
    f2 = model.jet(x, y, 2, 1)
    yl = 0.5 * f2.partials(0, 1)
    dx_yl = 0.5 * f2.partials(1, 1)  # [..., s, m]
    g = 0.5 * f2.partials(0, 2)
    B3 = J.partials(0, 3)
    L = -0.5 * np.einsum("...m,...mijk->...ijk", yl, B3)
    dxL = -0.5 * (np.einsum("...sm,...mijk->...ijks", dx_yl, B3)
                  + np.einsum("...m,...msijk->...ijks", yl, J.partials(1, 3)))
    dyL = -0.5 * (np.einsum("...ms,...mijk->...ijks", g, B3)
                  + np.einsum("...m,...mijks->...ijks", yl, J.partials(0, 4)))
    return J, L, dxL, dyL


def landsberg_dot(model: MetricModel, x, y=None, u=None) -> np.ndarray:
    """d/dt L_{gamma'(t)}(U, U, U) at t = 0 with U parallel, U(0) = u."""
    x, y, u = _xyv(x, y, u)
    J, L, dxL, dyL = _landsberg_pieces(model, x, y)
    G = J.value
    Nu = np.einsum("...ij,...j->...i", J.partials(0, 1), u)
    rate = (np.einsum("...ijks,...s->...ijk", dxL, y)
            - 2.0 * np.einsum("...ijks,...s->...ijk", dyL, G))
    return (np.einsum("...ijk,...i,...j,...k->...", rate, u, u, u)
            - 3.0 * np.einsum("...ijk,...i,...j,...k->...", L, Nu, u, u))


def weighted_flag_terms(model: MetricModel, x, y=None, v=None):
    """The three bracketed terms of K^alpha divided by F^2:
    ``(R-term, Tdot-term, T^2-term)`` so that
    ``K^alpha = R + Tdot - alpha * T2``."""
    x, y, v = _xyv(x, y, v)
    return _terms_from(point_data(model, x, y), point_data(model, x, v), v)


def weighted_flag(model: MetricModel, x, y=None, v=None, alpha: float = 1.0,
                  beta: float = 1.0) -> np.ndarray:
    """Weighted flag curvature K^alpha(y, v); alpha must be positive.

    ``beta`` scales the Tdot term (experimental; the convexity estimate is
    only established for beta = 1).
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    r, td, t2 = weighted_flag_terms(model, x, y, v)
    return r + beta * td - alpha * t2


@dataclass(frozen=True)
class CurvatureReport:
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    alpha: float
    F: float
    R_eval: float
    flag_K: float
    T: float
    T_dot: float
    K_alpha: float


def curvature_report(model: MetricModel, flag: Flag, alpha: float = 1.0) -> CurvatureReport:
    x, y, v = flag.x, flag.y, flag.v
    g = fundamental_tensor(model, x, y)
    R = riemann(model, x, y)
    r, td, t2 = weighted_flag_terms(model, x, y, v)
    return CurvatureReport(
        x=x, y=y, v=v, alpha=alpha,
        F=float(model.F(x, y)),
        R_eval=float(_ip(g, R @ v, v)),
        flag_K=float(flag_curvature(model, x, y, v)),
        T=float(t_curvature(model, x, y, v)),
        T_dot=float(t_dot(model, x, y, v)),
        K_alpha=float(r + td - alpha * t2),
    )


def _unit_orthogonal(model, x, y, u):
    g = fundamental_tensor(model, x, y)
    u_perp, _ = _perp(g, y, np.asarray(u, dtype=float))
    norm = np.sqrt(_ip(g, u_perp, u_perp))
    if np.any(norm < 1e-12):
        raise DegenerateError("u is parallel to y")
    return u_perp / norm[..., None]


def small_flag_limit(model: MetricModel, x, y=None, u=None, alpha: float = 1.0) -> np.ndarray:
    """Limit of K^alpha(y, y + s u) as s -> 0+:
    K(y, u) - 2/3 Ldot_y(u,u,u) / F(y) - 4 alpha / 9 L_y(u,u,u)^2.

    u is g_y-orthogonalized against y and g_y-normalized first.
    """
    x, y, u = _xyv(x, y, u)
    u = _unit_orthogonal(model, x, y, u)
    _, L, _, _ = _landsberg_pieces(model, x, y)
    Luuu = np.einsum("...ijk,...i,...j,...k->...", L, u, u, u)
    Ld = landsberg_dot(model, x, y, u)
    return (flag_curvature(model, x, y, u) - 2.0 / 3.0 * Ld / model.F(x, y)
            - 4.0 * alpha / 9.0 * Luuu ** 2)


@dataclass
class ProbeReport:
    s: np.ndarray
    T_estimates: np.ndarray
    Tdot_estimates: np.ndarray
    T_limit: float
    Tdot_limit: float
    L: float
    L_dot: float
    T_error: float
    Tdot_error: float
    passed: bool


def _close(est, direct, rtol, atol):
    err = abs(est - direct)
    return err, err <= max(rtol * abs(direct), atol)


def taylor_probe(model: MetricModel, x, y=None, u=None,
                 s_seq=(1e-1, 5e-2, 2.5e-2, 1.25e-2), passes: int = 3,
                 rtol: float = 1e-3, atol: float = 1e-6) -> ProbeReport:
    """Compare -3/2 T_y(y + s u)/s^3 and -3/2 Tdot_y(y + s u)/s^3 as s -> 0
    with L_y(u,u,u) and Ldot_y(u,u,u) computed directly.

    The s sequence must halve at each step; the default three Richardson
    passes use the full table of four estimates.  A comparison passes when
    the error is within ``rtol`` relative or ``atol`` absolute.
    """
    x, y, u = _xyv(x, y, u)
    u = _unit_orthogonal(model, x, y, u)
    s = np.asarray(s_seq, dtype=float)
    v = y[None, :] + s[:, None] * u[None, :]
    xb = np.broadcast_to(x, v.shape)
    est_T = -1.5 * t_curvature(model, xb, np.broadcast_to(y, v.shape), v) / s ** 3
    est_Td = -1.5 * t_dot(model, xb, np.broadcast_to(y, v.shape), v) / s ** 3
    lim_T, _ = richardson(est_T, ratio=s[0] / s[1], passes=passes)
    lim_Td, _ = richardson(est_Td, ratio=s[0] / s[1], passes=passes)
    _, L, _, _ = _landsberg_pieces(model, x, y)
    Luuu = float(np.einsum("ijk,i,j,k->", L, u, u, u))
    Ld = float(landsberg_dot(model, x, y, u))
    eT, okT = _close(lim_T, Luuu, rtol, atol)
    eTd, okTd = _close(lim_Td, Ld, rtol, atol)
    return ProbeReport(s, est_T, est_Td, float(lim_T), float(lim_Td), Luuu, Ld,
                       float(eT), float(eTd), bool(okT and okTd))
