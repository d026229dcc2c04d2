"""Forward spheres, partial Busemann functions, rays and related probes.

The distance from a point x to the forward sphere S(p, t) is the forward
distance d(x, S(p, t)) (from x to the sphere).  In dimension 2 the sphere is
parametrized by the angle of the initial unit direction at p; the minimum
over the sphere is found by a coarse pass over the samples (ranking by the
F-length of straight chart segments, then exact shooting to the best few)
followed by golden-section refinement on the angle, run in lockstep over all
query points.  In other dimensions only the sampled sphere points are used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ChartError, ShootingError
from .geodesics import GeodesicPath, flow, integrate_geodesic, shoot, unit_directions
from .metrics import MetricModel

__all__ = [
    "SphereSample",
    "BusemannField",
    "RayWitness",
    "DiniReport",
    "forward_sphere",
    "distance_to_sphere",
    "busemann_values",
    "busemann_partial",
    "busemann_estimate",
    "pairwise_distances",
    "extract_ray",
    "small_ends_ratio",
    "dini_convexity",
]

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class SphereSample:
    """Points exp_p(t u) of the forward sphere of radius t for unit u."""

    p: np.ndarray
    t: float
    theta: np.ndarray | None
    directions: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    alive: np.ndarray

    @property
    def complete(self) -> bool:
        return bool(np.all(self.alive))


def _directions(model, p, theta):
    d = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return d / model.F(np.broadcast_to(p, d.shape), d)[:, None]


def forward_sphere(model: MetricModel, p, t: float, count: int = 256, seed: int = 0) -> SphereSample:
    """Sample S(p, t) = {exp_p(t u) : F(p, u) = 1}.

    In 2D the unit directions follow a uniform angular grid; otherwise they
    are random.  ``alive`` marks directions whose geodesic stays in the chart.
    """
    p = np.asarray(p, dtype=float)
    if t <= 0:
        raise ValueError("sphere radius must be positive")
    if model.dim == 2:
        theta = 2 * np.pi * np.arange(count) / count
        dirs = _directions(model, p, theta)
    else:
        theta = None
        dirs = unit_directions(model, p, count, seed)
    res = flow(model, np.broadcast_to(p, dirs.shape), dirs, t)
    return SphereSample(p, float(t), theta, dirs, res.x, res.y, res.alive)


def _segment_length(model, X, S):
    """F-length of the chart segments X -> S; shapes (..., n)."""
    d = S - X
    tau = 0.5 * (_GL_NODES + 1.0)
    pts = X[..., None, :] + tau[:, None] * d[..., None, :]
    vals = model.F(pts, np.broadcast_to(d[..., None, :], pts.shape))
    return 0.5 * vals @ _GL_WEIGHTS


def _shoot_safe(model, X, S, W0=None):
    """Shoot X -> S (rows); retry unconverged rows from the segment guess."""
    shot = shoot(model, X, S, W0)
    d, w, ok = shot.d.copy(), shot.w.copy(), shot.converged.copy()
    if W0 is not None and not ok.all():
        bad = np.flatnonzero(~ok)
        retry = shoot(model, X[bad], S[bad])
        d[bad], w[bad], ok[bad] = retry.d, retry.w, retry.converged
    d[~ok] = np.inf
    return d, w, ok


@dataclass(frozen=True)
class SphereDistance:
    d: np.ndarray
    w: np.ndarray
    theta: np.ndarray | None
    target: np.ndarray
    target_velocity: np.ndarray


def distance_to_sphere(model: MetricModel, sphere: SphereSample, X, top: int = 8,
                       bracket: float = 1e-4, refine: bool = True,
                       strict: bool = True) -> SphereDistance:
    """d(x, S(p, t)) for each row of X, with the minimizing sphere point.

    Golden-section search shrinks the angle bracket to ``bracket``; a final
    parabolic step through the three best points then places the angle to
    about bracket**3 (far below 1e-8 rad), since the distance is smooth
    and quadratic near its minimum.

    Returns the distance, the initial velocity w at x (time-1) of the
    minimal geodesic, its sphere parameter and end point.  Query points from
    which no sampled sphere point can be reached raise
    :class:`ShootingError`, or with ``strict=False`` get NaN entries.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape
    idx_alive = np.flatnonzero(sphere.alive)
    if idx_alive.size == 0:
        raise ChartError("forward sphere leaves the chart in every direction")
    P = sphere.points[idx_alive]
    proxy = _segment_length(model, X[:, None, :], np.broadcast_to(P, (m,) + P.shape))
    k = min(top, P.shape[0])
    cand = np.argsort(proxy, axis=1)[:, :k]
    Xr = np.repeat(X, k, axis=0)
    Sr = P[cand.ravel()]
    d, w, ok = _shoot_safe(model, Xr, Sr)
    d = d.reshape(m, k)
    w = w.reshape(m, k, n)
    reach = np.isfinite(d).any(axis=1)
    if not reach.all():
        if strict:
            raise ShootingError("no sphere point reachable by shooting from some query points")
        out = [np.full(m, np.nan), np.full((m, n), np.nan), np.full(m, np.nan),
               np.full((m, n), np.nan), np.full((m, n), np.nan)]
        if reach.any():
            part = distance_to_sphere(model, sphere, X[reach], top, bracket, refine)
            for arr, val in zip(out, (part.d, part.w, part.theta, part.target, part.target_velocity)):
                arr[reach] = np.nan if val is None else val
        return SphereDistance(*out)
    j = np.argmin(d, axis=1)
    rows = np.arange(m)
    best_i = idx_alive[cand[rows, j]]
    best_d, best_w = d[rows, j], w[rows, j]
    if not (refine and sphere.theta is not None):
        return SphereDistance(best_d, best_w, None if sphere.theta is None else sphere.theta[best_i],
                              sphere.points[best_i], sphere.velocities[best_i])

    p, t = sphere.p, sphere.t
    step = 2 * np.pi / len(sphere.theta)
    th0 = sphere.theta[best_i]
    a, b = th0 - step, th0 + step

    def evaluate(theta, w0):
        dirs = _directions(model, p, theta)
        res = flow(model, np.broadcast_to(p, dirs.shape), dirs, t)
        dd, ww, okk = _shoot_safe(model, X, res.x, w0)
        dd = np.where(res.alive, dd, np.inf)
        return dd, ww, res.x, res.y

    c = b - GOLDEN * (b - a)
    e = a + GOLDEN * (b - a)
    fc, wc, _, _ = evaluate(c, best_w)
    fe, we, _, _ = evaluate(e, best_w)
    fa = np.full(m, np.inf)
    fb = np.full(m, np.inf)
    while np.max(b - a) > bracket:
        left = fc < fe
        fa, fb = np.where(left, fa, fc), np.where(left, fe, fb)
        a, b = np.where(left, a, c), np.where(left, e, b)
        c_new = np.where(left, b - GOLDEN * (b - a), e)
        e_new = np.where(left, c, a + GOLDEN * (b - a))
        probe = np.where(left, c_new, e_new)
        fp, wp, _, _ = evaluate(probe, np.where(left[:, None], wc, we))
        fc, fe = np.where(left, fp, fe), np.where(left, fc, fp)
        wc, we = np.where(left[:, None], wp, we), np.where(left[:, None], wc, wp)
        c, e = c_new, e_new
    # one parabolic step through the best interior point and its neighbours
    left = fc < fe
    x2, f2 = np.where(left, c, e), np.where(left, fc, fe)
    x1, f1 = np.where(left, a, c), np.where(left, fa, fc)
    x3, f3 = np.where(left, e, b), np.where(left, fe, fb)
    num = (x2 - x1) ** 2 * (f2 - f3) - (x2 - x3) ** 2 * (f2 - f1)
    den = (x2 - x1) * (f2 - f3) - (x2 - x3) * (f2 - f1)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = x2 - 0.5 * num / den
    usable = np.isfinite(theta) & (theta > a) & (theta < b)
    theta = np.where(usable, theta, x2)
    fin, win, xs, ys = evaluate(theta, np.where(left[:, None], wc, we))
    keep = fin <= f2
    fin = np.where(keep, fin, f2)
    win = np.where(keep[:, None], win, np.where(left[:, None], wc, we))
    theta = np.where(keep, theta, x2)
    if not keep.all():
        _, _, xs2, ys2 = evaluate(theta, win)
        xs, ys = np.where(keep[:, None], xs, xs2), np.where(keep[:, None], ys, ys2)
    better = fin <= best_d
    out_d = np.where(better, fin, best_d)
    out_w = np.where(better[:, None], win, best_w)
    out_th = np.where(better, theta, th0)
    out_x = np.where(better[:, None], xs, sphere.points[best_i])
    out_y = np.where(better[:, None], ys, sphere.velocities[best_i])
    return SphereDistance(out_d, out_w, out_th, out_x, out_y)


def busemann_values(model: MetricModel, p, t: float, X, sphere: SphereSample | None = None,
                    count: int = 256, strict: bool = True, top: int = 8) -> np.ndarray:
    """b_p^t(x) = t - d(x, S(p, t)) for the rows of X (NaN where the sphere
    is unreachable and ``strict`` is off)."""
    sphere = forward_sphere(model, p, t, count) if sphere is None else sphere
    return t - distance_to_sphere(model, sphere, X, top=top, strict=strict).d


def busemann_partial(model: MetricModel, p, t: float, x) -> float:
    """b_p^t(x) at a single point."""
    return float(busemann_values(model, p, t, np.atleast_2d(x))[0])


def pairwise_distances(model: MetricModel, A, B) -> np.ndarray:
    """Forward distances d(A_i, B_j) by shooting, shape (len(A), len(B))."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    X = np.repeat(A, len(B), axis=0)
    Y = np.tile(B, (len(A), 1))
    d, _, ok = _shoot_safe(model, X, Y)
    if not ok.all():
        from .geodesics import distance
        for i in np.flatnonzero(~ok):
            r = distance(model, X[i], Y[i], path=False)
            d[i] = r.d
    return d.reshape(len(A), len(B))


@dataclass
class BusemannField:
    """b_p^t on a set of probe points for an increasing horizon schedule."""

    model: MetricModel
    p: np.ndarray
    requested: tuple
    horizons: np.ndarray
    probes: np.ndarray
    values: np.ndarray  # (len(horizons), len(probes))
    limit_estimate: np.ndarray
    gap: np.ndarray
    spheres: dict = field(repr=False)
    d_from_p: np.ndarray = field(repr=False)
    d_to_p: np.ndarray = field(repr=False)
    d_pairs: np.ndarray = field(repr=False)
    checks: dict = field(default_factory=dict)
    slack: float = 1e-5

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def verify(self) -> dict:
        """Evaluate the bounds, monotonicity and Lipschitz laws."""
        s = self.slack
        V = self.values
        lower = -self.d_to_p[None, :] - V
        upper = V - self.d_from_p[None, :]
        bounds = float(max(lower.max(), upper.max()))
        # monotonicity in t holds only once the probe lies in the smaller ball
        inside = self.d_from_p[None, :] <= self.horizons[:-1, None] + s
        rise = np.diff(V, axis=0)
        mono = float(np.max(rise[inside])) if inside.any() else -np.inf
        D = self.d_pairs
        lip = -np.inf
        lip_sym = -np.inf
        for row in V:
            diff = row[:, None] - row[None, :]
            lip = max(lip, float(np.max(np.maximum(-D - diff, diff - D.T))))
            lip_sym = max(lip_sym, float(np.max(np.abs(diff) - np.maximum(D, D.T))))
        self.checks = {
            "bounds": {"max_violation": bounds, "tolerance": s, "passed": bounds <= s},
            "monotone": {"max_increase": mono, "tolerance": s, "passed": mono <= s,
                         "checked": int(inside.sum())},
            "lipschitz": {"max_violation": lip, "tolerance": s, "passed": lip <= s},
            "lipschitz_symmetric": {"max_violation": lip_sym, "tolerance": s, "passed": lip_sym <= s},
        }
        return self.checks

    def at(self, X, strict: bool = True, top: int = 8) -> np.ndarray:
        """b_p^t at new points for the last achieved horizon; ``top`` is the
        number of coarse sphere candidates shot exactly per point."""
        t = float(self.horizons[-1])
        return busemann_values(self.model, self.p, t, X, self.spheres[t], strict=strict, top=top)


def busemann_estimate(model: MetricModel, p, probes, horizons=(1.0, 2.0, 4.0, 8.0),
                      count: int = 256, slack: float = 1e-5) -> BusemannField:
    """Evaluate b_p^t on ``probes`` for each horizon whose sphere fits the chart.

    The limit estimate is the value at the last achieved horizon, with the
    Cauchy gap to the previous one.  Horizons whose forward sphere leaves
    the chart are skipped (the achieved list is recorded).
    """
    p = np.asarray(p, dtype=float)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if list(horizons) != sorted(horizons):
        raise ValueError("horizon schedule must be increasing")
    spheres, values, achieved = {}, [], []
    for t in horizons:
        sph = forward_sphere(model, p, float(t), count)
        if not sph.complete:
            continue
        spheres[float(t)] = sph
        achieved.append(float(t))
        values.append(float(t) - distance_to_sphere(model, sph, probes).d)
    if not achieved:
        raise ChartError("no horizon of the schedule fits in the chart")
    V = np.array(values)
    gap = np.abs(V[-1] - V[-2]) if len(V) > 1 else np.full(len(probes), np.nan)
    d_from = pairwise_distances(model, p, probes)[0]
    d_to = pairwise_distances(model, probes, p)[:, 0]
    D = pairwise_distances(model, probes, probes)
    np.fill_diagonal(D, 0.0)
    fld = BusemannField(model, p, tuple(horizons), np.array(achieved), probes, V, V[-1], gap,
                        spheres, d_from, d_to, D, slack=slack)
    fld.verify()
    return fld


@dataclass
class RayWitness:
    """A ray from q asymptotic to the Busemann function of p."""

    q: np.ndarray
    direction: np.ndarray
    path: GeodesicPath
    horizons: np.ndarray
    directions: np.ndarray
    cauchy_gap: float
    t_grid: np.ndarray
    support_residuals: np.ndarray
    affine_residuals: np.ndarray
    b_q: float
    support_tol: float = 1e-4
    affine_tol: float = 5e-3

    @property
    def passed(self) -> bool:
        return bool(np.all(self.support_residuals >= -self.support_tol)
                    and np.all(self.affine_residuals <= self.affine_tol))


def extract_ray(model: MetricModel, p, q, horizons=(1.0, 2.0, 4.0, 8.0), field_: BusemannField | None = None,
                probes=None, t_grid=None, count: int = 256) -> RayWitness:
    """Construct the ray sigma_q as the limit of minimal geodesics from q to
    the nearest points of S(p, t_k), and test support and affinity.

    ``field_`` supplies b_p on the probes (built from ``probes`` if absent;
    q is always included as the first probe).  Support residuals are
    min over probes x of b_p(x) - [b_p(q) + t - d(x, sigma_q(t))]; affine
    residuals are |b_p(sigma_q(t)) - b_p(q) - t|, for t in ``t_grid``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.allclose(p, q):
        raise ValueError("q must differ from p")
    if field_ is None:
        pr = q[None, :] if probes is None else np.vstack([q, np.atleast_2d(probes)])
        field_ = busemann_estimate(model, p, pr, horizons, count)
    hz = field_.horizons
    dirs = []
    for t in hz:
        sd = distance_to_sphere(model, field_.spheres[float(t)], q[None, :])
        u = sd.w[0] / model.F(q, sd.w[0])
        dirs.append(u)
    dirs = np.array(dirs)
    gap = float(np.linalg.norm(dirs[-1] - dirs[-2])) if len(dirs) > 1 else float("nan")
    u = dirs[-1]
    b_q = float(field_.at(q[None, :])[0])
    if t_grid is None:
        room = hz[-1] - b_q
        t_grid = [t for t in (0.25, 0.5, 1.0, 2.0) if t <= 0.5 * room] or [0.25 * room]
    t_grid = np.asarray(t_grid, dtype=float)
    path = integrate_geodesic(model, q, u, float(t_grid.max()))
    if path.truncated:
        t_grid = t_grid[t_grid <= path.t_end]
    Z = path.point(t_grid)
    bZ = field_.at(Z)
    affine = np.abs(bZ - b_q - t_grid)
    X = field_.probes
    dXZ = pairwise_distances(model, X, Z)
    support = np.min(field_.limit_estimate[:, None] - (b_q + t_grid[None, :] - dXZ), axis=0)
    return RayWitness(q, u, path, hz, dirs, gap, t_grid, support, affine, b_q)


def small_ends_ratio(model: MetricModel, p, r_schedule, count: int = 64, top: int = 8):
    """Diam(S(p, r)) / r for each r.

    The diameter is the max of d(u, w) over ordered pairs of ``count``
    sphere samples: pairs are ranked by the F-length of the chart segment and
    the ``top`` best are shot exactly (multi-start).  A flag marks radii whose
    maximizing pair touches a direction lost to the chart boundary.
    Returns a list of dicts (r, diam, ratio, partial, boundary_hit).
    """
    from .geodesics import distance
    out = []
    for r in r_schedule:
        sph = forward_sphere(model, p, float(r), count)
        idx = np.flatnonzero(sph.alive)
        P = sph.points[idx]
        proxy = _segment_length(model, P[:, None, :], np.broadcast_to(P, (len(P),) + P.shape))
        order = np.argsort(proxy, axis=None)[::-1][:top]
        ii, jj = np.unravel_index(order, proxy.shape)
        best, pair = -np.inf, None
        for i, j in zip(ii, jj):
            if i == j:
                continue
            res = distance(model, P[i], P[j], seeds=16, path=False)
            if res.converged and res.d > best:
                best, pair = res.d, (idx[i], idx[j])
        boundary = False
        if pair is not None and not sph.complete:
            for k in pair:
                boundary |= (not sph.alive[(k - 1) % count]) or (not sph.alive[(k + 1) % count])
        out.append({"r": float(r), "diam": float(best), "ratio": float(best / r),
                    "partial": not sph.complete, "boundary_hit": bool(boundary)})
    return out


@dataclass
class DiniReport:
    r: np.ndarray
    values: np.ndarray
    estimate: float
    increasing: bool


def dini_convexity(model: MetricModel, f: Callable, p, v,
                   r_seq=(1e-1, 5e-2, 2.5e-2, 1.25e-2)) -> DiniReport:
    """Surrogate for liminf_{r->0} [f(c(r)) + f(c(-r)) - 2 f(c(0))] / r^2.

    c is the F-geodesic with c(0) = p, c'(0) = v (v is rescaled to F-unit);
    c(-r) follows the same geodesic backward.  The estimate is the minimum
    over the finite r grid; ``increasing`` reports a sequence that grows as
    r shrinks (a kink, where the liminf is +inf).
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    v = v / model.F(p, v)
    r = np.asarray(r_seq, dtype=float)
    f0 = float(f(p))
    vals = []
    for s in r:
        fw = flow(model, p, v, s, rtol=1e-13, atol=1e-15)
        bw = flow(model, p, v, -s, rtol=1e-13, atol=1e-15)
        if not (fw.alive.all() and bw.alive.all()):
            raise ChartError("geodesic leaves the chart")
        vals.append((f(fw.x[0]) + f(bw.x[0]) - 2 * f0) / s ** 2)
    vals = np.array(vals, dtype=float)
    increasing = bool(np.all(np.diff(vals) > 0) and vals[-1] > 2 * abs(vals[0]) + 1e-12)
    return DiniReport(r, vals, float(vals.min()), increasing)
