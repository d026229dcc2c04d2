"""Geodesics, parallel transport, the exponential map and forward distance.

The geodesic equation ``x'' + 2 G(x, x') = 0`` is integrated with scipy's
DOP853 (an explicit Runge-Kutta 8(5,3) pair with a 7th-order dense output).
Batches of geodesics are integrated as one ODE system; a row that leaves the
chart is frozen in place and reported as not alive.

Shooting for ``exp_p(w) = q`` uses Newton's method with the exact Jacobian
``dx(1)/dw`` obtained by integrating the variational equation alongside the
geodesic, with step halving as damping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, solve_ivp
from scipy.interpolate import CubicSpline

from .errors import ChartError, DegenerateError, ShootingError
from .metrics import MetricModel
from .spray import spray_fields

__all__ = [
    "GeodesicPath",
    "ParallelFrame",
    "FlowResult",
    "ShotResult",
    "DistanceResult",
    "flow",
    "exp_map",
    "integrate_geodesic",
    "parallel_transport",
    "covariant_derivative",
    "geodesic_curvature",
    "shoot",
    "distance",
    "unit_directions",
]

RTOL = 1e-10
ATOL = 1e-10
# relative width of the band past the chart boundary where flows still evaluate
EXTENSION = 1e-3


def _rhs(model: MetricModel, batch: int, frames: int, jacobian: bool, extended: float = 0.0):
    n = model.dim
    width = 2 * n + frames * n + (2 * n * n if jacobian else 0)
    guard = model.guard()
    order = 1 if (frames or jacobian) else 0
    x_order = 1 if jacobian else 0

    def f(t, s):
        S = s.reshape(batch, width)
        x, y = S[:, :n], S[:, n:2 * n]
        out = np.zeros_like(S)
        # rows are evaluated slightly past the chart boundary (the metric is
        # still defined there) so that an exit does not make the right-hand
        # side jump; callers drop rows once an accepted step leaves the chart
        live = np.all(np.isfinite(S), axis=1)
        if extended:
            live &= model.chart.contains(x, margin=-extended)
        else:
            live &= model.chart.contains(x)
        moving = live & (np.max(np.abs(y), axis=1) >= guard)
        if not moving.any():
            return out.ravel()
        xa, ya = x[moving], y[moving]
        with np.errstate(all="ignore"):
            G, N, Gx = spray_fields(model, xa, ya, bool(order), bool(x_order))
        rows = out[moving]
        rows[:, :n] = ya
        rows[:, n:2 * n] = -2.0 * G
        col = 2 * n
        if frames:
            E = S[moving, col:col + frames * n].reshape(-1, frames, n)
            rows[:, col:col + frames * n] = -np.einsum("bij,bkj->bki", N, E).reshape(-1, frames * n)
            col += frames * n
        if jacobian:
            Dx = S[moving, col:col + n * n].reshape(-1, n, n)
            Dy = S[moving, col + n * n:].reshape(-1, n, n)
            rows[:, col:col + n * n] = Dy.reshape(-1, n * n)
            rows[:, col + n * n:] = (-2.0 * (Gx @ Dx + N @ Dy)).reshape(-1, n * n)
        rows[~np.all(np.isfinite(rows), axis=1)] = 0.0
        out[moving] = rows
        return out.ravel()

    return f, width


@dataclass(frozen=True)
class FlowResult:
    """End state of a batch of geodesics after time ``t``."""

    x: np.ndarray
    y: np.ndarray
    alive: np.ndarray
    frames: np.ndarray | None = None
    dx_dy0: np.ndarray | None = None


def flow(model: MetricModel, x0, y0, t: float = 1.0, frames=None, jacobian: bool = False,
         rtol: float = RTOL, atol: float = ATOL) -> FlowResult:
    """Integrate a batch of geodesics ``(x0, y0)`` of shape (B, n) for time t.

    ``t`` may be negative (backward flow along the same geodesics).
    ``frames`` (B, k, n) are parallel transported along.  With ``jacobian``
    the derivative of x(t) with respect to y0 is returned as well.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    x0, y0 = np.broadcast_arrays(x0, y0)
    B, n = x0.shape
    k = 0 if frames is None else np.asarray(frames).shape[-2]
    f, width = _rhs(model, B, k, jacobian)
    S0 = np.zeros((B, width))
    S0[:, :n], S0[:, n:2 * n] = x0, y0
    col = 2 * n
    if k:
        S0[:, col:col + k * n] = np.broadcast_to(frames, (B, k, n)).reshape(B, k * n)
        col += k * n
    if jacobian:
        S0[:, col + n * n:] = np.broadcast_to(np.eye(n), (B, n, n)).reshape(B, n * n)
    alive0 = model.chart.contains(x0)
    S = S0.copy()
    if t != 0:
        S = _integrate_batch(model, S0, alive0, float(t), k, jacobian, rtol, atol)
    alive = alive0 & model.chart.contains(S[:, :n]) & np.all(np.isfinite(S), axis=1)
    col = 2 * n
    E = S[:, col:col + k * n].reshape(B, k, n) if k else None
    col += k * n
    D = S[:, col:col + n * n].reshape(B, n, n) if jacobian else None
    return FlowResult(S[:, :n].copy(), S[:, n:2 * n].copy(), alive, E, D)


def _integrate_batch(model, S0, alive0, t, k, jacobian, rtol, atol):
    """Step DOP853 over the rows of S0; a row that ends an accepted step
    outside the chart is frozen there and the solver restarts without it."""
    B, width = S0.shape
    n = model.dim
    ext = EXTENSION * model.chart.scale
    S = S0.copy()
    rows = np.flatnonzero(alive0 & np.all(np.isfinite(S0), axis=1))
    t0 = 0.0
    while rows.size and t0 != t:
        f, _ = _rhs(model, rows.size, k, jacobian, ext)
        solver = DOP853(f, t0, S[rows].ravel(), t, rtol=rtol, atol=atol)
        while True:
            msg = solver.step()
            if solver.status == "failed":
                raise ShootingError(f"geodesic integration failed: {msg}")
            cur = solver.y.reshape(rows.size, width)
            out = ~(model.chart.contains(cur[:, :n]) & np.all(np.isfinite(cur), axis=1))
            if out.any() or solver.status == "finished":
                S[rows] = cur
                t0 = solver.t
                rows = rows[~out]
                break
    return S


def exp_map(model: MetricModel, x, y, t: float = 1.0):
    """exp_x(t y) for batched (x, y); returns the end points and an alive mask."""
    res = flow(model, x, y, t)
    return res.x, res.alive


# ---------------------------------------------------------------------------
# single paths with dense output
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """A geodesic t -> x(t) on [0, t_end] (or [t_end, 0] when integrated
    backward), with dense output and optionally parallel frames."""

    model: MetricModel
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sol: object
    t_end: float
    truncated: bool
    speed: float
    n_frames: int = 0
    frames: np.ndarray | None = None

    @property
    def x0(self):
        return self.x[0]

    @property
    def y0(self):
        return self.y[0]

    def state(self, t):
        return self.sol(t)

    def point(self, t):
        return self.sol(t)[: self.model.dim].T

    def velocity(self, t):
        n = self.model.dim
        return self.sol(t)[n:2 * n].T

    def frame(self, t):
        """Parallel frames at t, shape (..., k, n)."""
        n, k = self.model.dim, self.n_frames
        s = np.asarray(self.sol(t))
        E = s[2 * n:2 * n + k * n]
        return np.moveaxis(E, 0, -1).reshape(np.shape(t) + (k, n))

    def speed_drift(self) -> float:
        F = self.model.F(self.x, self.y)
        return float(np.max(np.abs(F - self.speed)) / self.speed)

    def residual(self, h: float = 1e-4) -> float:
        """Max of |x'' + 2G(x, x')| at sample midpoints, via the dense output."""
        n = self.model.dim
        tm = 0.5 * (self.t[1:] + self.t[:-1])
        step = h * abs(self.t_end)
        lo, hi = sorted((self.t[0], self.t[-1]))
        tm = np.clip(tm, lo + step, hi - step)
        acc = (self.sol(tm + step)[n:2 * n] - self.sol(tm - step)[n:2 * n]) / (2 * step)
        xs, ys = self.sol(tm)[:n].T, self.sol(tm)[n:2 * n].T
        G = spray_fields(self.model, xs, ys)[0]
        return float(np.max(np.abs(acc.T + 2 * G)))


def integrate_geodesic(model: MetricModel, x0, y0=None, T_max: float = 1.0, frames=None,
                       rtol: float = RTOL, atol: float = ATOL) -> GeodesicPath:
    """Integrate the geodesic with x(0) = x0, x'(0) = y0 up to time T_max.

    Negative ``T_max`` integrates backward.  Integration stops at the chart
    boundary; the returned path then carries ``truncated=True``.
    ``frames`` is an optional (k, n) array of vectors transported parallel
    along the path.
    """
    if y0 is None and hasattr(x0, "y"):
        x0, y0 = x0.x, x0.y
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    model.validate(x0, y0)
    n = model.dim
    k = 0 if frames is None else np.atleast_2d(frames).shape[0]
    f, width = _rhs(model, 1, k, False)
    S0 = np.zeros(width)
    S0[:n], S0[n:2 * n] = x0, y0
    if k:
        S0[2 * n:] = np.atleast_2d(np.asarray(frames, dtype=float)).ravel()

    def leave(t, s):
        return model.chart.margin(s[:n])

    leave.terminal = True
    leave.direction = -1
    sol = solve_ivp(f, (0.0, float(T_max)), S0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=leave)
    if sol.status < 0:
        raise ShootingError(f"geodesic integration failed: {sol.message}")
    S = sol.y.T
    return GeodesicPath(
        model=model, t=sol.t, x=S[:, :n], y=S[:, n:2 * n], sol=sol.sol,
        t_end=float(sol.t[-1]), truncated=sol.status == 1,
        speed=float(model.F(x0, y0)), n_frames=k,
        frames=S[:, 2 * n:].reshape(-1, k, n) if k else None,
    )


@dataclass(frozen=True, eq=False)
class ParallelFrame:
    """A parallel vector field E along a geodesic path."""

    path: GeodesicPath
    t: np.ndarray
    E: np.ndarray
    sol: object

    def __call__(self, t):
        return np.asarray(self.sol(t)).T

    def residual(self, h: float = 1e-4) -> float:
        """Max |E' + N(x, x') E| at sample midpoints."""
        tm = 0.5 * (self.t[1:] + self.t[:-1])
        step = h * abs(self.path.t_end)
        lo, hi = sorted((self.t[0], self.t[-1]))
        tm = np.clip(tm, lo + step, hi - step)
        dE = (self.sol(tm + step) - self.sol(tm - step)).T / (2 * step)
        N = spray_fields(self.path.model, self.path.point(tm), self.path.velocity(tm), True)[1]
        return float(np.max(np.abs(dE + np.einsum("bij,bj->bi", N, self(tm)))))


def parallel_transport(model: MetricModel, path: GeodesicPath, v0,
                       rtol: float = RTOL, atol: float = ATOL) -> ParallelFrame:
    """Solve E' = -N(x(t), x'(t)) E along the dense output of ``path``."""
    v0 = np.asarray(v0, dtype=float)
    if np.max(np.abs(v0)) == 0:
        raise DegenerateError("v0 must be nonzero")

    def f(t, E):
        N = spray_fields(model, path.point(t), path.velocity(t), True)[1]
        return -N @ E

    sol = solve_ivp(f, (path.t[0], path.t_end), v0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True)
    return ParallelFrame(path, sol.t, sol.y.T, sol.sol)


def _derivative(t, F):
    return CubicSpline(t, F, axis=0).derivative()(t)


def covariant_derivative(model: MetricModel, t, X, U, Xdot=None, Udot=None) -> np.ndarray:
    """D_{x'} U = U' + N(x, x') U along sampled curve data.

    ``X`` and ``U`` are (m, n) samples on the grid ``t``; missing derivatives
    are taken from cubic splines through the samples.
    """
    t = np.asarray(t, dtype=float)
    X, U = np.asarray(X, dtype=float), np.asarray(U, dtype=float)
    if X.shape != U.shape or X.shape[0] != t.shape[0]:
        raise ValueError(f"grid mismatch: t{t.shape}, X{X.shape}, U{U.shape}")
    Xdot = _derivative(t, X) if Xdot is None else np.asarray(Xdot, dtype=float)
    Udot = _derivative(t, U) if Udot is None else np.asarray(Udot, dtype=float)
    N = spray_fields(model, X, Xdot, True)[1]
    return Udot + np.einsum("bij,bj->bi", N, U)


def geodesic_curvature(model: MetricModel, curve, s, h: float = 1e-3) -> np.ndarray:
    """kappa(s) = [H'' + 2 G(H, H')] / F(H, H')^2 for a curve s -> H(s).

    ``curve`` is a :class:`GeodesicPath` (velocity from the path, H'' by
    differencing the dense velocity) or a callable returning points, which
    is differenced with 5-point stencils of step ``h``.
    """
    s = float(s)
    if isinstance(curve, GeodesicPath):
        x, v = curve.point(s), curve.velocity(s)
        acc = (curve.velocity(s + h) - curve.velocity(s - h)) / (2 * h)
    else:
        pts = np.array([curve(s + k * h) for k in (-2, -1, 0, 1, 2)], dtype=float)
        x = pts[2]
        v = (pts[0] - 8 * pts[1] + 8 * pts[3] - pts[4]) / (12 * h)
        acc = (-pts[0] + 16 * pts[1] - 30 * pts[2] + 16 * pts[3] - pts[4]) / (12 * h * h)
    if np.max(np.abs(v)) < model.guard():
        raise DegenerateError("curve velocity below the guard radius")
    G = spray_fields(model, x, v)[0]
    return (acc + 2 * G) / model.F(x, v) ** 2


# ---------------------------------------------------------------------------
# shooting and distance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShotResult:
    """Initial velocities w with exp_p(w) = q (time 1), per batch row."""

    w: np.ndarray
    d: np.ndarray
    converged: np.ndarray
    residual: np.ndarray
    iterations: int


def shoot(model: MetricModel, p, q, w0=None, max_iter: int = 40, tol: float | None = None,
          halvings: int = 20) -> ShotResult:
    """Batched damped Newton for exp_p(w) = q at time 1.

    ``p, q, w0`` have shape (B, n) (broadcast); the default initial guess is
    the coordinate segment w0 = q - p.  The length of the resulting geodesic
    is d = F(p, w).  Rows that fail to converge are reported, not raised.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if w0 is None:
        p, q = np.broadcast_arrays(p, q)
        w = (q - p).copy()
    else:
        p, q, w = (np.array(a, dtype=float) for a in np.broadcast_arrays(p, q, np.atleast_2d(w0)))
    B, n = p.shape
    tol = 1e-10 * max(model.chart.scale, 1.0) if tol is None else tol
    same = np.max(np.abs(q - p), axis=1) <= tol
    w[same] = 0.0

    res = np.full(B, np.inf)
    Jac = np.zeros((B, n, n))
    active = ~same
    if active.any():
        fr = flow(model, p[active], w[active], 1.0, jacobian=True)
        r = np.where(fr.alive, np.linalg.norm(fr.x - q[active], axis=1), np.inf)
        res[active], Jac[active] = r, fr.dx_dy0
        err = fr.x - q[active]
    res[same] = 0.0
    errs = np.zeros((B, n))
    if active.any():
        errs[active] = err
    it = 0
    for it in range(1, max_iter + 1):
        todo = np.flatnonzero(np.isfinite(res) & (res > tol))
        if todo.size == 0:
            break
        try:
            step = -np.linalg.solve(Jac[todo], errs[todo][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = -np.einsum("bij,bj->bi", np.linalg.pinv(Jac[todo]), errs[todo])
        # trust radius: never move w by more than half its size (or of q - p)
        radius = 0.5 * np.maximum(np.linalg.norm(w[todo], axis=1), np.linalg.norm(q[todo] - p[todo], axis=1))
        lam = np.minimum(1.0, radius / np.maximum(np.linalg.norm(step, axis=1), 1e-300))
        pending = np.arange(todo.size)
        for _ in range(halvings + 1):
            rows = todo[pending]
            trial = w[rows] + lam[pending, None] * step[pending]
            fr = flow(model, p[rows], trial, 1.0, jacobian=True)
            r = np.where(fr.alive, np.linalg.norm(fr.x - q[rows], axis=1), np.inf)
            ok = r < res[rows]
            acc = rows[ok]
            w[acc], res[acc], Jac[acc], errs[acc] = trial[ok], r[ok], fr.dx_dy0[ok], (fr.x - q[rows])[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            lam[pending] *= 0.5
        if pending.size:
            # no decrease possible at this resolution: give up on those rows
            res[todo[pending]] = np.inf
    converged = np.isfinite(res) & (res <= tol)
    d = model.F(p, w)
    d = np.where(same, 0.0, d)
    return ShotResult(w, d, converged, res, it)


def unit_directions(model: MetricModel, x, count: int, seed=0) -> np.ndarray:
    """``count`` F-unit vectors at x: an angular grid in 2D, random otherwise."""
    x = np.asarray(x, dtype=float)
    if model.dim == 2:
        th = 2 * np.pi * np.arange(count) / count
        d = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        rng = np.random.default_rng(seed)
        d = rng.normal(size=(count, model.dim))
    return d / model.F(np.broadcast_to(x, d.shape), d)[:, None]


@dataclass(frozen=True, eq=False)
class DistanceResult:
    d: float
    w: np.ndarray
    converged: bool
    ambiguous: bool
    candidates: np.ndarray = field(repr=False)
    path: GeodesicPath | None = field(default=None, repr=False)


def distance(model: MetricModel, p, q, seeds: int = 32, path: bool = True,
             seed: int = 0) -> DistanceResult:
    """Forward distance d(p, q) by multi-start shooting.

    Tries the coordinate segment plus ``seeds`` initial directions (angular
    grid in 2D) and keeps the shortest converged geodesic.  Two converged
    shots of equal length (1e-6) whose initial directions differ by more
    than 1e-2 rad mark the pair as ambiguous (near the cut locus).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if not (model.chart.contains(p) and model.chart.contains(q)):
        raise ChartError("p and q must lie in the chart")
    base = q - p
    scale = np.linalg.norm(base)
    w0 = [base]
    if seeds and scale > 0:
        dirs = unit_directions(model, p, seeds, seed)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * scale
        w0.extend(dirs)
    w0 = np.array(w0)
    shot = shoot(model, p, q, w0)
    ok = np.flatnonzero(shot.converged)
    if ok.size == 0:
        return DistanceResult(np.inf, base, False, False, np.zeros((0, model.dim + 1)))
    cand = np.column_stack([shot.d[ok], shot.w[ok]])
    best = ok[np.argmin(shot.d[ok])]
    d, w = float(shot.d[best]), shot.w[best]
    ambiguous = False
    if scale > 0:
        for i in ok:
            if abs(shot.d[i] - d) < 1e-6:
                cosang = shot.w[i] @ w / (np.linalg.norm(shot.w[i]) * np.linalg.norm(w))
                if np.arccos(np.clip(cosang, -1, 1)) > 1e-2:
                    ambiguous = True
    gp = integrate_geodesic(model, p, w, 1.0) if path and scale > 0 else None
    return DistanceResult(d, w, True, ambiguous, cand, gp)
