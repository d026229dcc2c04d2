"""Finsler metrics on a single coordinate chart.

A :class:`MetricModel` wraps a function ``f2(x, y)`` returning F(x, y)^2.
The function receives two sequences of length n whose entries may be plain
floats, numpy arrays (a batch) or :class:`~finslerkit.jets.Jet` objects, so it
must be written with arithmetic operators and the dispatching helpers of
:mod:`finslerkit.jets` (``sqrt``, ``exp``, ...).  Everything downstream, from
the fundamental tensor to the weighted flag curvature, is obtained from this
single callable by jet propagation.

Catalog (``make_model``):

``euclid``      F = |y| on R^n.
``riemannian``  F^2 = a_ij(x) y^i y^j.  Presets ``sphere`` (stereographic chart
                of the unit round sphere, K = 1), ``poincare`` (Poincare disk,
                K = -1) and ``flat``.
``randers``     F = |y| + eps * y^1 on R^2, |eps| < 1.  Flat, not reversible.
``funk``        The Funk metric of the unit ball.  Projectively flat with
                K = -1/4; positively complete but not backward complete.  The
                default chart is the ball of radius 0.995, which bounds the
                reachable forward spheres to radius about 5.3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import jets
from .errors import ChartError, DegenerateError, MetricError
from .jets import jet_space

__all__ = [
    "Ball",
    "Box",
    "MetricModel",
    "Tangent",
    "Flag",
    "MinkowskiReport",
    "make_model",
    "make_flag",
    "catalog_names",
    "fundamental_tensor",
    "cartan_torsion",
    "check_minkowski",
    "sample_tangents",
]

Y_GUARD = 1e-8


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    @property
    def scale(self) -> float:
        return float(self.radius)

    def margin(self, x) -> np.ndarray:
        """Signed distance to the boundary, positive inside."""
        x = np.asarray(x, dtype=float)
        return self.radius - np.linalg.norm(x - np.asarray(self.center), axis=-1)

    def contains(self, x, margin: float = 0.0):
        return self.margin(x) > margin

    def sample(self, rng, count: int, fill: float = 0.7) -> np.ndarray:
        n = len(self.center)
        d = rng.normal(size=(count, n))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        r = fill * self.radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
        return np.asarray(self.center) + r * d


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    @property
    def scale(self) -> float:
        return float(np.max(np.asarray(self.hi) - np.asarray(self.lo)) / 2)

    def margin(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.minimum(x - np.asarray(self.lo), np.asarray(self.hi) - x).min(axis=-1)

    def contains(self, x, margin: float = 0.0):
        return self.margin(x) > margin

    def sample(self, rng, count: int, fill: float = 0.7) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        mid, half = (lo + hi) / 2, fill * (hi - lo) / 2
        return mid + half * rng.uniform(-1, 1, size=(count, len(lo)))


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricModel:
    """A Finsler metric on one chart.

    Instances are immutable and hash by identity, which lets the connection
    layer memoize per (model, point) without stale entries.
    """

    name: str
    dim: int
    f2: Callable
    chart: Ball | Box
    reversible: bool = False
    params: Mapping = field(default_factory=dict)
    notes: str = ""

    def F(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        val = self.f2([x[..., i] for i in range(self.dim)],
                      [y[..., i] for i in range(self.dim)])
        return np.sqrt(np.asarray(val, dtype=float))

    def jet(self, x, y, order: int, x_order: int = 2):
        """Jet of F^2 at (x, y) to total degree ``order``.

        ``x_order`` caps the degree in the base coordinates; the catalog
        never needs more than 2.
        """
        space = jet_space(self.dim, order, x_order)
        xs, ys = space.seed(x, y)
        out = self.f2(xs, ys)
        if not isinstance(out, jets.Jet):
            out = space.constant(np.broadcast_to(out, np.broadcast_shapes(
                np.shape(x)[:-1], np.shape(y)[:-1])))
        return out

    def guard(self) -> float:
        return Y_GUARD * (1.0 + self.chart.scale)

    def validate(self, x, y=None) -> None:
        """Raise if x leaves the chart or y falls below the guard radius."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ChartError(f"point has {x.shape[-1]} coordinates, model dim is {self.dim}")
        if not np.all(self.chart.contains(x)):
            raise ChartError(f"point {x.tolist()} outside the chart of {self.name}")
        if y is not None:
            y = np.asarray(y, dtype=float)
            if np.any(np.max(np.abs(y), axis=-1) < self.guard()):
                raise DegenerateError("direction below the guard radius; F is smooth only off y = 0")

    def __repr__(self):
        extra = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"MetricModel({self.name}{', ' + extra if extra else ''})"


def _dot(a, b):
    out = a[0] * b[0]
    for i in range(1, len(a)):
        out = out + a[i] * b[i]
    return out


def _euclid(n: int = 2, extent: float = 10.0) -> MetricModel:
    return MetricModel(
        name="euclid", dim=n, f2=lambda x, y: _dot(y, y),
        chart=Ball((0.0,) * n, extent), reversible=True, params={"n": n},
    )


def _conformal(factor: Callable, name: str, chart, n: int = 2) -> MetricModel:
    def f2(x, y):
        return factor(_dot(x, x)) * _dot(y, y)
    return MetricModel(name=f"riemannian:{name}", dim=n, f2=f2, chart=chart,
                       reversible=True, params={"matrix": name})


RIEMANNIAN_PRESETS = {
    # stereographic chart of the unit sphere from the north pole, K = +1
    "sphere": lambda n=2, radius=20.0: _conformal(
        lambda r2: 4.0 / ((1.0 + r2) * (1.0 + r2)), "sphere", Ball((0.0,) * n, radius), n),
    # Poincare ball model, K = -1
    "poincare": lambda n=2, radius=0.95: _conformal(
        lambda r2: 4.0 / ((1.0 - r2) * (1.0 - r2)), "poincare", Ball((0.0,) * n, radius), n),
    "flat": lambda n=2, radius=10.0: _conformal(
        lambda r2: 1.0 + 0.0 * r2, "flat", Ball((0.0,) * n, radius), n),
}


def _riemannian(matrix, n: int = 2, chart=None, radius: float | None = None) -> MetricModel:
    if isinstance(matrix, str):
        try:
            preset = RIEMANNIAN_PRESETS[matrix]
        except KeyError:
            raise MetricError(
                f"unknown riemannian preset {matrix!r}; known: {sorted(RIEMANNIAN_PRESETS)}"
            ) from None
        if radius is None:
            return preset(n)
        if matrix == "poincare" and not 0 < radius < 1:
            raise MetricError(f"poincare chart radius must lie in (0, 1), got {radius}")
        if not radius > 0:
            raise MetricError(f"chart radius must be positive, got {radius}")
        return preset(n, float(radius))
    if not callable(matrix):
        raise MetricError("riemannian 'matrix' must be a preset name or a callable a(x)")

    def f2(x, y):
        a = matrix(x)
        out = 0.0
        for i in range(n):
            for j in range(n):
                out = out + a[i][j] * y[i] * y[j]
        return out

    return MetricModel(name="riemannian:custom", dim=n, f2=f2,
                       chart=chart or Ball((0.0,) * n, 1.0), reversible=True,
                       params={"matrix": "custom"})


def _randers(eps: float, extent: float = 10.0) -> MetricModel:
    def f2(x, y):
        F = jets.sqrt(_dot(y, y)) + eps * y[0]
        return F * F
    return MetricModel(name="randers", dim=2, f2=f2, chart=Ball((0.0, 0.0), extent),
                       reversible=(eps == 0), params={"eps": eps})


def _funk(n: int = 2, radius: float = 0.995) -> MetricModel:
    def f2(x, y):
        xy = _dot(x, y)
        c = 1.0 - _dot(x, x)
        F = (jets.sqrt(xy * xy + _dot(y, y) * c) + xy) / c
        return F * F
    return MetricModel(
        name="funk", dim=n, f2=f2, chart=Ball((0.0,) * n, radius), reversible=False,
        params={"n": n} if n != 2 else {},
        notes="positively complete on the open unit ball, forward only",
    )


def catalog_names() -> list[str]:
    return ["euclid", "riemannian", "randers", "funk"]


_ALLOWED = {
    "euclid": {"n", "extent"},
    "riemannian": {"matrix", "n", "chart", "radius"},
    "randers": {"eps", "extent"},
    "funk": {"n", "radius"},
}


def make_model(spec, strict: bool = True, **params) -> MetricModel:
    """Build a catalog model from a descriptor.

    ``spec`` is a name (``"funk"``) or a mapping such as
    ``{"model": "randers", "eps": 0.5}``; keyword arguments are merged in.
    With ``strict`` the parameter ranges are enforced and the result must pass
    :func:`check_minkowski` on a default sample set.
    """
    if isinstance(spec, MetricModel):
        return spec
    if isinstance(spec, str):
        spec = {"model": spec}
    spec = dict(spec)
    spec.update(params)
    name = spec.pop("model", None)
    if name not in _ALLOWED:
        raise MetricError(f"unknown model {name!r}; known: {catalog_names()}")
    unknown = set(spec) - _ALLOWED[name]
    if unknown:
        raise MetricError(f"unknown parameter(s) {sorted(unknown)} for model {name!r}")

    if name == "euclid":
        n = int(spec.get("n", 2))
        if n < 1:
            raise MetricError("euclid needs n >= 1")
        model = _euclid(n, float(spec.get("extent", 10.0)))
    elif name == "riemannian":
        model = _riemannian(spec.get("matrix", "sphere"), int(spec.get("n", 2)), spec.get("chart"),
                            spec.get("radius"))
    elif name == "randers":
        eps = float(spec.get("eps", 0.5))
        if strict and not abs(eps) < 1:
            raise MetricError(f"randers requires |eps| < 1, got eps={eps}")
        model = _randers(eps, float(spec.get("extent", 10.0)))
    else:
        radius = float(spec.get("radius", 0.995))
        if strict and not 0 < radius < 1:
            raise MetricError(f"funk chart radius must lie in (0, 1), got {radius}")
        model = _funk(int(spec.get("n", 2)), radius)

    if strict:
        report = check_minkowski(model, 24, seed=0)
        if not report.passed:
            raise MetricError(f"{model!r} failed the Minkowski check: {report.summary()}")
    return model


# ---------------------------------------------------------------------------
# points, flags
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tangent:
    """A point of the slit tangent bundle, (x, y) with y != 0."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if np.max(np.abs(self.y)) < Y_GUARD:
            raise DegenerateError("tangent vector y must be nonzero")


@dataclass(frozen=True)
class Flag:
    """Flagpole y and transverse vector v at x, with the g_y-orthogonal part
    ``v_perp`` of v and ``tau = |v_perp|_{g_y}``."""

    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    v_perp: np.ndarray
    tau: float

    @property
    def base(self) -> Tangent:
        return Tangent(self.x, self.y)


def make_flag(model: MetricModel, x, y, v, min_tau: float = 1e-6) -> Flag:
    """Validate a flag and attach its derived quantities.

    Raises :class:`DegenerateError` when ``tau < min_tau * |v|_g``; the
    weighted flag curvature blows up like ``tau**-3`` there.
    """
    x, y, v = (np.asarray(a, dtype=float) for a in (x, y, v))
    model.validate(x, y)
    g = fundamental_tensor(model, x, y)
    F2 = y @ g @ y
    v_perp = v - (y @ g @ v) / F2 * y
    tau2 = v_perp @ g @ v_perp
    vv = v @ g @ v
    if not tau2 > (min_tau ** 2) * vv:
        raise DegenerateError(
            f"flag is degenerate: v is (nearly) parallel to y (tau^2={tau2:.3e})"
        )
    return Flag(x, y, v, v_perp, float(np.sqrt(tau2)))


# ---------------------------------------------------------------------------
# tensors
# ---------------------------------------------------------------------------


def _xy(x, y=None):
    if isinstance(x, (Tangent, Flag)):
        return x.x, x.y
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def fundamental_tensor(model: MetricModel, x, y=None) -> np.ndarray:
    """g_ij = 1/2 [F^2]_{y^i y^j}, shape ``(..., n, n)``.

    Accepts a :class:`Tangent` or batched arrays ``x, y`` of shape (..., n).
    """
    x, y = _xy(x, y)
    return 0.5 * model.jet(x, y, 2, 0).partials(0, 2)


def cartan_torsion(model: MetricModel, x, y=None) -> np.ndarray:
    """C_ijk = 1/4 [F^2]_{y^i y^j y^k}, shape ``(..., n, n, n)``."""
    x, y = _xy(x, y)
    return 0.25 * model.jet(x, y, 3, 0).partials(0, 3)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class MinkowskiReport:
    x: np.ndarray
    y: np.ndarray
    homogeneity: np.ndarray
    min_eig: np.ndarray
    euler: np.ndarray
    smoothness: np.ndarray
    tolerances: dict
    passed: bool

    def summary(self) -> str:
        return (
            f"homogeneity<={np.nanmax(self.homogeneity):.2e}, "
            f"min_eig>={np.nanmin(self.min_eig):.3e}, "
            f"euler<={np.nanmax(self.euler):.2e}, smooth<={np.nanmax(self.smoothness):.2e}, "
            f"passed={self.passed}"
        )


def sample_tangents(model: MetricModel, count: int, seed=0, fill: float = 0.7):
    """Deterministic random (x, y) pairs inside the chart."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = model.chart.sample(rng, count, fill)
    y = rng.normal(size=(count, model.dim))
    y *= rng.uniform(0.3, 3.0, size=(count, 1)) / np.linalg.norm(y, axis=-1, keepdims=True)
    return x, y


def check_minkowski(model: MetricModel, samples=100, seed=0, *,
                    hom_tol: float = 1e-10, eig_tol: float = 0.0,
                    smooth_tol: float = 1e-5) -> MinkowskiReport:
    """Sample the Minkowski-norm conditions of F.

    ``samples`` is a count (random tangents from ``seed``) or a pair of
    arrays ``(x, y)``.  Per sample the report holds the relative homogeneity
    residual ``|F(x, ty) - tF(x, y)|``, the smallest eigenvalue of g, the
    Euler residual ``|g(y, y) - F^2|`` and a smoothness probe comparing the
    third y-derivatives of F^2 from the jet against a central difference of
    the second ones.  Failures are reported, never raised.
    """
    if isinstance(samples, (int, np.integer)):
        if samples <= 0:
            raise ValueError("sample plan must be nonempty")
        x, y = sample_tangents(model, int(samples), seed)
    else:
        x, y = (np.atleast_2d(np.asarray(a, dtype=float)) for a in samples)
    with np.errstate(invalid="ignore", divide="ignore"):
        F = model.F(x, y)
        hom = np.zeros(len(x))
        for t in (0.5, 2.0, 7.0):
            hom = np.maximum(hom, np.abs(model.F(x, t * y) - t * F) / np.maximum(t * np.abs(F), 1e-300))
        jet = model.jet(x, y, 3, 0)
        g = 0.5 * jet.partials(0, 2)
        sym_ok = np.allclose(g, np.swapaxes(g, -1, -2), rtol=1e-12, atol=1e-12)
        g_sym = 0.5 * (g + np.swapaxes(g, -1, -2))
        eig = np.linalg.eigvalsh(g_sym)[..., 0]
        euler = np.abs(np.einsum("...i,...ij,...j->...", y, g, y) - F ** 2) / np.maximum(F ** 2, 1e-300)

        d3 = jet.partials(0, 3)
        smooth = np.zeros(len(x))
        scale = np.linalg.norm(y, axis=-1)
        for k in range(model.dim):
            h = 1e-4 * scale
            e = np.zeros(model.dim)
            e[k] = 1.0
            gp = model.jet(x, y + h[:, None] * e, 2, 0).partials(0, 2)
            gm = model.jet(x, y - h[:, None] * e, 2, 0).partials(0, 2)
            fd = (gp - gm) / (2 * h[:, None, None])
            ref = np.abs(d3[..., k]).max(axis=(-1, -2)) + 1.0 / scale
            smooth = np.maximum(smooth, np.abs(fd - d3[..., k]).max(axis=(-1, -2)) / ref)

    finite = np.isfinite(F) & (F > 0)
    passed = bool(
        sym_ok
        and np.all(finite)
        and np.all(hom <= hom_tol)
        and np.all(eig > eig_tol)
        and np.all(euler <= hom_tol * 10)
        and np.all(smooth <= smooth_tol)
    )
    return MinkowskiReport(
        x=x, y=y, homogeneity=hom, min_eig=eig, euler=euler, smoothness=smooth,
        tolerances={"homogeneity": hom_tol, "min_eig": eig_tol, "smoothness": smooth_tol},
        passed=passed,
    )
