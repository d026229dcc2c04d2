"""The invariant suite run by the ``verify`` subcommand.

Every model gets the structural checks (Minkowski conditions, homogeneity
of the spray, symmetry of the Riemann curvature, conservation of F along
geodesics).  Catalog models with known curvature also get their reference
values: flat models have vanishing connection and curvature, the
Riemannian presets have constant curvature +-1 and vanishing
non-Riemannian tensors, and the Funk metric has flag curvature -1/4.
"""

from __future__ import annotations

import numpy as np

from .curvature import flag_curvature, riemann, t_curvature, t_dot, weighted_flag
from .geodesics import integrate_geodesic
from .metrics import MetricModel, cartan_torsion, check_minkowski, fundamental_tensor
from .spray import berwald, landsberg, spray
from .tolerances import Tolerances

__all__ = ["sample_flags", "reference_curvature", "curvature_ledger", "verify_suite"]

LEDGER_COLUMNS = ("sample", "x", "y", "v", "F", "K", "T", "Tdot", "Kalpha")


def sample_flags(model: MetricModel, count: int, seed: int = 0, fill: float = 0.7,
                 min_angle: float = 0.2):
    """Deterministic random flags (x, y, v) inside the chart.

    v is redrawn until its Euclidean angle to +-y exceeds ``min_angle``, so
    no flag is near-degenerate.
    """
    rng = np.random.default_rng(seed)
    x = model.chart.sample(rng, count, fill)
    y = rng.normal(size=(count, model.dim))
    y *= rng.uniform(0.5, 2.0, size=(count, 1)) / np.linalg.norm(y, axis=1, keepdims=True)
    v = rng.normal(size=(count, model.dim))
    for _ in range(100):
        cos = np.abs(np.sum(v * y, axis=1)) / (np.linalg.norm(v, axis=1) * np.linalg.norm(y, axis=1))
        bad = cos > np.cos(min_angle)
        if not bad.any():
            break
        v[bad] = rng.normal(size=(int(bad.sum()), model.dim))
    return x, y, v


def reference_curvature(model: MetricModel):
    """``(kind, K)`` for catalog models with known curvature, else ``(None, None)``.

    ``kind`` is "flat", "riemannian" or "funk".
    """
    if model.name in ("euclid", "randers", "riemannian:flat"):
        return "flat", 0.0
    if model.name == "riemannian:sphere":
        return "riemannian", 1.0
    if model.name == "riemannian:poincare":
        return "riemannian", -1.0
    if model.name == "funk":
        return "funk", -0.25
    return None, None


def _check(value, tol):
    value = float(value)
    return {"value": value, "tolerance": float(tol), "passed": bool(value <= tol)}


def curvature_ledger(model: MetricModel, x, y, v, alpha: float = 1.0) -> dict:
    """Columns F, K, T, Tdot, K^alpha for the flags (x, y, v)."""
    return {
        "F": model.F(x, y),
        "K": flag_curvature(model, x, y, v),
        "T": t_curvature(model, x, y, v),
        "Tdot": t_dot(model, x, y, v),
        "Kalpha": weighted_flag(model, x, y, v, alpha),
    }


def verify_suite(model: MetricModel, seed: int = 0, samples: int = 50, alpha: float = 1.0,
                 tolerances: Tolerances | None = None, geodesics: int = 3):
    """Run the invariant suite.

    Returns ``(rows, verdict)``: the per-flag curvature ledger (dicts with
    :data:`LEDGER_COLUMNS`) and a JSON-ready verdict whose checks each carry
    the measured value, the tolerance and a pass flag.
    """
    tol = tolerances or Tolerances()
    x, y, v = sample_flags(model, samples, seed)
    led = curvature_ledger(model, x, y, v, alpha)
    rows = [
        {"sample": i, "x": x[i], "y": y[i], "v": v[i],
         **{k: float(led[k][i]) for k in ("F", "K", "T", "Tdot", "Kalpha")}}
        for i in range(samples)
    ]
    checks = {}
    mk = check_minkowski(model, (x, y))
    checks["minkowski_min_eig"] = {
        "value": float(np.min(mk.min_eig)), "tolerance": tol["minkowski"],
        "passed": bool(mk.passed and np.min(mk.min_eig) > tol["minkowski"]),
    }
    G1, G2 = spray(model, x, y), spray(model, x, 2.0 * y)
    checks["spray_homogeneity"] = _check(
        np.max(np.abs(G2 - 4.0 * G1) / (1.0 + np.abs(4.0 * G1))), tol["homogeneity"])
    g = fundamental_tensor(model, x, y)
    R = riemann(model, x, y)
    scale = 1.0 + np.max(np.abs(R), axis=(-1, -2)) * np.linalg.norm(y, axis=-1)
    checks["riemann_annihilates_y"] = _check(
        np.max(np.linalg.norm(np.einsum("bik,bk->bi", R, y), axis=-1) / scale), tol["symmetry"])
    gR = g @ R
    checks["riemann_self_adjoint"] = _check(
        np.max(np.abs(gR - np.swapaxes(gR, -1, -2)).max(axis=(-1, -2)) / scale), tol["symmetry"])
    drift = 0.0
    for i in range(min(geodesics, samples)):
        path = integrate_geodesic(model, x[i], y[i], 0.25 / float(led["F"][i]))
        drift = max(drift, path.speed_drift())
    checks["geodesic_speed_drift"] = _check(drift, tol["speed_drift"])

    kind, K0 = reference_curvature(model)
    if kind == "flat":
        B = berwald(model, x, y, depth=5)
        tensors = {"G": B.G, "N": B.N, "Gamma": B.Gamma, "B3": B.B3, "B4": B.B4, "B5": B.B5,
                   "L": landsberg(model, x, y), "R": R, "T": led["T"], "Tdot": led["Tdot"]}
        for name, arr in tensors.items():
            checks[f"flat_{name}"] = _check(np.max(np.abs(arr)), tol["flat_zero"])
        checks["flat_Kalpha"] = _check(np.max(np.abs(led["Kalpha"])), tol["flat_kalpha"])
    elif kind == "riemannian":
        tensors = {"C": cartan_torsion(model, x, y), "L": landsberg(model, x, y),
                   "T": led["T"], "Tdot": led["Tdot"]}
        for name, arr in tensors.items():
            checks[f"riemannian_{name}"] = _check(np.max(np.abs(arr)), tol["riemannian_zero"])
        checks["riemannian_K"] = _check(np.max(np.abs(led["K"] - K0)), tol["riemannian_K"])
        checks["riemannian_Kalpha"] = _check(np.max(np.abs(led["Kalpha"] - K0)), tol["riemannian_K"])
    elif kind == "funk":
        checks["funk_K"] = _check(np.max(np.abs(led["K"] - K0)), tol["funk_K"])

    verdict = {
        "model": model.name,
        "params": {k: model.params[k] for k in sorted(model.params)},
        "reference": kind,
        "seed": int(seed),
        "samples": int(samples),
        "alpha": float(alpha),
        "checks": checks,
        "passed": bool(all(c["passed"] for c in checks.values())),
    }
    return rows, verdict
