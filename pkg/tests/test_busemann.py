import numpy as np
import pytest

from finslerkit.busemann import (busemann_estimate, busemann_partial, busemann_values, dini_convexity,
                                 distance_to_sphere, extract_ray, forward_sphere, pairwise_distances,
                                 small_ends_ratio)
from finslerkit.errors import ChartError
from finslerkit.metrics import make_model
from oracles import funk_distance

EUCLID = make_model("euclid")
FUNK = make_model("funk")
PROBES = np.array([[0.2, 0.0], [0.0, 0.3], [-0.25, -0.1], [0.1, -0.35]])


def test_funk_forward_sphere_closed_form():
    # S(0, t) is the Euclidean circle of radius 1 - exp(-t)
    sph = forward_sphere(FUNK, [0.0, 0.0], 1.0, count=64)
    assert sph.complete
    assert np.allclose(np.linalg.norm(sph.points, axis=1), 1 - np.exp(-1.0), atol=1e-9)


def test_sphere_leaving_chart_is_partial():
    sph = forward_sphere(EUCLID, [8.0, 0.0], 3.0, count=32)
    assert not sph.complete
    assert 0 < sph.alive.sum() < 32


def test_distance_to_sphere_euclid():
    sph = forward_sphere(EUCLID, [0.0, 0.0], 2.0, count=64)
    X = np.array([[0.5, 0.0], [0.0, -1.0], [3.0, 0.0]])
    d = distance_to_sphere(EUCLID, sph, X).d
    assert np.allclose(d, [1.5, 1.0, 1.0], atol=1e-7)


def test_partial_busemann_values():
    assert busemann_partial(EUCLID, [0, 0], 3.0, [0.5, 1.0]) == pytest.approx(np.hypot(0.5, 1), abs=1e-7)
    # Funk from the origin: b^t(x) = d(0, x) = -log(1 - |x|) for |x| inside S(0, t)
    vals = busemann_values(FUNK, [0, 0], 2.0, np.array([[0.3, 0.0], [0.0, -0.2]]))
    assert np.allclose(vals, [-np.log(0.7), -np.log(0.8)], atol=1e-7)


def test_pairwise_distances_funk():
    A = np.array([[0.0, 0.0], [0.3, 0.1]])
    B = np.array([[0.2, -0.2], [-0.1, 0.4], [0.0, 0.0]])
    D = pairwise_distances(FUNK, A, B)
    ref = np.array([[funk_distance(a, b) if not np.allclose(a, b) else 0.0 for b in B] for a in A])
    assert np.allclose(D, ref, atol=1e-8)


def test_euclid_field_laws_and_limit():
    fld = busemann_estimate(EUCLID, [0.0, 0.0], PROBES, (1.0, 2.0, 4.0))
    assert fld.passed, fld.checks
    assert np.allclose(fld.limit_estimate, fld.d_from_p, atol=1e-5)
    assert list(fld.horizons) == [1.0, 2.0, 4.0]
    assert fld.checks["monotone"]["checked"] > 0


def test_funk_field_skips_horizons_beyond_chart():
    fld = busemann_estimate(FUNK, [0.0, 0.0], PROBES[:2], (1.0, 2.0, 8.0), count=128)
    assert list(fld.horizons) == [1.0, 2.0]
    assert fld.requested == (1.0, 2.0, 8.0)
    assert fld.passed, fld.checks
    assert np.all(fld.gap < 1e-5)


def test_no_achievable_horizon():
    with pytest.raises(ChartError):
        busemann_estimate(FUNK, [0.0, 0.0], PROBES[:1], (8.0,), count=32)
    with pytest.raises(ValueError):
        busemann_estimate(EUCLID, [0.0, 0.0], PROBES[:1], (2.0, 1.0))


def test_euclid_ray_is_radial():
    fld = busemann_estimate(EUCLID, [0.0, 0.0], PROBES, (1.0, 2.0, 4.0, 8.0))
    ray = extract_ray(EUCLID, [0.0, 0.0], [0.2, 0.0], field_=fld)
    assert np.allclose(ray.direction, [1.0, 0.0], atol=1e-6)
    assert ray.passed
    assert ray.b_q == pytest.approx(0.2, abs=1e-6)
    with pytest.raises(ValueError):
        extract_ray(EUCLID, [0.0, 0.0], [0.0, 0.0], field_=fld)


def test_small_ends_euclid():
    out = small_ends_ratio(EUCLID, [0.0, 0.0], [1.0, 2.0], count=32)
    assert [o["ratio"] for o in out] == pytest.approx([2.0, 2.0], abs=1e-6)
    assert not any(o["partial"] for o in out)


def test_dini_convexity():
    rep = dini_convexity(EUCLID, lambda x: x @ x, [0.3, 0.2], [1.0, 1.0])
    assert rep.estimate == pytest.approx(2.0, abs=1e-8)
    assert not rep.increasing
    kink = dini_convexity(EUCLID, lambda x: np.linalg.norm(x), [0.0, 0.0], [1.0, 0.0])
    assert kink.increasing
