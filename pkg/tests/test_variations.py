import numpy as np
import pytest

from finslerkit.errors import ChartError
from finslerkit.geodesics import integrate_geodesic
from finslerkit.metrics import fundamental_tensor, make_model
from finslerkit.variations import (ParallelVariation, bump_profile, hessian_distance_check,
                                   linear_profile, parallel_t_identity_check, variation_check)

EUCLID = make_model("euclid")
FUNK = make_model("funk")
SPHERE = make_model({"model": "riemannian", "matrix": "sphere"})


def _unit_path(model, x0, y0, Q):
    y0 = np.asarray(y0, dtype=float)
    y0 = y0 / model.F(np.asarray(x0, dtype=float), y0)
    return integrate_geodesic(model, x0, y0, Q)


def test_euclid_second_variation_analytic():
    # V = (1 - t/Q) e2 along a unit segment of length Q: L''(0) = 1/Q
    Q = 2.0
    path = _unit_path(EUCLID, [0.0, 0.0], [1.0, 0.0], Q)
    rep = variation_check(EUCLID, path, ParallelVariation(np.array([0.0, 1.0]), linear_profile(Q)))
    assert rep.L2_formula == pytest.approx(1 / Q, abs=1e-12)
    assert rep.L2_numeric == pytest.approx(1 / Q, rel=1e-6)
    assert rep.passed


@pytest.mark.parametrize("e0", [[0.0, 1.0], [0.6, 0.8]])
def test_funk_variation_formulas(e0):
    Q = 2.0
    path = _unit_path(FUNK, [0.1, 0.0], [0.6, 0.8], Q)
    rep = variation_check(FUNK, path, ParallelVariation(np.array(e0), linear_profile(Q)))
    assert rep.residual1 <= 1e-8
    assert rep.residual2 <= 1e-4
    assert rep.passed
    # the T endpoint term is active for Funk
    assert abs(rep.T_start) > 1e-3 or e0 == [0.6, 0.8]


def test_fixed_endpoint_variation_has_zero_first_variation():
    Q = 1.5
    path = _unit_path(FUNK, [-0.2, 0.1], [0.3, 1.0], Q)
    rep = variation_check(FUNK, path, ParallelVariation(np.array([1.0, 0.0]), bump_profile(Q)))
    assert abs(rep.L1_numeric) < 1e-8
    assert rep.T_start == 0 or abs(rep.T_start) < 1e-12
    assert rep.passed


def test_unit_speed_required():
    path = integrate_geodesic(FUNK, [0.0, 0.0], [2.0, 0.0], 0.5)
    with pytest.raises(ValueError):
        variation_check(FUNK, path, ParallelVariation(np.array([0.0, 1.0]), linear_profile(0.5)))


def test_hessian_decomposition_funk():
    rep = hessian_distance_check(FUNK, [0.1, 0.2], [0.4, -0.3], [0.3, 1.0])
    assert rep.residual <= 3e-3
    assert abs(rep.T) > 0.1  # the T correction is what closes the gap


def test_hessian_decomposition_sphere_closed_form():
    p, x, v = np.array([0.5, 0.0]), np.array([0.3, 0.4]), np.array([0.2, 1.0])
    rep = hessian_distance_check(SPHERE, p, x, v)
    g = fundamental_tensor(SPHERE, x, rep.grad)
    vp = v - (rep.grad @ g @ v) * rep.grad
    # Riemannian: T = 0 and H^2 rho(v) = cot(rho) |v_perp|^2
    assert rep.T == 0 or abs(rep.T) < 1e-10
    assert rep.H2 == pytest.approx(np.cos(rep.rho) / np.sin(rep.rho) * (vp @ g @ vp), abs=1e-5)
    assert rep.passed


def test_parallel_t_identity_funk():
    rep = parallel_t_identity_check(FUNK, [0.1, 0.2], [0.5, -0.3], [0.2, 1.0], 2.0)
    assert rep.residual <= 1e-4
    assert rep.integral_residual <= 1e-8
    assert rep.passed


def test_parallel_t_identity_leaves_chart():
    with pytest.raises(ChartError):
        parallel_t_identity_check(FUNK, [0.9, 0.0], [1.0, 0.0], [0.0, 1.0], 10.0)


def test_hessian_matches_closed_form_funk_distance():
    from oracles import funk_distance

    p, x, v = np.array([0.1, 0.2]), np.array([0.4, -0.3]), np.array([0.3, 1.0])
    rep = hessian_distance_check(FUNK, p, x, v)
    fw = integrate_geodesic(FUNK, x, v, 0.02)
    bw = integrate_geodesic(FUNK, x, v, -0.02)
    rho = lambda s: funk_distance(p, (fw if s >= 0 else bw).point(s))  # noqa: E731
    d2 = [(rho(h) - 2 * rho(0) + rho(-h)) / h ** 2 for h in (1e-2, 5e-3)]
    assert rep.H2 == pytest.approx((4 * d2[1] - d2[0]) / 3, abs=1e-5)
