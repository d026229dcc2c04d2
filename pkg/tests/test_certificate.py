import numpy as np
import pytest

from finslerkit.certificate import (CertificateProfile, SamplingPlan, cubic_endpoint_min, curvature_profile,
                                    delta_poly, profile_from_values, q_formula, s_formula)
from finslerkit.metrics import make_model

SMALL_PLAN = SamplingPlan(base_points=8, directions=16, flagpoles=4, candidates=32, probes=4,
                          horizons=(1.0, 2.0), fill=0.4, seed=1)


def _synthetic(S, r_grid=(0.0, 0.5, 1.0, 2.0), a=0.0):
    n = len(r_grid)
    ones = np.ones(n)
    return CertificateProfile(np.array(r_grid), ones, 16 * ones, ones, ones, S * ones, 1.0, a)


def test_sphere_substitution():
    # constant curvature 1 with alpha = 1
    Q = q_formula(1.0, 1.0)
    S = s_formula(1.0, Q, 1.0, 1.0)
    assert Q == 16.0
    assert S == pytest.approx(16 / 3 - 1 / 16, abs=1e-15)
    prof = profile_from_values([0.0, 1.0], 1.0, 1.0, 1.0, alpha=1.0)
    a3, a2, a0 = delta_poly(prof, 0.0)
    assert a0 == pytest.approx(S)
    assert a3 + a2 + a0 == pytest.approx(1 / 8, abs=1e-14)
    assert prof.accepted


@pytest.mark.parametrize("P, K, alpha", [(1.0, 1.0, 1.0), (0.3, -2.0, 0.5), (5.0, 4.0, 3.0),
                                         (0.01, 0.0, 1.0), (2.0, 10.0, 0.1)])
def test_delta_endpoints_and_coefficients(P, K, alpha):
    prof = profile_from_values([0.0], P, P, K, alpha=alpha)
    a3, a2, a0 = delta_poly(prof, 0.0)
    Q, S = prof.Q[0], prof.S[0]
    assert a0 == S
    assert a3 + a2 + a0 == pytest.approx(P / 4 - (1 + 1 / alpha) / Q, abs=1e-12)
    checks = prof.verify(1e-10)
    for name in ("Q_ge_1", "Q_ge_bound", "S_ge_P8", "coef1", "coef2", "delta0", "delta1"):
        assert checks[name].all(), name
    assert cubic_endpoint_min(a3, a2, a0) >= P / 8 - 1e-10


def test_chi_for_zero_slope():
    prof = _synthetic(0.0, a=0.25)
    t = np.array([0.25, 0.6, 1.0, 1.7, 2.0])
    assert np.allclose(prof.chi(t), t - 0.25, atol=1e-12)
    assert np.allclose(prof.chi_prime(t), 1.0)


@pytest.mark.parametrize("c", [0.5, 2.0, 5.27])
def test_chi_for_constant_slope(c):
    prof = _synthetic(c)
    t = np.linspace(0.0, 2.0, 9)
    assert np.allclose(prof.chi(t), (np.exp(c * t) - 1) / c, rtol=1e-8, atol=1e-12)
    assert np.allclose(prof.chi_second(t) / prof.chi_prime(t), c, rtol=1e-6)


def test_chi_piecewise_linear_slope():
    prof = CertificateProfile(np.array([0.0, 1.0, 2.0]), np.ones(3), np.full(3, 16.0), np.ones(3),
                              np.ones(3), np.array([1.0, 3.0, 2.0]), 1.0, 0.0)
    # int_0^1.5 S = (1 + 3)/2 + 0.5 * (3 + 2.5)/2
    assert prof.integral_S(1.5) == pytest.approx(2.0 + 1.375)
    t = np.linspace(0, 2, 11)
    assert np.all(np.diff(prof.chi(t)) > 0)
    assert np.all(prof.chi_prime(t) >= 1.0)
    # chi(t) integrates chi'
    fine = np.linspace(0, 1.3, 20001)
    assert prof.chi(1.3) == pytest.approx(np.trapezoid(prof.chi_prime(fine), fine), rel=1e-7)


def test_profile_validation():
    with pytest.raises(ValueError):
        _synthetic(1.0, r_grid=(0.0, 0.0, 1.0))
    prof = _synthetic(1.0)
    with pytest.raises(ValueError):
        prof.index(0.3)
    assert prof.cell(0.7) == 1 and prof.cell(-1.0) == 0 and prof.cell(5.0) == 3


@pytest.mark.parametrize("coef, expect", [((1.0, 0.0, 0.0), 0.0), ((-1.0, 0.0, 1.0), 0.0),
                                          ((1.0, -3.0, 3.0), 1.0), ((1.0, -1.0, 1.0), 1 - 4 / 27)])
def test_cubic_endpoint_min(coef, expect):
    assert cubic_endpoint_min(*coef) == pytest.approx(expect, abs=1e-15)
    x = np.linspace(0, 1, 100001)
    a3, a2, a0 = coef
    assert cubic_endpoint_min(*coef) <= np.min(a3 * x ** 3 + a2 * x ** 2 + a0) + 1e-12


def test_euclid_refused():
    prof = curvature_profile(make_model("euclid"), [0.0, 0.0], [0.0], 1.0, SMALL_PLAN)
    assert prof.refused
    assert prof.witness["quantity"] == "P"
    assert prof.witness["value"] <= 0
    assert not prof.accepted
    with pytest.raises(ValueError):
        prof.verify()


def test_funk_refused_with_witness():
    prof = curvature_profile(make_model("funk"), [0.0, 0.0], [0.0, 0.5], 1.0, SMALL_PLAN)
    assert prof.refused
    w = prof.witness
    assert w["value"] < 0
    assert {"x", "y_angle", "v_angle", "r"} <= set(w)


def test_profile_rejects_bad_input():
    with pytest.raises(ValueError):
        curvature_profile(make_model("euclid", n=3), [0.0, 0.0, 0.0], [0.0], 1.0, SMALL_PLAN)
    with pytest.raises(ValueError):
        curvature_profile(make_model("euclid"), [0.0, 0.0], [0.0], -1.0, SMALL_PLAN)
