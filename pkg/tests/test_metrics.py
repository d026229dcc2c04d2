import numpy as np
import pytest

from finslerkit.errors import ChartError, DegenerateError, MetricError
from finslerkit.metrics import (cartan_torsion, catalog_names, check_minkowski, fundamental_tensor,
                                make_flag, make_model)
from oracles import f2_funk, f2_randers, fd_fundamental_tensor

MODELS = [
    {"model": "euclid", "n": 2},
    {"model": "euclid", "n": 3},
    {"model": "randers", "eps": 0.5},
    {"model": "funk"},
    {"model": "riemannian", "matrix": "sphere"},
    {"model": "riemannian", "matrix": "poincare"},
]


def test_catalog_lists_all_families():
    assert set(catalog_names()) == {"euclid", "riemannian", "randers", "funk"}


@pytest.mark.parametrize("spec", MODELS, ids=lambda s: "-".join(map(str, s.values())))
def test_minkowski_conditions_hold(spec):
    rep = check_minkowski(make_model(spec), 64, seed=3)
    assert rep.passed, rep.summary()
    assert np.all(rep.min_eig > 0)


@pytest.mark.parametrize("eps", [1.0, 1.5, -2.0])
def test_randers_range_rejected(eps):
    with pytest.raises(MetricError, match="eps"):
        make_model({"model": "randers", "eps": eps})


def test_randers_forced_construction_fails_convexity():
    model = make_model({"model": "randers", "eps": 1.5}, strict=False)
    assert not check_minkowski(model, 32).passed


def test_unknown_model_and_parameter():
    with pytest.raises(MetricError):
        make_model("kropina")
    with pytest.raises(MetricError, match="unknown parameter"):
        make_model({"model": "funk", "eps": 0.1})
    with pytest.raises(MetricError):
        make_model({"model": "funk", "radius": 1.2})


def test_funk_closed_form_values():
    f = make_model("funk")
    # at the origin F(0, y) = |y|; along x the forward norm is 1/(1-|x|)
    assert np.isclose(f.F(np.zeros(2), np.array([0.3, -0.4])), 0.5)
    assert np.isclose(f.F(np.array([0.5, 0.0]), np.array([1.0, 0.0])), 2.0)
    assert np.isclose(f.F(np.array([0.5, 0.0]), np.array([-1.0, 0.0])), 1.0 / 1.5)


@pytest.mark.parametrize("name, f2, spec", [
    ("randers", f2_randers(0.5), {"model": "randers", "eps": 0.5}),
    ("funk", f2_funk, {"model": "funk"}),
])
def test_fundamental_tensor_matches_differences(name, f2, spec):
    model = make_model(spec)
    rng = np.random.default_rng(11)
    for _ in range(5):
        x = rng.uniform(-0.4, 0.4, 2)
        y = rng.normal(size=2)
        assert np.allclose(fundamental_tensor(model, x, y), fd_fundamental_tensor(f2, x, y),
                           rtol=1e-7, atol=1e-8)


def test_cartan_torsion_symmetric_and_kills_y():
    model = make_model("funk")
    x, y = np.array([0.2, -0.3]), np.array([0.6, 0.8])
    C = cartan_torsion(model, x, y)
    assert np.allclose(C, np.transpose(C, (1, 0, 2)))
    assert np.allclose(C, np.transpose(C, (0, 2, 1)))
    assert np.allclose(np.einsum("ijk,i->jk", C, y), 0, atol=1e-12)
    assert np.abs(C).max() > 1e-3


def test_riemannian_cartan_zero():
    model = make_model({"model": "riemannian", "matrix": "sphere"})
    assert np.abs(cartan_torsion(model, np.array([1.0, 2.0]), np.array([0.3, 0.1]))).max() < 1e-12


def test_flag_validation():
    model = make_model("funk")
    fl = make_flag(model, [0.1, 0.0], [1.0, 0.0], [1.0, 1.0])
    g = fundamental_tensor(model, fl.x, fl.y)
    assert abs(fl.v_perp @ g @ fl.y) < 1e-12
    with pytest.raises(DegenerateError):
        make_flag(model, [0.1, 0.0], [1.0, 0.0], [2.0, 0.0])
    with pytest.raises(ChartError):
        make_flag(model, [1.5, 0.0], [1.0, 0.0], [0.0, 1.0])
    with pytest.raises(DegenerateError):
        make_flag(model, [0.1, 0.0], [0.0, 0.0], [0.0, 1.0])


def test_chart_sampling_is_deterministic():
    model = make_model("funk")
    a = model.chart.sample(np.random.default_rng(5), 10)
    b = model.chart.sample(np.random.default_rng(5), 10)
    assert np.array_equal(a, b)
    assert np.all(model.chart.contains(a))
