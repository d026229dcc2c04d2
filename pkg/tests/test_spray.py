import numpy as np
import pytest

from finslerkit.metrics import make_model
from finslerkit.spray import (berwald, landsberg, lowered_y, nonlinear_connection, spray,
                              spray_fields)
from oracles import (f2_funk, f2_poincare, f2_randers, f2_sphere, fd_gradient, fd_spray,
                     sphere_christoffel, sphere_spray)

SPHERE = {"model": "riemannian", "matrix": "sphere"}
RNG = np.random.default_rng(2024)
POINTS = [(RNG.uniform(-0.5, 0.5, 2), RNG.normal(size=2)) for _ in range(4)]


@pytest.mark.parametrize("f2, spec", [
    (f2_randers(0.5), {"model": "randers", "eps": 0.5}),
    (f2_funk, {"model": "funk"}),
    (f2_sphere, SPHERE),
    (f2_poincare, {"model": "riemannian", "matrix": "poincare"}),
], ids=["randers", "funk", "sphere", "poincare"])
def test_spray_matches_finite_difference_oracle(f2, spec):
    model = make_model(spec)
    for x, y in POINTS:
        assert np.allclose(spray(model, x, y), fd_spray(f2, x, y), rtol=1e-7, atol=1e-8)


def test_sphere_christoffel_symbolic():
    model = make_model(SPHERE)
    for x, y in POINTS:
        assert np.allclose(spray(model, x, y), sphere_spray(x, y), atol=1e-12)
        B = berwald(model, x, y)
        assert np.allclose(B.Gamma, sphere_christoffel(x), atol=1e-12)


def test_funk_spray_is_projective():
    # the Funk metric is projectively flat with projective factor F / 2
    model = make_model("funk")
    for x, y in POINTS:
        assert np.allclose(spray(model, x, y), 0.5 * model.F(x, y) * y, atol=1e-13)


@pytest.mark.parametrize("spec", ["funk", SPHERE, {"model": "randers", "eps": -0.3}])
def test_homogeneity_and_connection(spec):
    model = make_model(spec)
    x, y = POINTS[0]
    G = spray(model, x, y)
    assert np.allclose(spray(model, x, 3.0 * y), 9.0 * G)
    N = nonlinear_connection(model, x, y)
    # Euler: N y = 2 G ; N^i_j = dG^i/dy^j
    assert np.allclose(N @ y, 2 * G)
    fd = np.array([fd_gradient(lambda w: spray(model, x, w)[i], y) for i in range(2)])
    assert np.allclose(N, fd, atol=1e-8)


def test_berwald_tensor_symmetries():
    model = make_model("funk")
    x, y = POINTS[1]
    B = berwald(model, x, y, depth=4)
    assert np.allclose(B.Gamma, np.swapaxes(B.Gamma, 1, 2))
    assert np.allclose(B.B3, np.transpose(B.B3, (0, 2, 1, 3)))
    assert np.allclose(B.B3, np.transpose(B.B3, (0, 3, 2, 1)))
    # B is homogeneous of degree -1, so B^i_jkl y^l = 0
    assert np.abs(np.einsum("ijkl,l->ijk", B.B3, y)).max() < 1e-10


def test_fast_path_matches_jet_path():
    model = make_model("funk")
    X = np.array([p[0] for p in POINTS])
    Y = np.array([p[1] for p in POINTS])
    G, N, Gx = spray_fields(model, X, Y, with_N=True, with_Gx=True)
    assert np.allclose(G, spray(model, X, Y), atol=1e-13)
    assert np.allclose(N, nonlinear_connection(model, X, Y), atol=1e-12)
    for k in range(len(X)):
        fd = np.array([fd_gradient(lambda w: spray(model, w, Y[k])[i], X[k]) for i in range(2)])
        assert np.allclose(Gx[k], fd, atol=1e-7)


def test_landsberg():
    flat = make_model({"model": "randers", "eps": 0.5})
    x, y = POINTS[2]
    assert np.abs(landsberg(flat, x, y)).max() < 1e-12
    funk = make_model("funk")
    L = landsberg(funk, x, y)
    assert np.allclose(L, np.transpose(L, (1, 0, 2)))
    assert np.abs(np.einsum("ijk,i->jk", L, y)).max() < 1e-10
    # y_m = g_ml y^l lowers with the fundamental tensor
    assert np.isclose(lowered_y(funk, x, y) @ y, funk.F(x, y) ** 2)
