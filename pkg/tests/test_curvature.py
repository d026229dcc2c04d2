import numpy as np
import pytest

from finslerkit.curvature import (curvature_report, flag_curvature, landsberg_dot, riemann,
                                  small_flag_limit, t_curvature, t_dot, taylor_probe,
                                  weighted_flag, weighted_flag_pairs, weighted_flag_terms)
from finslerkit.errors import DegenerateError
from finslerkit.geodesics import integrate_geodesic
from finslerkit.metrics import fundamental_tensor, make_flag, make_model
from finslerkit.numerics import richardson
from oracles import funk_flag_curvature, funk_riemann, funk_t_curvature

FUNK = make_model("funk")
RNG = np.random.default_rng(99)
FLAGS = [(RNG.uniform(-0.45, 0.45, 2), RNG.normal(size=2), RNG.normal(size=2)) for _ in range(4)]


def test_funk_riemann_matches_high_precision_oracle():
    for x, y, _ in FLAGS:
        assert np.allclose(riemann(FUNK, x, y), funk_riemann(x, y), rtol=1e-9, atol=1e-11)


def test_funk_flag_curvature_oracle_and_constant():
    for x, y, v in FLAGS:
        K = flag_curvature(FUNK, x, y, v)
        assert abs(K - funk_flag_curvature(x, y, v)) < 1e-9
        assert abs(K + 0.25) < 1e-9


def test_funk_t_matches_oracle():
    for x, y, v in FLAGS:
        assert np.isclose(t_curvature(FUNK, x, y, v), funk_t_curvature(x, y, v),
                          rtol=1e-9, atol=1e-12)


def test_t_vanishes_on_flagpole_and_is_nonpositive():
    # for the Funk metric T_y(v) <= 0 with equality iff v is a multiple of y
    for x, y, v in FLAGS:
        assert abs(t_curvature(FUNK, x, y, y)) < 1e-12
        assert abs(t_curvature(FUNK, x, y, 2.5 * y)) < 1e-11
        assert t_curvature(FUNK, x, y, v) < 0
    x, y, _ = FLAGS[0]
    assert t_curvature(FUNK, x, y, np.zeros(2)) == 0.0


def _tdot_definitional(model, x, y, v, h=1e-2):
    """Centered differences of T along the geodesic with a parallel frame."""
    fw = integrate_geodesic(model, x, y, 2 * h, frames=[v])
    bw = integrate_geodesic(model, x, y, -2 * h, frames=[v])

    def T(t):
        p = fw if t >= 0 else bw
        return t_curvature(model, p.point(t), p.velocity(t), p.frame(t)[0])

    d = [(T(s) - T(-s)) / (2 * s) for s in (h, h / 2)]
    return (4 * d[1] - d[0]) / 3


@pytest.mark.parametrize("spec", ["funk", {"model": "randers", "eps": 0.5}])
def test_t_dot_matches_definition(spec):
    model = make_model(spec)
    for x, y, v in FLAGS[:3]:
        ref = _tdot_definitional(model, x, y, v)
        assert abs(t_dot(model, x, y, v) - ref) <= 1e-6 * max(1.0, abs(ref))


def test_weighted_flag_decomposition_and_alpha():
    x, y, v = FLAGS[1]
    r, td, t2 = weighted_flag_terms(FUNK, x, y, v)
    assert np.isclose(r, flag_curvature(FUNK, x, y, v))
    assert np.isclose(weighted_flag(FUNK, x, y, v, 2.0), r + td - 2.0 * t2)
    assert np.isclose(weighted_flag(FUNK, x, y, v, 1.0, beta=0.0), r - t2)
    with pytest.raises(ValueError):
        weighted_flag(FUNK, x, y, v, 0.0)
    with pytest.raises(DegenerateError):
        weighted_flag(FUNK, x, y, 3 * y)


def test_weighted_flag_depends_only_on_the_flag():
    # invariant under v -> v + c y and positive rescaling of v
    x, y, v = FLAGS[2]
    k = weighted_flag(FUNK, x, y, v)
    assert np.isclose(weighted_flag(FUNK, x, y, 2.0 * v), k, rtol=1e-9)
    assert np.isclose(flag_curvature(FUNK, x, y, v + 0.3 * y), flag_curvature(FUNK, x, y, v))


def test_pairwise_evaluation_matches_pointwise():
    x = np.array([FLAGS[0][0], FLAGS[1][0]])
    ang = np.linspace(0, 2 * np.pi, 6, endpoint=False) + 0.1
    dirs = np.broadcast_to(np.stack([np.cos(ang), np.sin(ang)], -1), (2, 6, 2)).copy()
    Ka, K = weighted_flag_pairs(FUNK, x, dirs, [0, 2], alpha=1.5)
    assert Ka.shape == (2, 2, 6)
    assert np.isnan(Ka[0, 0, 0]) and np.isnan(Ka[1, 1, 2])
    assert np.isclose(Ka[1, 0, 4], weighted_flag(FUNK, x[1], dirs[1, 0], dirs[1, 4], 1.5))
    assert np.isnan(K[0, 1, 5])  # antiparallel to the pole
    assert np.isclose(K[0, 1, 4], flag_curvature(FUNK, x[0], dirs[0, 2], dirs[0, 4]))


def test_riemann_structure():
    for x, y, _ in FLAGS:
        R = riemann(FUNK, x, y)
        g = fundamental_tensor(FUNK, x, y)
        assert np.allclose(R @ y, 0, atol=1e-12)
        assert np.allclose(g @ R, (g @ R).T, atol=1e-12)


def test_small_flag_limit():
    # K^alpha(y, y + s u) converges to the small-flag expression as s -> 0
    x, y, u = FLAGS[3]
    s = np.array([0.08, 0.04, 0.02, 0.01])
    g = fundamental_tensor(FUNK, x, y)
    up = u - (y @ g @ u) / (y @ g @ y) * y
    vals = [weighted_flag(FUNK, x, y, y + si * up / np.sqrt(up @ g @ up), 1.0) for si in s]
    lim, _ = richardson(vals, 2.0, passes=2)
    assert abs(lim - small_flag_limit(FUNK, x, y, u)) < 1e-4 * max(1.0, abs(lim))


def test_taylor_probe_funk():
    for x, y, u in FLAGS[:2]:
        rep = taylor_probe(FUNK, x, y, u)
        assert rep.passed, (rep.T_error, rep.Tdot_error)
        assert np.isfinite(landsberg_dot(FUNK, x, y, u))


def test_curvature_report_row():
    x, y, v = FLAGS[0]
    rep = curvature_report(FUNK, make_flag(FUNK, x, y, v), alpha=1.0)
    assert np.isclose(rep.flag_K, -0.25)
    assert np.isclose(rep.K_alpha, weighted_flag(FUNK, x, y, v))
    assert np.isclose(rep.T_dot, t_dot(FUNK, x, y, v))
