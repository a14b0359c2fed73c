#!/usr/bin/env python3
"""
测试齐性喷射：η、N、Riemann 算子、S 曲率、Landsberg 与旗曲率
"""

import numpy as np

from homspray.errors import DegenerateFlagError, InputError, UnsupportedConfigurationError
from homspray.finite_difference import DEFAULT_SCHEME
from homspray.homogeneous_spray import RIEMANN_TERMS, DirectSource, FinslerSource, SprayModel
from homspray.minkowski import EuclideanNorm, RandersNorm
from homspray.presets import preset

INERTIA = np.array([1.0, 2.0, 3.0])


def sphere():
    return SprayModel(preset("su2_u1"), FinslerSource(EuclideanNorm.identity(2)))


def biinvariant_su2():
    return SprayModel(preset("su2"), FinslerSource(EuclideanNorm.identity(3)))


def euler_top():
    return SprayModel(preset("su2"), FinslerSource(EuclideanNorm(np.diag(INERTIA))))


def randers_heisenberg():
    return SprayModel(preset("heisenberg3"), FinslerSource(RandersNorm(np.eye(3), [0.0, 0.0, 0.4])))


def finsler_presets():
    return {
        "sphere": sphere(),
        "su2": biinvariant_su2(),
        "euler_top": euler_top(),
        "randers_heisenberg": randers_heisenberg(),
    }


def euler_field(y):
    return np.cross(y, INERTIA * y) / INERTIA


def test_symmetric_pair_degeneracy():
    spray = sphere()
    rng = np.random.default_rng(1)
    for _ in range(10):
        y, w = rng.standard_normal((2, 2))
        assert np.max(np.abs(spray.eta(y))) <= 1e-10
        assert np.max(np.abs(spray.connection_N(y, w))) <= 1e-10
        assert abs(spray.s_curvature(y)) <= 1e-10
        assert abs(spray.landsberg(y, w)) <= 1e-10
    R = spray.riemann_operator([1.0, 0.0])
    assert np.max(np.abs(R @ [0.0, 1.0] - [0.0, 1.0])) <= 1e-8
    assert abs(spray.flag_curvature([1.0, 0.0], [0.0, 1.0]) - 1.0) <= 1e-6


def test_biinvariant_su2():
    spray = biinvariant_su2()
    alg = spray.algebra
    rng = np.random.default_rng(2)
    for _ in range(10):
        y, w, u = rng.standard_normal((3, 3))
        assert np.max(np.abs(spray.eta(y))) <= 1e-14
        assert np.max(np.abs(spray.connection_N(y, w) + 0.5 * alg.bracket(y, w))) <= 1e-12
        assert np.max(np.abs(spray.dN_along(y, u, w) + 0.5 * alg.bracket(u, w))) <= 1e-8
        assert abs(spray.s_curvature(y)) <= 1e-12
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    assert np.max(np.abs(spray.riemann_operator(e1) @ e2 - 0.25 * e2)) <= 1e-8
    assert abs(spray.flag_curvature(e1, e2) - 0.25) <= 1e-6


def test_euler_top_eta():
    spray = euler_top()
    rng = np.random.default_rng(3)
    for _ in range(10):
        y, u = rng.standard_normal((2, 3))
        assert np.max(np.abs(spray.eta(y) - euler_field(y))) <= 1e-12
        bilinear = (np.cross(y, INERTIA * u) + np.cross(u, INERTIA * y)) / INERTIA
        d_eta = spray.d_eta(y, u)
        assert np.max(np.abs(d_eta - bilinear)) <= 1e-9 * (1.0 + np.max(np.abs(bilinear)))
        assert np.max(np.abs(spray.d_eta(y, y) - 2.0 * spray.eta(y))) <= 1e-8 * (1.0 + np.max(np.abs(spray.eta(y))))


def test_direct_euler_top_matches_finsler():
    direct = SprayModel(preset("su2"), DirectSource.euler_top(INERTIA))
    finsler = euler_top()
    assert direct.n_mode == "A"
    rng = np.random.default_rng(4)
    for _ in range(10):
        y, w = rng.standard_normal((2, 3))
        assert np.max(np.abs(direct.eta(y) - finsler.eta(y))) <= 1e-12
        assert np.max(np.abs(direct.connection_N(y, w) - finsler.connection_N(y, w))) <= 1e-9


def test_geodesic_vectors():
    spray = euler_top()
    # 主轴方向是齐性测地线
    for axis in np.eye(3):
        assert spray.geodesic_vector_residual(axis) <= 1e-14
    assert spray.geodesic_vector_residual([1.0, 1.0, 0.0]) > 0.1
    assert np.array_equal(spray.deviation_field([1.0, 1.0, 0.0]), spray.eta([1.0, 1.0, 0.0]))


def test_connection_modes_agree():
    for name, spray in finsler_presets().items():
        report = spray.check_connection_modes(samples=50, seed=42)
        assert report.passed, (name, report.max_violation)
        assert report.max_violation <= 1e-6


def test_connection_is_linear_in_w():
    spray = randers_heisenberg()
    rng = np.random.default_rng(5)
    y, w, v = rng.standard_normal((3, 3))
    lhs = spray.connection_N(y, 2.0 * w - 3.0 * v)
    rhs = 2.0 * spray.connection_N(y, w) - 3.0 * spray.connection_N(y, v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12
    # N(y, y) = η(y)
    assert np.max(np.abs(spray.connection_N(y, y) - spray.eta(y))) <= 1e-12


def test_homogeneity_suite():
    models = dict(finsler_presets())
    models["euler_top_direct"] = SprayModel(preset("su2"), DirectSource.euler_top(INERTIA))
    models["nomizu_se2"] = SprayModel(preset("se2_so2"), DirectSource.zero(2))
    for name, spray in models.items():
        report = spray.check_homogeneity(samples=100, seed=42, tol=1e-7)
        assert report.passed, (name, report.max_violation)


def test_equivariance():
    assert sphere().check_equivariance(samples=16).passed
    assert euler_top().check_equivariance().details["dim_h"] == 0
    assert euler_top().check_equivariance().passed


def test_nomizu_riemann_matches_term_assembly():
    spray = SprayModel(preset("se2_so2"), DirectSource.zero(2))
    alg = spray.algebra
    rng = np.random.default_rng(6)

    def N(y, w):
        return -0.5 * alg.bracket_m(y, w)

    for _ in range(5):
        y, w = rng.standard_normal((2, 2))
        y_g = alg.embed_m(y)
        first = alg.project_m(alg.bracket(y_g, alg.embed_h(alg.bracket_h(alg.embed_m(w), y_g))))
        expected = first + N(y, alg.bracket_m(y, w)) - alg.bracket_m(y, N(y, w)) - N(y, N(y, w))
        assert np.max(np.abs(spray.riemann_operator(y) @ w - expected)) <= 1e-12


def test_riemann_terms_breakdown():
    spray = randers_heisenberg()
    y = np.array([0.3, -1.0, 0.7])
    terms = spray.riemann_terms(y)
    assert tuple(terms) == RIEMANN_TERMS
    total = sum(terms[name] for name in RIEMANN_TERMS)
    assert np.allclose(total, spray.riemann_operator(y), atol=1e-12)
    # R_y(y) 只报告
    assert np.isfinite(spray.riemann_y_residual(y))


def test_riemann_self_adjoint_on_finsler_presets():
    rng = np.random.default_rng(7)
    for name, spray in finsler_presets().items():
        for _ in range(3):
            y = rng.standard_normal(spray.n)
            assert spray.riemann_symmetry_residual(y) <= 1e-4, name


def test_abelian_is_flat():
    spray = SprayModel(preset("abelian", n=3), FinslerSource(RandersNorm(np.eye(3), [0.2, 0.0, 0.1])))
    rng = np.random.default_rng(8)
    y, w = rng.standard_normal((2, 3))
    assert not np.any(spray.eta(y))
    assert np.max(np.abs(spray.riemann_operator(y))) <= 1e-14
    assert abs(spray.flag_curvature(y, w)) <= 1e-12
    assert abs(spray.s_curvature(y)) <= 1e-14


def test_landsberg_vanishes_for_riemannian_norms():
    spray = euler_top()
    assert spray.landsberg([1.0, 2.0, 0.5], [0.0, 1.0, -1.0]) == 0.0


def test_dN_along_step_halving():
    spray = euler_top()
    halved = SprayModel(spray.algebra, spray.source, scheme=DEFAULT_SCHEME.halved())
    rng = np.random.default_rng(9)
    for _ in range(5):
        y, w = rng.standard_normal((2, 3))
        eta = spray.eta(y)
        a = spray.dN_along(y, eta, w)
        b = halved.dN_along(y, eta, w)
        assert np.max(np.abs(a - b)) <= 1e-5


def test_configuration_errors():
    skewed = preset("sl2_r").with_basis_change([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], dim_m=2)
    try:
        SprayModel(skewed, FinslerSource(EuclideanNorm.identity(2)))
        assert False, "非约化分解上不能构造 Finsler 喷射"
    except UnsupportedConfigurationError:
        pass

    try:
        SprayModel(preset("su2_u1"), FinslerSource(RandersNorm(np.eye(2), [0.3, 0.0])))
        assert False, "非 Ad(H) 不变的范数应当被拒绝"
    except UnsupportedConfigurationError:
        pass

    try:
        SprayModel(preset("su2"), DirectSource.zero(3), n_mode="B")
        assert False
    except UnsupportedConfigurationError:
        pass

    direct = SprayModel(preset("su2"), DirectSource.euler_top(INERTIA))
    try:
        direct.landsberg([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        assert False, "直接给出的 η 没有 Landsberg 曲率"
    except UnsupportedConfigurationError:
        pass

    spray = sphere()
    try:
        spray.eta([0.0, 0.0])
        assert False
    except InputError:
        pass
    try:
        spray.flag_curvature([1.0, 0.0], [2.0, 0.0])
        assert False, "共线的旗应当报错"
    except DegenerateFlagError:
        pass


if __name__ == "__main__":
    tests = [value for key, value in list(globals().items()) if key.startswith("test_") and callable(value)]
    failed = 0
    for test in tests:
        try:
            test()
            print(f"✅ {test.__name__}")
        except Exception as e:
            failed += 1
            print(f"❌ {test.__name__}: {e!r}")
    print(f"\n{len(tests) - failed}/{len(tests)} 通过")
    raise SystemExit(1 if failed else 0)
