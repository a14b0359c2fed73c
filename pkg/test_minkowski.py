#!/usr/bin/env python3
"""
测试 Minkowski 范数：取值、基本张量、Cartan 张量与 Ad(H) 不变性
"""

import numpy as np

from homspray.errors import InputError, StrongConvexityError, UnsupportedConfigurationError
from homspray.finite_difference import FiniteDifferenceScheme
from homspray.minkowski import CallbackNorm, EuclideanNorm, RandersNorm, check_ad_h_invariance
from homspray.presets import preset


def _randers_callback(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return CallbackNorm(lambda y: float(np.sqrt(y @ a @ y) + b @ y), dim=a.shape[0], label="randers")


def test_values():
    assert EuclideanNorm.identity(2).value([3.0, 4.0]) == 5.0
    assert RandersNorm(np.eye(2), [0.5, 0.0]).value([1.0, 0.0]) == 1.5
    for norm in (EuclideanNorm.identity(3), RandersNorm(np.eye(3), [0.0, 0.0, 0.4])):
        assert norm.value(np.zeros(3)) == 0.0
    assert _randers_callback(np.eye(2), [0.5, 0.0]).value([0.0, 0.0]) == 0.0


def test_positive_homogeneity():
    rng = np.random.default_rng(2)
    norm = RandersNorm(np.diag([1.0, 2.0, 0.5]), [0.1, -0.2, 0.3])
    for _ in range(10):
        y = rng.standard_normal(3)
        for lam in (0.5, 2.0, 3.7):
            assert abs(norm.value(lam * y) - lam * norm.value(y)) <= 1e-12 * lam * (1.0 + norm.value(y))


def test_randers_admissibility():
    try:
        RandersNorm(np.eye(2), [1.0, 0.0])
        assert False, "|b| = 1 应当被拒绝"
    except InputError:
        pass
    try:
        EuclideanNorm([[1.0, 0.0], [0.0, -1.0]])
        assert False, "非正定矩阵应当被拒绝"
    except InputError:
        pass


def test_fundamental_tensor_closed_forms():
    a = np.diag([1.0, 2.0, 3.0])
    assert np.array_equal(EuclideanNorm(a).fundamental_tensor([0.3, -1.0, 2.0]), a)

    for beta in (0.2, 0.5, -0.7):
        norm = RandersNorm(np.eye(2), [beta, 0.0])
        y = np.array([1.0, 0.0])
        g = norm.fundamental_tensor(y)
        assert abs(y @ g @ y - (1.0 + beta) ** 2) <= 1e-14
        assert np.allclose(g, g.T, atol=0.0)


def test_euler_identity_and_zero_homogeneity():
    rng = np.random.default_rng(4)
    norm = RandersNorm(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 1.5]]), [0.2, 0.1, -0.3])
    h = 1e-4
    for _ in range(10):
        y, u = rng.standard_normal((2, 3))
        g = norm.fundamental_tensor(y)
        assert abs(y @ g @ y - norm.value(y) ** 2) <= 1e-12 * (1.0 + norm.value(y) ** 2)
        assert np.max(np.abs(norm.fundamental_tensor(2.5 * y) - g)) <= 1e-8
        # g_y(y, u) = ½ d/dt F²(y + tu)
        fd = (norm.value(y + h * u) ** 2 - norm.value(y - h * u) ** 2) / (4.0 * h)
        assert abs(y @ g @ u - fd) <= 1e-7 * (1.0 + abs(fd))


def test_callback_matches_randers_tensor():
    a = np.array([[1.0, 0.2], [0.2, 2.0]])
    b = np.array([0.3, -0.2])
    exact = RandersNorm(a, b)
    approx = _randers_callback(a, b)
    rng = np.random.default_rng(6)
    for _ in range(10):
        y = rng.standard_normal(2)
        assert np.max(np.abs(approx.fundamental_tensor(y) - exact.fundamental_tensor(y))) <= 1e-6


def test_cartan_vanishes_for_euclidean():
    norm = EuclideanNorm(np.diag([1.0, 2.0, 3.0]))
    rng = np.random.default_rng(8)
    y, u, v, w, z = rng.standard_normal((5, 3))
    assert norm.cartan(y, u, v, w) == 0.0
    assert norm.cartan4(y, u, v, w, z) == 0.0
    assert norm.is_riemannian


def test_cartan_against_third_derivative():
    """¼ ∂³F²/∂w³ 的差分（Richardson）与闭式 Cartan 张量比较"""
    norm = RandersNorm(np.eye(2), [0.3, 0.0])
    w = np.array([0.0, 1.0])
    for y in (np.array([1.0, 0.0]), np.array([0.6, 0.8])):
        def third(h):
            f = lambda t: norm.value(y + t * w) ** 2
            return (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h ** 3)

        h = 1e-2
        fd = 0.25 * (4.0 * third(h / 2) - third(h)) / 3.0
        assert abs(norm.cartan(y, w, w, w) - fd) <= 1e-6


def test_cartan_symmetry_and_euler_identity():
    a = np.array([[1.5, 0.2, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 2.0]])
    b = np.array([0.1, 0.2, -0.3])
    rng = np.random.default_rng(10)
    for norm in (RandersNorm(a, b), _randers_callback(a, b)):
        y, u, v, w = rng.standard_normal((4, 3))
        base = norm.cartan(y, u, v, w)
        for perm in ((u, w, v), (v, u, w), (v, w, u), (w, u, v), (w, v, u)):
            assert abs(norm.cartan(y, *perm) - base) <= 1e-8 * (1.0 + abs(base)) + (1e-6 if isinstance(norm, CallbackNorm) else 0.0)
        assert abs(norm.cartan(y, y, v, w)) <= (1e-12 if isinstance(norm, RandersNorm) else 1e-5)


def test_randers_cartan4_matches_finite_difference():
    norm = RandersNorm(np.diag([1.0, 2.0, 1.5]), [0.2, -0.1, 0.3])
    rng = np.random.default_rng(12)
    scheme = FiniteDifferenceScheme(relative_step=1e-3)
    for _ in range(5):
        y, u, v, w, z = rng.standard_normal((5, 3))
        fd = scheme.derivative(lambda p: norm.cartan(p, u, v, w), y, z, cone_guard=True)
        assert abs(norm.cartan4(y, u, v, w, z) - float(fd)) <= 1e-8 * (1.0 + abs(float(fd)))


def test_strong_convexity():
    assert RandersNorm(np.eye(3), [0.0, 0.0, 0.9]).check_strong_convexity(samples=64, seed=42).passed

    # 不定二次型：Hessian 有负特征值
    indefinite = CallbackNorm(lambda y: float(np.sqrt(y[0] ** 2 - 0.5 * y[1] ** 2)), dim=2, label="indefinite")
    try:
        indefinite.fundamental_tensor([1.0, 0.0])
        assert False, "不正定的 Hessian 应当报告强凸性失败"
    except StrongConvexityError as e:
        assert e.details["y"] == [1.0, 0.0]


def test_ad_h_invariance():
    sphere = preset("su2_u1")
    assert check_ad_h_invariance(EuclideanNorm.identity(2), sphere).passed
    assert not check_ad_h_invariance(RandersNorm(np.eye(2), [0.3, 0.0]), sphere).passed
    assert check_ad_h_invariance(RandersNorm(np.eye(3), [0.2, 0.1, 0.0]), preset("abelian", n=3)).passed

    skewed = preset("sl2_r").with_basis_change([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], dim_m=2)
    try:
        check_ad_h_invariance(EuclideanNorm.identity(2), skewed)
        assert False, "非约化分解应当拒绝检查"
    except UnsupportedConfigurationError:
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
