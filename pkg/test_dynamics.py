#!/usr/bin/env python3
"""
测试 ODE 层：测地线、平行移动、群曲线重建与提升
"""

import numpy as np
from scipy.linalg import expm

from homspray.config import NumericsConfig
from homspray.dynamics import (
    GroupTrajectory,
    Trajectory,
    conserved_quantities,
    geodesic_correspondence,
    integrate_geodesic,
    lift_curve,
    linear_transport,
    nonlinear_transport,
    reconstruct_group_curve,
    rho_flow_check,
    time_derivative,
    transport_identities,
)
from homspray.errors import ConeExitError, InputError
from homspray.homogeneous_spray import DirectSource, FinslerSource, SprayModel
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


def test_vanishing_eta_gives_constant_trajectory():
    y0 = np.array([0.6, -0.8])
    for method in ("rk4", "rk45"):
        traj = integrate_geodesic(sphere(), y0, 1.0, dt=1e-2, method=method)
        assert np.max(np.abs(traj.states - y0)) <= 1e-14
        assert traj.times[0] == 0.0 and traj.times[-1] == 1.0


def test_euler_top_conservation():
    spray = euler_top()
    y0 = np.array([1.0, 0.01, 0.0])
    traj = integrate_geodesic(spray, y0, 10.0, dt=1e-3, method="rk4")
    assert traj.meta["accepted_steps"] == 10000
    start = conserved_quantities(spray, y0)
    assert set(start) == {"F", "energy", "casimir"}
    for y in traj.states[::500]:
        now = conserved_quantities(spray, y)
        for key in ("energy", "casimir"):
            assert abs(now[key] - start[key]) <= 1e-8 * start[key], key


def test_finsler_norm_is_conserved():
    spray = randers_heisenberg()
    y0 = np.array([0.3, -1.0, 0.7])
    F0 = spray.norm.value(y0)
    geodesic = integrate_geodesic(spray, y0, 1.0, dt=1e-3)
    assert max(abs(spray.norm.value(y) - F0) for y in geodesic.states) <= 1e-8

    # 非线性平行移动保持 F
    transported = nonlinear_transport(spray, lambda t: [np.cos(t), np.sin(t), 0.5], y0, 1.0, dt=1e-3)
    assert max(abs(spray.norm.value(y) - F0) for y in transported.states) <= 1e-6


def test_direct_euler_top_follows_same_geodesic():
    y0 = np.array([1.0, 0.5, -0.3])
    direct = SprayModel(preset("su2"), DirectSource.euler_top(INERTIA))
    a = integrate_geodesic(euler_top(), y0, 2.0, dt=1e-3)
    b = integrate_geodesic(direct, y0, 2.0, dt=1e-3)
    assert np.max(np.abs(a.states - b.states)) <= 1e-10
    assert abs(conserved_quantities(direct, y0)["energy"] - conserved_quantities(euler_top(), y0)["energy"]) <= 1e-14


def test_rk4_convergence_order():
    """步长取 0.1 / 0.05，参考解 dt = 1e-3

    在 4e-3 / 2e-3 / 1e-3 这组步长上端点误差已在 1e-13 量级，
    被舍入误差淹没，相邻步长的误差比只是噪声，看不出四阶收敛。
    """
    spray = euler_top()
    y0 = np.array([1.0, 0.5, -0.3])
    reference = integrate_geodesic(spray, y0, 2.0, dt=1e-3).final
    coarse = integrate_geodesic(spray, y0, 2.0, dt=0.1).final
    fine = integrate_geodesic(spray, y0, 2.0, dt=0.05).final
    ratio = np.linalg.norm(coarse - reference) / np.linalg.norm(fine - reference)
    assert 12.0 <= ratio <= 20.0, ratio


def test_time_reversal():
    spray = randers_heisenberg()
    y0 = np.array([0.3, -1.0, 0.7])
    forward = integrate_geodesic(spray, y0, 1.0, dt=1e-3)
    backward = integrate_geodesic(spray, forward.final, -1.0, dt=1e-3)
    assert backward.meta["direction"] == "backward"
    assert backward.times[0] == -1.0 and backward.times[-1] == 0.0
    assert np.max(np.abs(backward.states[0] - y0)) <= 1e-9


def test_linear_transport_closed_form():
    """η ≡ 0 且 N = -½[y, ·] 时 w(t) = exp(-t/2 ad_y) w₀"""
    spray = biinvariant_su2()
    y = np.array([0.4, -1.1, 0.5])
    w0 = np.array([1.0, 0.2, -0.3])
    ad_y = spray.algebra.ad_m_matrix(y)
    geodesic = integrate_geodesic(spray, y, 2.0, dt=1e-2)
    for curve in (y, geodesic):
        transported = linear_transport(spray, curve, w0, 2.0, dt=1e-2)
        for t, w in zip(transported.times[::20], transported.states[::20]):
            assert np.max(np.abs(w - expm(-0.5 * t * ad_y) @ w0)) <= 1e-8

    # 对称对上 N = 0 且 [y, w]_m = 0
    flat = linear_transport(sphere(), [1.0, 0.0], [0.0, 2.0], 1.0, dt=1e-2)
    assert np.max(np.abs(flat.states - [0.0, 2.0])) <= 1e-14


def test_linear_transport_superposition():
    spray = randers_heisenberg()
    geodesic = integrate_geodesic(spray, [0.3, -1.0, 0.7], 1.0, dt=1e-2)
    w0, v0 = np.array([1.0, 0.0, 0.5]), np.array([-0.2, 0.7, 0.1])
    combined = linear_transport(spray, geodesic, w0 + 2.0 * v0, 1.0, dt=1e-2)
    parts = linear_transport(spray, geodesic, w0, 1.0, dt=1e-2).states + 2.0 * linear_transport(
        spray, geodesic, v0, 1.0, dt=1e-2
    ).states
    assert np.max(np.abs(combined.states - parts)) <= 1e-10


def test_rho_flow_matches_constant_transport():
    spray = randers_heisenberg()
    report = rho_flow_check(spray, [0.2, 0.5, -0.1], 1.0, dt=1e-2, seed=3)
    assert report.passed
    assert report.max_violation <= 1e-8

    traj = nonlinear_transport(spray, [0.2, 0.5, -0.1], [1.0, 0.0, 0.0], 1.0, dt=1e-2)
    assert traj.meta["integrator"] == "rk4" and len(traj) == 101


def test_group_curve_matches_matrix_exponential():
    spray = biinvariant_su2()
    alg = spray.algebra
    y = np.array([0.4, -1.1, 0.5])
    traj = integrate_geodesic(spray, y, 1.0, dt=1e-3)
    group = reconstruct_group_curve(alg, traj)
    Y = alg.representation.matrix(y)
    for t, C in zip(group.times[::100], group.matrices[::100]):
        assert np.max(np.abs(C - expm(t * Y))) <= 1e-7
    assert group.orthogonality_drift() <= 1e-9
    assert group.meta["blow_up_time"] is None
    assert np.array_equal(group.matrices[0], np.eye(3))


def test_geodesic_correspondence():
    for spray, y0 in ((euler_top(), [1.0, 0.5, -0.3]), (sphere(), [0.6, 0.8])):
        report = geodesic_correspondence(spray, y0, 1.0, dt=1e-3)
        assert report.passed, report.max_violation
        assert report.details["orthogonality_drift"] <= 1e-9


def test_lift_curve_on_sphere():
    """g(t) = exp(t(e1 + e3)) 的提升：h(t) = exp(-t e3)，|y(t)| = 1"""
    alg = preset("su2_u1")
    rep = alg.representation
    times = np.linspace(0.0, 2.0, 201)
    U = rep.matrix([1.0, 0.0, 1.0])
    G = np.array([expm(t * U) for t in times])
    result = lift_curve(alg, GroupTrajectory(times=times, matrices=G), g_dot=G @ U)
    E3 = rep.matrix([0.0, 0.0, 1.0])
    for t, h in zip(times[::25], result.h.matrices[::25]):
        assert np.max(np.abs(h - expm(-t * E3))) <= 1e-7
    assert np.allclose(result.y.states[0], [1.0, 0.0], atol=1e-14)
    assert np.max(np.abs(np.linalg.norm(result.y.states, axis=1) - 1.0)) <= 1e-7
    assert result.h_residual <= 1e-6


def test_transport_identities_along_geodesics():
    for spray, y0, w0 in (
        (sphere(), [0.6, 0.8], [1.0, -0.5]),
        (euler_top(), [1.0, 0.5, -0.3], [0.2, -0.4, 1.0]),
    ):
        report = transport_identities(spray, y0, w0, t_end=0.5, dt=1e-3)
        assert report.passed, report.details


def test_cone_exit_is_reported():
    def field(y):
        return np.linalg.norm(y) * y

    spray = SprayModel(
        preset("abelian", n=2),
        DirectSource(field, label="shrinking"),
        numerics=NumericsConfig(cone_exit_ratio=0.5),
    )
    for method in ("rk4", "rk45"):
        try:
            integrate_geodesic(spray, [1.0, 0.0], 2.0, dt=1e-2, method=method)
            assert False, "‖y‖ 降到阈值以下时应当报错"
        except ConeExitError as e:
            assert 0.9 <= e.details["t"] <= 1.1


def test_sampled_curve_domain():
    spray = randers_heisenberg()
    geodesic = integrate_geodesic(spray, [0.3, -1.0, 0.7], 1.0, dt=1e-2)
    assert np.allclose(geodesic(0.5), geodesic.states[50], atol=1e-14)
    try:
        geodesic(1.5)
        assert False
    except InputError as e:
        assert e.details["domain"] == [0.0, 1.0]
    try:
        linear_transport(spray, geodesic, [1.0, 0.0, 0.0], 2.0, dt=1e-2)
        assert False, "超出采样曲线定义域的平行移动应当报错"
    except InputError:
        pass


def test_fourth_order_time_derivative():
    times = np.linspace(0.0, 1.0, 101)
    samples = np.stack([np.sin(times), np.cos(2.0 * times)], axis=1)
    exact = np.stack([np.cos(times), -2.0 * np.sin(2.0 * times)], axis=1)
    assert np.max(np.abs(time_derivative(samples, times) - exact)) <= 2e-7
    try:
        time_derivative(samples[:4], times[:4])
        assert False
    except InputError:
        pass


def test_trajectory_validation():
    try:
        Trajectory(times=[0.0, 0.0], states=[[1.0], [2.0]])
        assert False
    except InputError:
        pass
    try:
        integrate_geodesic(sphere(), [0.0, 0.0], 1.0)
        assert False
    except InputError:
        pass

def finsler_presets():
    return {
        "sphere": sphere(),
        "su2": biinvariant_su2(),
        "euler_top": euler_top(),
        "randers_heisenberg": randers_heisenberg(),
    }


def test_norm_is_conserved_on_every_finsler_preset():
    rng = np.random.default_rng(42)
    for name, spray in finsler_presets().items():
        y0 = rng.standard_normal(spray.n)
        F0 = spray.norm.value(y0)
        traj = integrate_geodesic(spray, y0, 1.0, dt=1e-3)
        drift = max(abs(spray.norm.value(y) - F0) for y in traj.states)
        assert drift <= 1e-8, (name, drift)


def test_nonlinear_transport_closed_form():
    """N(y, w) = -½[y, w] 时 y(t) = exp(-t/2 ad_w) y₀"""
    spray = biinvariant_su2()
    w = np.array([0.4, -1.1, 0.5])
    y0 = np.array([1.0, 0.2, -0.3])
    ad_w = spray.algebra.ad_m_matrix(w)
    traj = nonlinear_transport(spray, w, y0, 2.0, dt=1e-2)
    for t, y in zip(traj.times[::20], traj.states[::20]):
        assert np.max(np.abs(y - expm(-0.5 * t * ad_w) @ y0)) <= 1e-8


def test_linear_transport_keeps_pairing_with_velocity():
    """沿测地线 g_{y(t)}(w(t), y(t)) 不变"""
    rng = np.random.default_rng(7)
    for name, spray in finsler_presets().items():
        y0 = rng.standard_normal(spray.n)
        w0 = rng.standard_normal(spray.n)
        geodesic = integrate_geodesic(spray, y0, 1.0, dt=1e-3)
        transported = linear_transport(spray, geodesic, w0, 1.0, dt=1e-3)
        pairing = [
            float(w @ spray.norm.fundamental_tensor(y) @ y)
            for y, w in zip(geodesic.states, transported.states)
        ]
        assert max(abs(p - pairing[0]) for p in pairing) <= 1e-8, name


def test_transport_identities_on_seeded_geodesics():
    rng = np.random.default_rng(42)
    for name, spray in finsler_presets().items():
        for _ in range(10):
            y0 = rng.standard_normal(spray.n)
            w0 = rng.standard_normal(spray.n)
            report = transport_identities(spray, y0, w0, t_end=0.5, dt=1e-2)
            assert report.passed, (name, report.details)



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
