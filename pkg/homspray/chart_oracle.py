"""
指数坐标卡上的局部坐标喷射（独立校验器）

坐标卡 x ↦ exp(x)·o，x ∈ m。拉回度量
    F_chart(x, v) = F(M(x) v)，M(x) = (T_x)_mm  （dexp 矩阵的 m-m 块）
在坐标中按经典公式计算喷射系数、联络系数、Riemann 系数、S 曲率与 Landsberg 曲率，
再与齐性公式在原点（dφ_0 = id）处逐分量比较。

F_chart 对 v 的导数用链式法则解析求出：
    ∂_v F²   = 2 Mᵀ g_{Mv} M v
    g_chart  = Mᵀ g_{Mv} M
对 x 的导数全部是差分；嵌套差分的步长按 order_step 逐层放宽。
"""

import logging
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .config import NumericsConfig
from .dynamics import Trajectory, linear_transport, nonlinear_transport, solve_ode
from .errors import ChartRadiusError, InputError, StrongConvexityError, UnsupportedConfigurationError
from .finite_difference import DEFAULT_SCHEME, FiniteDifferenceScheme
from .homogeneous_spray import SprayModel
from .lie_algebra import LieAlgebra
from .minkowski import MinkowskiNorm
from .utils import CheckReport

logger = logging.getLogger(__name__)

# 四阶单侧差分系数（t = 0, dt, ..., 4dt）
ONE_SIDED_WEIGHTS = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


class ChartMetric:
    """指数坐标卡中的 Finsler 度量"""

    def __init__(
        self,
        algebra: LieAlgebra,
        norm: MinkowskiNorm,
        numerics: Optional[NumericsConfig] = None,
        scheme: Optional[FiniteDifferenceScheme] = None,
    ):
        if norm.dim != algebra.dim_m:
            raise InputError(f"范数维数 {norm.dim} 与 dim_m = {algebra.dim_m} 不一致")
        reductive = algebra.check_reductive()
        if not reductive.passed:
            raise UnsupportedConfigurationError(
                "坐标卡校验器只支持约化分解", details=reductive.to_dict(),
            )
        self.algebra = algebra
        self.norm = norm
        self.numerics = numerics or NumericsConfig()
        self.radius = self.numerics.chart_radius
        self.dexp_tol = self.numerics.dexp_tol
        self.n = algebra.dim_m
        scheme = scheme or DEFAULT_SCHEME
        # G 内部的 x 导数 / 对 G 的一阶导数 / 对 G 的二阶导数
        self._inner = scheme.for_order(1)
        self._first = scheme.for_order(3)
        self._second = scheme.for_order(4)

    @classmethod
    def from_spray(cls, spray: SprayModel) -> "ChartMetric":
        if not spray.is_finsler:
            raise UnsupportedConfigurationError("坐标卡校验器需要 Finsler 来源")
        return cls(spray.algebra, spray.source.norm, numerics=spray.numerics, scheme=spray.scheme)

    # ------------------------------------------------------------------
    # 基础量
    # ------------------------------------------------------------------
    def _vector(self, x: Any, label: str) -> np.ndarray:
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.size != self.n:
            raise InputError(f"{label} 维度不匹配: 期望 {self.n}, 实际 {arr.size}")
        return arr

    def _point(self, x: Any) -> np.ndarray:
        x = self._vector(x, "x")
        norm_x = float(np.linalg.norm(x))
        if norm_x > self.radius:
            raise ChartRadiusError(
                f"‖x‖ = {norm_x:.4g} 超出坐标卡半径 {self.radius}",
                details={"x": x.tolist(), "radius": self.radius},
            )
        return x

    def _direction(self, y: Any) -> np.ndarray:
        y = self._vector(y, "y")
        if not np.any(y):
            raise InputError("y 不能为零向量")
        return y

    def _matrix(self, x: np.ndarray) -> np.ndarray:
        n = self.n
        return self.algebra.dexp_matrix(self.algebra.embed_m(x), tol=self.dexp_tol)[:n, :n]

    def chart_matrix(self, x: Any) -> np.ndarray:
        """M(x)：v ↦ (T_x v)_m"""
        return self._matrix(self._point(x))

    def chart_value(self, x: Any, v: Any) -> float:
        x = self._point(x)
        v = self._vector(v, "v")
        return self.norm.value(self._matrix(x) @ v)

    def _energy(self, x: np.ndarray, v: np.ndarray) -> float:
        return self.norm.value(self._matrix(x) @ v) ** 2

    def _grad_v_energy(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        M = self._matrix(x)
        u = M @ v
        return 2.0 * M.T @ (self.norm.fundamental_tensor(u) @ u)

    # ------------------------------------------------------------------
    # 喷射系数与曲率
    # ------------------------------------------------------------------
    def _G(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        M = self._matrix(x)
        g_chart = M.T @ self.norm.fundamental_tensor(M @ y) @ M
        try:
            factor = cho_factor(g_chart)
        except LinAlgError:
            raise StrongConvexityError(
                "坐标卡基本张量不正定", details={"x": x.tolist(), "y": y.tolist()},
            )
        mixed = self._inner.derivative(lambda p: self._grad_v_energy(p, y), x, y)
        grad_x = np.array([
            float(self._inner.derivative(lambda p: self._energy(p, y), x, e))
            for e in np.eye(self.n)
        ])
        return 0.25 * cho_solve(factor, mixed - grad_x)

    def spray_coefficients(self, x: Any, y: Any) -> np.ndarray:
        """G^i = ¼ g^{il}([F²]_{x^k y^l} y^k - [F²]_{x^l})"""
        return self._G(self._point(x), self._direction(y))

    def _y_scale(self, y: np.ndarray) -> float:
        return 1.0 + float(np.linalg.norm(y))

    def d_v_spray(self, x: np.ndarray, v: np.ndarray, direction: np.ndarray) -> np.ndarray:
        """D_v G(x, v)[direction] = N^i_j(x, v) direction^j"""
        return self._first.derivative(
            lambda p: self._G(x, p), v, direction, scale=self._y_scale(v), cone_guard=True,
        )

    def connection_coeffs(self, x: Any, y: Any) -> np.ndarray:
        """N^i_j = ∂G^i/∂y^j"""
        x = self._point(x)
        y = self._direction(y)
        return self._first.jacobian(lambda p: self._G(x, p), y, scale=self._y_scale(y), cone_guard=True)

    def riemann_coeffs(self, x: Any, y: Any) -> np.ndarray:
        """R^i_k = 2∂G^i/∂x^k - y^j ∂²G^i/∂x^j∂y^k + 2G^j ∂²G^i/∂y^j∂y^k - N^i_j N^j_k"""
        x = self._point(x)
        y = self._direction(y)
        n = self.n
        G0 = self._G(x, y)
        N = self.connection_coeffs(x, y)
        dG_dx = self._first.jacobian(lambda p: self._G(p, y), x)

        def joint(z: np.ndarray) -> np.ndarray:
            return self._G(z[:n], z[n:])

        z0 = np.concatenate([x, y])
        along_y = np.concatenate([y, np.zeros(n)])
        along_G = np.concatenate([np.zeros(n), G0])
        xy_term = np.zeros((n, n))
        yy_term = np.zeros((n, n))
        for k in range(n):
            e_k = np.concatenate([np.zeros(n), np.eye(n)[k]])
            xy_term[:, k] = self._second.mixed_second(joint, z0, along_y, e_k)
            yy_term[:, k] = self._second.mixed_second(joint, z0, along_G, e_k)
        return 2.0 * dG_dx - xy_term + 2.0 * yy_term - N @ N

    def log_density_derivative(self, x: Any, y: Any) -> float:
        """(y^i/σ) ∂σ/∂x^i，σ(x) = det M(x)"""
        x = self._point(x)
        y = self._direction(y)
        return float(self._inner.derivative(
            lambda p: np.log(abs(np.linalg.det(self._matrix(p)))), x, y,
        ))

    def s_curvature_chart(self, x: Any, y: Any) -> float:
        """S(x, y) = N^i_i(x, y) - (y^i/σ(x)) ∂σ/∂x^i"""
        if not self.algebra.check_unimodular_isotropy().passed:
            logger.warning("Ad(H) 在 g/h 上不是幺模的，坐标卡 S 曲率只作参考")
        return float(np.trace(self.connection_coeffs(x, y))) - self.log_density_derivative(x, y)

    # ------------------------------------------------------------------
    # 沿坐标曲线
    # ------------------------------------------------------------------
    def chart_geodesic(self, y: Any, t_end: float, dt: float, x0: Any = None) -> Trajectory:
        """ẍ + 2G(x, ẋ) = 0，状态为 (x, ẋ)"""
        y = self._direction(y)
        x0 = np.zeros(self.n) if x0 is None else self._point(x0)
        n = self.n

        def rhs(t: float, state: np.ndarray) -> np.ndarray:
            x, v = state[:n], state[n:]
            return np.concatenate([v, -2.0 * self._G(self._point(x), v)])

        return solve_ode(rhs, np.concatenate([x0, y]), 0.0, t_end, dt, method="rk4", label="chart_geodesic")

    def compare_eta(self, spray: SprayModel, y: Any, dt: float = 1e-2) -> float:
        """‖d/dt|₀ (M(x(t)) ẋ(t)) + η(y)‖，x(t) 为从 (0, y) 出发的坐标测地线

        在单位方向 u = y/‖y‖ 上积分，残差按二次齐次性乘以 ‖y‖²，
        这样测地线走过的坐标距离与 ‖y‖ 无关。
        """
        y = self._direction(y)
        scale = float(np.linalg.norm(y))
        u = y / scale
        traj = self.chart_geodesic(u, 4.0 * dt, dt)
        n = self.n
        samples = np.array([self._matrix(s[:n]) @ s[n:] for s in traj.states[:5]])
        velocity = ONE_SIDED_WEIGHTS @ samples / dt
        return scale * scale * float(np.linalg.norm(velocity + spray.eta(u)))

    def transport_chart(
        self,
        base: Any,
        vector: Any,
        mode: str = "linear",
        t_end: float = 0.5,
        dt: float = 1e-2,
        x_curve: Optional[Callable[[float], Any]] = None,
        pullback: bool = True,
    ) -> Trajectory:
        """坐标卡中的平行移动

        线性     Ẇ = -N^i_j(x, ẋ) W^j
        非线性   Ẏ = -ẋ^j N^i_j(x, Y)
        默认底曲线 x(t) = t·base（即 exp(t·base)·o）；x_curve 可给出 t ↦ (x, ẋ)。
        pullback=True 时返回 M(x(t)) W(t)，可直接与 m 上的齐性平行移动比较。
        """
        mode = mode.strip().lower()
        if mode not in ("linear", "nonlinear"):
            raise InputError(f"未知的平行移动模式: {mode}（可选 linear / nonlinear）")
        vector = self._vector(vector, "初始向量")
        if x_curve is None:
            base = self._direction(base)
            if abs(t_end) * float(np.linalg.norm(base)) > self.radius:
                raise ChartRadiusError(
                    f"底曲线 t·y 在 t = {t_end} 处超出坐标卡半径 {self.radius}",
                    details={"base": base.tolist(), "t_end": t_end},
                )

            def curve(t: float):
                return t * base, base
        else:
            def curve(t: float):
                x, xdot = x_curve(t)
                return self._point(x), self._vector(xdot, "ẋ")

        if mode == "linear":
            def rhs(t: float, W: np.ndarray) -> np.ndarray:
                x, xdot = curve(t)
                return -self.d_v_spray(x, xdot, W)
        else:
            if not np.any(vector):
                raise InputError("非线性平行移动的初值不能为零向量")

            def rhs(t: float, Y: np.ndarray) -> np.ndarray:
                x, xdot = curve(t)
                return -self.d_v_spray(x, Y, xdot)

        traj = solve_ode(rhs, vector, 0.0, t_end, dt, method="rk4", label=f"chart_{mode}_transport")
        if not pullback:
            return traj
        pulled = np.array([self._matrix(curve(t)[0]) @ s for t, s in zip(traj.times, traj.states)])
        return Trajectory(times=traj.times, states=pulled, meta={**traj.meta, "pullback": True, "mode": mode})

    def landsberg_chart(self, y: Any, w: Any) -> float:
        """沿坐标测地线、以坐标平行的 W 求 d/dt C_{ẋ}(W, W, W)|₀

        只需曲线的一阶 jet：x = t y，ẋ = y - 2t G(0, y)，W = w - t N(0, y) w。
        """
        y = self._direction(y)
        w = self._vector(w, "w")
        if self.norm.is_riemannian:
            return 0.0
        origin = np.zeros(self.n)
        G0 = self._G(origin, y)
        Nw = self.d_v_spray(origin, y, w)

        def phi(t: np.ndarray) -> float:
            s = float(t[0])
            M = self._matrix(s * y)
            U = M @ (w - s * Nw)
            return self.norm.cartan(M @ (y - 2.0 * s * G0), U, U, U)

        return float(self._inner.derivative(phi, np.zeros(1), np.ones(1)))


# ----------------------------------------------------------------------
# 原点处的对照
# ----------------------------------------------------------------------
def transport_cross_check(
    spray: SprayModel,
    chart: ChartMetric,
    base: Any,
    vector: Any,
    mode: str = "linear",
    t_end: float = 0.5,
    dt: float = 1e-2,
    tol: Optional[float] = None,
) -> CheckReport:
    """沿 exp(t·base)·o 对比坐标卡平行移动与 m 上的平行移动

    该曲线的提升是 exp(t·base)，h 因子恒为单位元，m 上的速度恒为 base。
    """
    tol = spray.numerics.transport_tol if tol is None else tol
    base = spray._nonzero(base)
    chart_traj = chart.transport_chart(base, vector, mode=mode, t_end=t_end, dt=dt)
    if mode.strip().lower() == "linear":
        homogeneous = linear_transport(spray, base, vector, t_end, dt=dt, method="rk4")
    else:
        homogeneous = nonlinear_transport(spray, base, vector, t_end, dt=dt, method="rk4")
    residual = float(np.max(np.abs(chart_traj.states - homogeneous.states)))
    return CheckReport(
        name=f"{mode}_transport", passed=residual <= tol, max_violation=residual, tolerance=tol,
        details={"base": base.tolist(), "vector": np.asarray(vector, dtype=float).tolist(), "t_end": t_end},
    )


def compare_at_origin(
    spray: SprayModel,
    chart: ChartMetric,
    y: Any,
    w: Any,
    eta_dt: float = 1e-2,
) -> List[Dict[str, Any]]:
    """η / Riemann / S / Landsberg 的原点对照，每项一行"""
    num = spray.numerics
    y = spray._nonzero(y)
    w = spray._vector(w, "w")
    rows = []

    def row(quantity: str, homogeneous: Any, chart_value: Any, residual: float, tol: float):
        rows.append({
            "quantity": quantity,
            "homogeneous": homogeneous,
            "chart": chart_value,
            "residual": float(residual),
            "tolerance": tol,
            "passed": bool(residual <= tol),
        })

    # η 二次齐次，残差相对 ‖y‖² 判定
    y_sq = float(y @ y)
    row("eta", spray.eta(y), None, chart.compare_eta(spray, y, dt=eta_dt) / max(1.0, y_sq), num.eta_tol)

    R_h = spray.riemann_operator(y)
    R_c = chart.riemann_coeffs(np.zeros(spray.n), y)
    row("riemann", R_h, R_c, float(np.max(np.abs(R_h - R_c))) / max(1.0, float(np.max(np.abs(R_h)))), num.oracle_tol)

    s_h = spray.s_curvature(y)
    s_c = chart.s_curvature_chart(np.zeros(spray.n), y)
    row("s_curvature", s_h, s_c, abs(s_h - s_c), num.s_curvature_tol)

    L_h = spray.landsberg(y, w)
    L_c = chart.landsberg_chart(y, w)
    row("landsberg", L_h, L_c, abs(L_h - L_c), num.oracle_tol)

    # 只报告，不参与判定
    rows.append({
        "quantity": "riemann_y",
        "homogeneous": float(np.linalg.norm(R_h @ y)),
        "chart": float(np.linalg.norm(R_c @ y)),
        "residual": None,
        "tolerance": None,
        "passed": True,
    })
    return rows
