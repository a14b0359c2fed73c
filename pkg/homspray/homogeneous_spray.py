"""
齐性喷射：喷射向量场 η、联络算子 N 以及曲率

η 的两种来源：
    FinslerSource  由 m 上 Ad(H) 不变的 Minkowski 范数决定，
                   g_y(η(y), u) = g_y(y, [u, y]_m)
    DirectSource   用户直接给出的正 2 次齐次映射 m\\{0} → m

N 的两种算法：
    A  N(y, w) = ½ Dη(y, w) - ½ [y, w]_m
    B  2 g_y(N(y, v), u) = g_y([u, v]_m, y) + g_y([u, y]_m, v)
                           + g_y([v, y]_m, u) - 2 C_y(u, v, η(y))
auto 时 Finsler 来源用 B，直接给出的 η 用 A。
"""

import logging
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy.linalg import cho_solve

from .config import NumericsConfig
from .errors import (
    DegenerateFlagError,
    InputError,
    UnsupportedConfigurationError,
)
from .finite_difference import DEFAULT_SCHEME, FiniteDifferenceScheme
from .lie_algebra import LieAlgebra
from .minkowski import CallbackNorm, MinkowskiNorm, check_ad_h_invariance
from .utils import CheckReport

logger = logging.getLogger(__name__)

HOMOGENEITY_SCALES = (0.5, 2.0, 3.7)
N_HOMOGENEITY_SCALES = (0.5, 2.0)

RIEMANN_TERMS = ("h_bracket", "dN_eta", "N_N", "N_bracket", "bracket_N")


class FinslerSource:
    """η 由 Minkowski 范数经线性方程求出"""

    kind = "finsler"

    def __init__(self, norm: MinkowskiNorm):
        self.norm = norm

    def __repr__(self) -> str:
        return f"FinslerSource({self.norm!r})"


class DirectSource:
    """用户给出的 η，可选解析导数 Dη(y, u)

    metric 可选：已知守恒二次型（例如刚体的惯量矩阵）时用于报告守恒量。
    """

    kind = "direct"

    def __init__(
        self,
        field: Callable[[np.ndarray], Any],
        derivative: Optional[Callable[[np.ndarray, np.ndarray], Any]] = None,
        label: str = "direct",
        metric: Optional[Any] = None,
    ):
        self.field = field
        self.derivative = derivative
        self.label = label
        self.metric = None if metric is None else np.array(metric, dtype=float)

    @classmethod
    def zero(cls, n: int) -> "DirectSource":
        """η ≡ 0：典范（Nomizu）喷射"""
        return cls(lambda y: np.zeros(n), lambda y, u: np.zeros(n), label="zero")

    @classmethod
    def quadratic(cls, Q: Any, label: str = "quadratic") -> "DirectSource":
        """η_i(y) = Σ_jk Q[i, j, k] y_j y_k"""
        Q = np.array(Q, dtype=float)
        if Q.ndim != 3 or not (Q.shape[0] == Q.shape[1] == Q.shape[2]):
            raise InputError(f"二次型张量必须是 n×n×n，实际形状 {Q.shape}")
        Q.setflags(write=False)
        return cls(
            lambda y: np.einsum('ijk,j,k->i', Q, y, y),
            lambda y, u: np.einsum('ijk,j,k->i', Q, u, y) + np.einsum('ijk,j,k->i', Q, y, u),
            label=label,
        )

    @classmethod
    def euler_top(cls, inertia: Any) -> "DirectSource":
        """刚体 Euler 方程：η_i(y) = (y × I y)_i / I_i"""
        inertia = np.asarray(inertia, dtype=float).reshape(-1)
        if inertia.size != 3 or np.any(inertia <= 0):
            raise InputError("惯量必须是 3 个正数")
        eps = np.zeros((3, 3, 3))
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            eps[i, j, k] = 1.0
            eps[i, k, j] = -1.0
        Q = eps * inertia[None, None, :] / inertia[:, None, None]
        source = cls.quadratic(Q, label=f"euler_top{tuple(inertia.tolist())}")
        source.metric = np.diag(inertia)
        return source

    def __repr__(self) -> str:
        return f"DirectSource({self.label!r})"


class SprayModel:
    """齐性喷射 (η, N) 及其曲率"""

    def __init__(
        self,
        algebra: LieAlgebra,
        source: Any,
        scheme: Optional[FiniteDifferenceScheme] = None,
        n_mode: str = "auto",
        numerics: Optional[NumericsConfig] = None,
        check_invariance: bool = True,
        seed: int = 42,
    ):
        self.algebra = algebra
        self.source = source
        self.scheme = scheme or DEFAULT_SCHEME
        self.numerics = numerics or NumericsConfig()
        self.n = algebra.dim_m

        mode = n_mode.strip().upper()
        if mode not in ("AUTO", "A", "B"):
            raise InputError(f"未知的 N 计算模式: {n_mode}（可选 auto / A / B）")
        if mode == "AUTO":
            mode = "B" if self.is_finsler else "A"
        if mode == "B" and not self.is_finsler:
            raise UnsupportedConfigurationError("N 的 B 模式需要 Finsler 来源")
        self.n_mode = mode

        if self.is_finsler:
            norm = source.norm
            if norm.dim != self.n:
                raise InputError(f"范数维数 {norm.dim} 与 dim_m = {self.n} 不一致")
            reductive = algebra.check_reductive()
            if not reductive.passed:
                raise UnsupportedConfigurationError(
                    f"{algebra.name} 的分解不是约化的，Finsler 喷射只在约化情形下定义",
                    details=reductive.to_dict(),
                )
            if check_invariance:
                report = check_ad_h_invariance(
                    norm, algebra,
                    samples=self.numerics.convexity_samples,
                    seed=seed,
                    tol=self.numerics.invariance_tol,
                )
                if not report.passed:
                    raise UnsupportedConfigurationError(
                        f"范数不是 Ad(H) 不变的（最大偏差 {report.max_violation:.3e}）",
                        details=report.to_dict(),
                    )
        elif not isinstance(source, DirectSource):
            raise InputError(f"未知的 η 来源: {type(source).__name__}")

        self.unimodular = algebra.check_unimodular_isotropy()
        if not self.unimodular.passed:
            logger.warning(
                f"{algebra.name}: Ad(H) 在 g/h 上不是幺模的，S 曲率只作参考 "
                f"(迹 {self.unimodular.details.get('traces')})"
            )

    # ------------------------------------------------------------------
    # 基础
    # ------------------------------------------------------------------
    @property
    def is_finsler(self) -> bool:
        return isinstance(self.source, FinslerSource)

    @property
    def norm(self) -> Optional[MinkowskiNorm]:
        return self.source.norm if self.is_finsler else None

    def _require_finsler(self, what: str) -> MinkowskiNorm:
        if not self.is_finsler:
            raise UnsupportedConfigurationError(f"{what} 需要 Finsler 来源（直接给出的 η 没有 Cartan 张量）")
        return self.source.norm

    def _vector(self, y: Any, label: str = "y") -> np.ndarray:
        arr = np.asarray(y, dtype=float).reshape(-1)
        if arr.size != self.n:
            raise InputError(f"{label} 维度不匹配: 期望 {self.n}, 实际 {arr.size}")
        return arr

    def _nonzero(self, y: Any) -> np.ndarray:
        y = self._vector(y)
        if not np.any(y):
            raise InputError("y 不能为零向量（喷射定义在 m\\{0} 上）")
        return y

    def _step_scale(self, y: np.ndarray) -> float:
        return 1.0 + float(np.linalg.norm(y))

    @property
    def _n_is_exact(self) -> bool:
        """N 不依赖内部差分时，对 N 再求导可以用基准步长"""
        if self.n_mode == "B":
            return not isinstance(self.source.norm, CallbackNorm)
        return isinstance(self.source, DirectSource) and self.source.derivative is not None

    # ------------------------------------------------------------------
    # η 与 Dη
    # ------------------------------------------------------------------
    def eta(self, y: Any) -> np.ndarray:
        y = self._nonzero(y)
        if self.is_finsler:
            g, factor = self.source.norm.factorized_tensor(y)
            rhs = -self.algebra.ad_m_matrix(y).T @ (g @ y)
            return cho_solve(factor, rhs)
        value = self._vector(self.source.field(y), "η(y)")
        return np.array(value, dtype=float)

    def deviation_field(self, y: Any) -> np.ndarray:
        """G = G₀ - H 中的偏差场 H 在基点处的值"""
        return self.eta(y)

    def geodesic_vector_residual(self, y: Any) -> float:
        """exp(ty)·o 是测地线当且仅当 η(y) = 0"""
        return float(np.linalg.norm(self.eta(y)))

    def d_eta(self, y: Any, u: Any) -> np.ndarray:
        """Dη(y, u) = d/dt η(y + tu)|₀"""
        y = self._nonzero(y)
        u = self._vector(u, "u")
        if isinstance(self.source, DirectSource) and self.source.derivative is not None:
            return self._vector(self.source.derivative(y, u), "Dη(y, u)").astype(float)
        return self.scheme.derivative(self.eta, y, u, scale=self._step_scale(y), cone_guard=True)

    # ------------------------------------------------------------------
    # 联络算子
    # ------------------------------------------------------------------
    def _connection_a(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        return 0.5 * self.d_eta(y, w) - 0.5 * self.algebra.bracket_m(y, w)

    def _connection_b(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        norm = self.source.norm
        g, factor = norm.factorized_tensor(y)
        ad_y = self.algebra.ad_m_matrix(y)
        ad_w = self.algebra.ad_m_matrix(w)
        eta = cho_solve(factor, -ad_y.T @ (g @ y))
        rhs = (
            -ad_w.T @ (g @ y)
            - ad_y.T @ (g @ w)
            + g @ self.algebra.bracket_m(w, y)
            - 2.0 * norm.cartan_matrix(y, eta) @ w
        )
        return 0.5 * cho_solve(factor, rhs)

    def connection_N(self, y: Any, w: Any, mode: Optional[str] = None) -> np.ndarray:
        y = self._nonzero(y)
        w = self._vector(w, "w")
        mode = (mode or self.n_mode).upper()
        if mode == "A":
            return self._connection_a(y, w)
        if mode == "B":
            self._require_finsler("N 的 B 模式")
            return self._connection_b(y, w)
        raise InputError(f"未知的 N 计算模式: {mode}")

    def connection_matrix(self, y: Any, mode: Optional[str] = None) -> np.ndarray:
        """第 j 列为 N(y, e_j)"""
        y = self._nonzero(y)
        return np.stack([self.connection_N(y, e, mode=mode) for e in np.eye(self.n)], axis=1)

    def check_connection_modes(self, samples: int = 50, seed: int = 42, tol: Optional[float] = None) -> CheckReport:
        """A / B 两条路径的 N 互相校验"""
        self._require_finsler("N 的模式互校")
        tol = self.numerics.mode_agreement_tol if tol is None else tol
        rng = np.random.default_rng(seed)
        worst = 0.0
        violations = []
        for _ in range(samples):
            y = rng.standard_normal(self.n)
            w = rng.standard_normal(self.n)
            n_a = self.connection_N(y, w, mode="A")
            n_b = self.connection_N(y, w, mode="B")
            err = float(np.linalg.norm(n_a - n_b)) / (1.0 + float(np.linalg.norm(n_b)))
            worst = max(worst, err)
            if err > tol:
                violations.append({"y": y.tolist(), "w": w.tolist(), "error": err})
        if violations:
            logger.warning(f"N 的 A/B 两种算法不一致: 最大偏差 {worst:.3e} > {tol:.1e}")
        return CheckReport(
            name="connection_modes", passed=not violations, max_violation=worst,
            tolerance=tol, violations=violations[:20], details={"samples": samples, "seed": seed},
        )

    def dN_along(self, y: Any, direction: Any, w: Any) -> np.ndarray:
        """d/ds N(y + s·direction, w)|₀"""
        y = self._nonzero(y)
        direction = self._vector(direction, "direction")
        w = self._vector(w, "w")
        scheme = self.scheme if self._n_is_exact else self.scheme.widened()
        return scheme.derivative(
            lambda p: self.connection_N(p, w), y, direction,
            scale=self._step_scale(y), cone_guard=True,
        )

    # ------------------------------------------------------------------
    # 曲率
    # ------------------------------------------------------------------
    def riemann_terms(self, y: Any) -> Dict[str, np.ndarray]:
        """Riemann 算子的五个分项，第 j 列对应 w = e_j"""
        y = self._nonzero(y)
        alg = self.algebra
        n = self.n
        y_g = alg.embed_m(y)
        ad_y = alg.ad_m_matrix(y)
        N = self.connection_matrix(y)
        eta = self.eta(y)

        h_bracket = np.zeros((n, n))
        for j in range(n):
            w_h = alg.bracket_h(alg.embed_m(np.eye(n)[j]), y_g)
            h_bracket[:, j] = alg.project_m(alg.bracket(y_g, alg.embed_h(w_h)))

        scheme = self.scheme if self._n_is_exact else self.scheme.widened()
        dN_eta = scheme.derivative(
            self.connection_matrix, y, eta, scale=self._step_scale(y), cone_guard=True,
        )

        return {
            "h_bracket": h_bracket,
            "dN_eta": dN_eta,
            "N_N": -N @ N,
            "N_bracket": N @ ad_y,
            "bracket_N": -ad_y @ N,
        }

    def riemann_operator(self, y: Any) -> np.ndarray:
        terms = self.riemann_terms(y)
        return sum(terms[name] for name in RIEMANN_TERMS)

    def riemann_y_residual(self, y: Any) -> float:
        """‖R_y(y)‖，只报告不断言"""
        y = self._nonzero(y)
        return float(np.linalg.norm(self.riemann_operator(y) @ y))

    def riemann_symmetry_residual(self, y: Any) -> float:
        """max |g_y(R u, v) - g_y(u, R v)|"""
        norm = self._require_finsler("R_y 的自伴性")
        y = self._nonzero(y)
        gR = norm.fundamental_tensor(y) @ self.riemann_operator(y)
        return float(np.max(np.abs(gR - gR.T)))

    def s_curvature(self, y: Any) -> float:
        """S(o, y) = Tr(N(y, ·) + ad_m(y))"""
        y = self._nonzero(y)
        if not self.unimodular.passed:
            logger.warning("Ad(H) 在 g/h 上不是幺模的，S 曲率公式不成立")
        return float(np.trace(self.connection_matrix(y) + self.algebra.ad_m_matrix(y)))

    def landsberg(self, y: Any, w: Any) -> float:
        """L_y(w,w,w) = 3 C_y(w, w, [w,y]_m - N(y,w)) - C_y(w, w, w, η(y))"""
        norm = self._require_finsler("Landsberg 曲率")
        y = self._nonzero(y)
        w = self._vector(w, "w")
        if norm.is_riemannian:
            return 0.0
        direction = self.algebra.bracket_m(w, y) - self.connection_N(y, w)
        return 3.0 * norm.cartan(y, w, w, direction) - norm.cartan4(y, w, w, w, self.eta(y))

    def flag_curvature(self, y: Any, w: Any) -> float:
        """K(y, w) = g_y(R_y w, w) / (F² g_y(w,w) - g_y(y,w)²)"""
        norm = self._require_finsler("旗曲率")
        y = self._nonzero(y)
        w = self._vector(w, "w")
        g = norm.fundamental_tensor(y)
        F = norm.value(y)
        denominator = F * F * float(w @ g @ w) - float(y @ g @ w) ** 2
        if denominator <= self.numerics.degenerate_flag_tol:
            raise DegenerateFlagError(
                f"旗 (y, w) 退化: 分母 {denominator:.3e}",
                details={"y": y.tolist(), "w": w.tolist(), "denominator": denominator},
            )
        Rw = self.riemann_operator(y) @ w
        return float(Rw @ g @ w) / denominator

    # ------------------------------------------------------------------
    # 诊断
    # ------------------------------------------------------------------
    def check_equivariance(self, samples: int = 32, seed: int = 42, tol: Optional[float] = None) -> CheckReport:
        """无穷小等变性：Dη(y, [z, y]_m) = [z, η(y)]_m，z 取遍 h 的基"""
        reductive = self.algebra.check_reductive()
        if not reductive.passed:
            raise UnsupportedConfigurationError(
                "非约化分解上不检查 η 的等变性", details=reductive.to_dict(),
            )
        tol = self.numerics.equivariance_tol if tol is None else tol
        alg = self.algebra
        rng = np.random.default_rng(seed)
        worst = 0.0
        violations = []
        for _ in range(samples if alg.dim_h else 0):
            y = rng.standard_normal(self.n)
            eta = self.eta(y)
            for alpha in range(alg.dim_m, alg.dim_g):
                z = np.zeros(alg.dim_g)
                z[alpha] = 1.0
                lhs = self.d_eta(y, alg.bracket_m(z, y))
                rhs = alg.bracket_m(z, eta)
                err = float(np.linalg.norm(lhs - rhs)) / (1.0 + float(np.linalg.norm(eta)))
                worst = max(worst, err)
                if err > tol:
                    violations.append({"y": y.tolist(), "h_index": alpha, "error": err})
        return CheckReport(
            name="equivariance", passed=worst <= tol, max_violation=worst,
            tolerance=tol, violations=violations[:20],
            details={"samples": samples, "seed": seed, "dim_h": alg.dim_h},
        )

    def homogeneity_residuals(self, y: Any) -> Dict[str, float]:
        """η 的 2 次齐次性与 N(·, w) 的 1 次齐次性残差"""
        y = self._nonzero(y)
        eta = self.eta(y)
        eta_scale = 1.0 + float(np.linalg.norm(eta))
        eta_residual = max(
            float(np.linalg.norm(self.eta(lam * y) - lam * lam * eta)) / (eta_scale * lam * lam)
            for lam in HOMOGENEITY_SCALES
        )
        N = self.connection_matrix(y)
        n_scale = 1.0 + float(np.max(np.abs(N)))
        n_residual = max(
            float(np.max(np.abs(self.connection_matrix(lam * y) - lam * N))) / (n_scale * lam)
            for lam in N_HOMOGENEITY_SCALES
        )
        return {"eta": eta_residual, "N": n_residual}

    def check_homogeneity(self, samples: int = 100, seed: int = 42, tol: Optional[float] = None) -> CheckReport:
        tol = self.numerics.homogeneity_tol if tol is None else tol
        rng = np.random.default_rng(seed)
        worst = {"eta": 0.0, "N": 0.0}
        violations = []
        for _ in range(samples):
            y = rng.standard_normal(self.n)
            residuals = self.homogeneity_residuals(y)
            for key, value in residuals.items():
                worst[key] = max(worst[key], value)
            if max(residuals.values()) > tol:
                violations.append({"y": y.tolist(), **residuals})
        return CheckReport(
            name="homogeneity", passed=not violations, max_violation=max(worst.values()),
            tolerance=tol, violations=violations[:20],
            details={"samples": samples, "seed": seed, "max_eta": worst["eta"], "max_N": worst["N"]},
        )

    def __repr__(self) -> str:
        return f"SprayModel(algebra={self.algebra.name!r}, source={self.source!r}, n_mode={self.n_mode!r})"
