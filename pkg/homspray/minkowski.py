"""
m 上的 Minkowski 范数

EuclideanNorm / RandersNorm 使用闭式张量（标准 Finsler 公式），
CallbackNorm 由用户给出的标量函数经有限差分得到各阶张量。

约定：
    g_y(u, v)        = ½ ∂²/∂s∂t F²(y + su + tv)
    C_y(u, v, w)     = ¼ ∂³/∂u∂v∂w F²(y) = ½ d/dt g_{y+tw}(u, v)
    C_y(u, v, w, z)  = d/dt C_{y+tz}(u, v, w)
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from .errors import InputError, StrongConvexityError, UnsupportedConfigurationError
from .finite_difference import DEFAULT_SCHEME, FiniteDifferenceScheme
from .lie_algebra import LieAlgebra
from .utils import CheckReport

logger = logging.getLogger(__name__)


def _spd_matrix(a: Any, label: str) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"{label} 必须是方阵")
    if not np.allclose(a, a.T, atol=1e-14, rtol=0.0):
        raise InputError(f"{label} 必须对称")
    try:
        cho_factor(a)
    except LinAlgError:
        raise InputError(f"{label} 必须正定")
    a.setflags(write=False)
    return a


class MinkowskiNorm(ABC):
    """Minkowski 范数接口"""

    name = "minkowski"

    def __init__(self, dim: int, scheme: Optional[FiniteDifferenceScheme] = None):
        if dim < 1:
            raise InputError("范数维数必须为正")
        self.dim = int(dim)
        self.scheme = scheme or DEFAULT_SCHEME

    # ------------------------------------------------------------------
    # 需要子类实现
    # ------------------------------------------------------------------
    @abstractmethod
    def value(self, y: Any) -> float:
        """F(y)"""

    @abstractmethod
    def _tensor(self, y: np.ndarray) -> np.ndarray:
        """未做正定性检查的基本张量"""

    # ------------------------------------------------------------------
    # 通用实现（子类可用闭式覆盖）
    # ------------------------------------------------------------------
    def _vector(self, y: Any, label: str = "y") -> np.ndarray:
        arr = np.asarray(y, dtype=float).reshape(-1)
        if arr.size != self.dim:
            raise InputError(f"{label} 维度不匹配: 期望 {self.dim}, 实际 {arr.size}")
        return arr

    def _nonzero(self, y: Any) -> np.ndarray:
        y = self._vector(y)
        if not np.any(y):
            raise InputError("y 不能为零向量（基本张量在原点无定义）")
        return y

    def _scale(self, y: np.ndarray) -> float:
        return max(1.0, float(np.linalg.norm(y)))

    def factorized_tensor(self, y: Any) -> Tuple[np.ndarray, Tuple[np.ndarray, bool]]:
        """返回 (g_y, Cholesky 分解)；不正定时抛出 StrongConvexityError"""
        y = self._nonzero(y)
        g = self._tensor(y)
        g = 0.5 * (g + g.T)
        try:
            factor = cho_factor(g)
        except LinAlgError:
            raise StrongConvexityError(
                f"基本张量在 y={y.tolist()} 处不正定（强凸性失败）",
                details={"y": y.tolist(), "eigenvalues": np.linalg.eigvalsh(g).tolist()},
            )
        return g, factor

    def fundamental_tensor(self, y: Any) -> np.ndarray:
        g, _ = self.factorized_tensor(y)
        return g

    def cartan_matrix(self, y: Any, w: Any) -> np.ndarray:
        """矩阵 C_y(·, ·, w) = ½ D_w g_y"""
        y = self._nonzero(y)
        w = self._vector(w, "w")
        scheme = self.scheme.for_order(3)
        return 0.5 * scheme.derivative(self._tensor, y, w, scale=self._scale(y), cone_guard=True)

    def cartan(self, y: Any, u: Any, v: Any, w: Any) -> float:
        u = self._vector(u, "u")
        v = self._vector(v, "v")
        return float(u @ self.cartan_matrix(y, w) @ v)

    def cartan4(self, y: Any, u: Any, v: Any, w: Any, z: Any) -> float:
        """d/dt C_{y+tz}(u, v, w)"""
        y = self._nonzero(y)
        u = self._vector(u, "u")
        v = self._vector(v, "v")
        w = self._vector(w, "w")
        z = self._vector(z, "z")
        scheme = self.scheme.for_order(4)
        return float(scheme.derivative(
            lambda p: u @ self.cartan_matrix(p, w) @ v, y, z,
            scale=self._scale(y), cone_guard=True,
        ))

    def check_strong_convexity(self, samples: int = 64, seed: int = 42) -> CheckReport:
        """在随机方向上抽样检查 g_y 正定"""
        rng = np.random.default_rng(seed)
        worst_eig = np.inf
        violations = []
        for _ in range(samples):
            y = rng.standard_normal(self.dim)
            eigs = np.linalg.eigvalsh(self._tensor(y))
            worst_eig = min(worst_eig, float(eigs[0]))
            if eigs[0] <= 0.0:
                violations.append({"y": y.tolist(), "min_eigenvalue": float(eigs[0])})
        return CheckReport(
            name="strong_convexity",
            passed=not violations,
            max_violation=float(max(0.0, -worst_eig)),
            tolerance=0.0,
            violations=violations,
            details={"samples": samples, "seed": seed, "min_eigenvalue": worst_eig},
        )

    @property
    def is_riemannian(self) -> bool:
        return False

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"


class EuclideanNorm(MinkowskiNorm):
    """F(y) = sqrt(yᵀ a y)"""

    name = "euclidean"

    def __init__(self, a: Any, scheme: Optional[FiniteDifferenceScheme] = None):
        a = _spd_matrix(a, "矩阵 a")
        super().__init__(a.shape[0], scheme)
        self.a = a

    def value(self, y: Any) -> float:
        y = self._vector(y)
        return float(np.sqrt(max(0.0, y @ self.a @ y)))

    def _tensor(self, y: np.ndarray) -> np.ndarray:
        return np.array(self.a)

    def cartan_matrix(self, y: Any, w: Any) -> np.ndarray:
        self._nonzero(y)
        self._vector(w, "w")
        return np.zeros((self.dim, self.dim))

    def cartan4(self, y: Any, u: Any, v: Any, w: Any, z: Any) -> float:
        self._nonzero(y)
        return 0.0

    @property
    def is_riemannian(self) -> bool:
        return True

    @classmethod
    def identity(cls, n: int) -> "EuclideanNorm":
        return cls(np.eye(n))


class RandersNorm(MinkowskiNorm):
    """F(y) = α(y) + β(y)，α = sqrt(yᵀ a y)，β = b·y，要求 |b|_α < 1

    记号：ℓ = a y / α，A = a - ℓℓᵀ，δ = b - (β/α) ℓ
        g_y = (F/α) A + (ℓ + b)(ℓ + b)ᵀ
        C_y(u, v, w) = (1/2α) Σ_cyc A(u, v) δ(w)
    """

    name = "randers"

    def __init__(self, a: Any, b: Any, scheme: Optional[FiniteDifferenceScheme] = None):
        a = _spd_matrix(a, "矩阵 a")
        super().__init__(a.shape[0], scheme)
        b = self._vector(b, "b").copy()
        b_norm = float(np.sqrt(b @ np.linalg.solve(a, b)))
        if b_norm >= 1.0:
            raise InputError(
                f"Randers 条件不满足: |b|_α = {b_norm:.6g} ≥ 1",
                details={"b_norm": b_norm},
            )
        b.setflags(write=False)
        self.a = a
        self.b = b
        self.b_norm = b_norm

    def value(self, y: Any) -> float:
        y = self._vector(y)
        alpha = float(np.sqrt(max(0.0, y @ self.a @ y)))
        return alpha + float(self.b @ y)

    def _parts(self, y: np.ndarray):
        alpha = float(np.sqrt(y @ self.a @ y))
        beta = float(self.b @ y)
        ell = self.a @ y / alpha
        A = self.a - np.outer(ell, ell)
        delta = self.b - (beta / alpha) * ell
        return alpha, beta, ell, A, delta

    def _tensor(self, y: np.ndarray) -> np.ndarray:
        alpha, beta, ell, A, _ = self._parts(y)
        m_vec = ell + self.b
        return ((alpha + beta) / alpha) * A + np.outer(m_vec, m_vec)

    def cartan_matrix(self, y: Any, w: Any) -> np.ndarray:
        y = self._nonzero(y)
        w = self._vector(w, "w")
        alpha, _, _, A, delta = self._parts(y)
        Aw = A @ w
        return (A * float(delta @ w) + np.outer(Aw, delta) + np.outer(delta, Aw)) / (2.0 * alpha)

    def cartan4(self, y: Any, u: Any, v: Any, w: Any, z: Any) -> float:
        y = self._nonzero(y)
        u, v, w, z = (self._vector(t, label) for t, label in ((u, "u"), (v, "v"), (w, "w"), (z, "z")))
        alpha, beta, ell, A, delta = self._parts(y)

        def A_(p, q):
            return float(p @ A @ q)

        def dA(p, q):
            return -(A_(p, z) * float(ell @ q) + float(ell @ p) * A_(q, z)) / alpha

        def d_delta(p):
            return -(float(delta @ z) * float(ell @ p) + (beta / alpha) * A_(p, z)) / alpha

        triples = ((u, v, w), (v, w, u), (w, u, v))
        cartan = sum(A_(p, q) * float(delta @ r) for p, q, r in triples) / (2.0 * alpha)
        varied = sum(dA(p, q) * float(delta @ r) + A_(p, q) * d_delta(r) for p, q, r in triples)
        return -(float(ell @ z) / alpha) * cartan + varied / (2.0 * alpha)


class CallbackNorm(MinkowskiNorm):
    """用户给出的 F，张量全部由有限差分得到"""

    name = "callback"

    def __init__(
        self,
        func: Callable[[np.ndarray], float],
        dim: int,
        scheme: Optional[FiniteDifferenceScheme] = None,
        label: str = "callback",
    ):
        super().__init__(dim, scheme)
        self.func = func
        self.label = label

    def value(self, y: Any) -> float:
        y = self._vector(y)
        if not np.any(y):
            return 0.0
        return float(self.func(y))

    def _energy(self, y: np.ndarray) -> float:
        return 0.5 * float(self.func(y)) ** 2

    def _tensor(self, y: np.ndarray) -> np.ndarray:
        scheme = self.scheme.for_order(2)
        return scheme.hessian(self._energy, y, scale=self._scale(y))

    def __repr__(self) -> str:
        return f"CallbackNorm(dim={self.dim}, label={self.label!r})"


def check_ad_h_invariance(
    norm: MinkowskiNorm,
    algebra: LieAlgebra,
    samples: int = 64,
    seed: int = 42,
    tol: float = 1e-8,
) -> CheckReport:
    """无穷小 Ad(H) 不变性：对 h 的基 z 与抽样 y，g_y(y, [z, y]_m) = 0"""
    if norm.dim != algebra.dim_m:
        raise InputError(f"范数维数 {norm.dim} 与 dim_m = {algebra.dim_m} 不一致")
    reductive = algebra.check_reductive()
    if not reductive.passed:
        raise UnsupportedConfigurationError(
            "非约化分解上没有可用的 Ad(H) 不变性判据",
            details=reductive.to_dict(),
        )
    rng = np.random.default_rng(seed)
    worst = 0.0
    violations = []
    for _ in range(samples if algebra.dim_h else 0):
        y = rng.standard_normal(algebra.dim_m)
        g = norm.fundamental_tensor(y)
        gy = g @ y
        for alpha in range(algebra.dim_m, algebra.dim_g):
            z = np.zeros(algebra.dim_g)
            z[alpha] = 1.0
            residual = abs(float(gy @ algebra.bracket_m(z, y)))
            worst = max(worst, residual)
            if residual > tol:
                violations.append({"y": y.tolist(), "h_index": alpha, "residual": residual})
    return CheckReport(
        name="ad_h_invariance",
        passed=worst <= tol,
        max_violation=worst,
        tolerance=tol,
        violations=violations[:20],
        details={"samples": samples, "seed": seed, "dim_h": algebra.dim_h},
    )
