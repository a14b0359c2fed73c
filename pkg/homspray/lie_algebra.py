"""
李代数：结构常数、分解 g = h + m、投影、伴随与 dexp

基底约定：下标 0..n-1 张成 m，n..dim_g-1 张成 h。
[e_i, e_j] = Σ_k c[i][j][k] e_k。
"""

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import InputError, SeriesConvergenceError
from .utils import CheckReport

logger = logging.getLogger(__name__)

DEXP_MAX_TERMS = 200


def _as_vector(x: Any, length: int, label: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size != length:
        raise InputError(f"{label} 维度不匹配: 期望 {length}, 实际 {arr.size}")
    return arr


class MatrixRepresentation:
    """李代数的矩阵表示 E_0..E_{m-1}（d×d 实矩阵）"""

    def __init__(self, basis_matrices: Sequence[Any]):
        mats = np.array(basis_matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise InputError("矩阵表示必须是一组 d×d 方阵")
        mats.setflags(write=False)
        self.basis_matrices = mats
        self.dimension = mats.shape[1]
        # 坐标反解用的最小二乘系统
        self._flat = mats.reshape(mats.shape[0], -1).T

    @property
    def size(self) -> int:
        return self.basis_matrices.shape[0]

    def matrix(self, x: Any) -> np.ndarray:
        """x ↦ Σ x_i E_i"""
        x = _as_vector(x, self.size, "表示向量")
        return np.einsum('i,iab->ab', x, self.basis_matrices)

    def coords(self, X: np.ndarray) -> np.ndarray:
        """矩阵 ↦ 李代数坐标（最小二乘，表示忠实时精确）"""
        sol, *_ = np.linalg.lstsq(self._flat, np.asarray(X, dtype=float).reshape(-1), rcond=None)
        return sol

    def exp(self, x: Any) -> np.ndarray:
        return expm(self.matrix(x))

    def adjoint_action(self, g: np.ndarray, x: Any) -> np.ndarray:
        """Ad(g) x = coords(g X g^{-1})"""
        X = self.matrix(x)
        return self.coords(g @ X @ np.linalg.inv(g))

    def check_consistency(self, algebra: "LieAlgebra", tol: float = 1e-10) -> CheckReport:
        """E_i E_j - E_j E_i = Σ_k c[i][j][k] E_k"""
        if self.size != algebra.dim_g:
            return CheckReport(
                name="matrix_rep", passed=False, max_violation=float("inf"), tolerance=tol,
                violations=[f"表示维数 {self.size} 与李代数维数 {algebra.dim_g} 不一致"],
            )
        E = self.basis_matrices
        worst = 0.0
        violations = []
        for i in range(algebra.dim_g):
            for j in range(i + 1, algebra.dim_g):
                comm = E[i] @ E[j] - E[j] @ E[i]
                expected = np.einsum('k,kab->ab', algebra.structure_constants[i, j], E)
                err = float(np.max(np.abs(comm - expected)))
                worst = max(worst, err)
                if err > tol:
                    violations.append({"i": i, "j": j, "error": err})
        return CheckReport(
            name="matrix_rep", passed=not violations, max_violation=worst,
            tolerance=tol, violations=violations,
        )

    def to_json(self) -> List[Any]:
        return self.basis_matrices.tolist()


class LieAlgebra:
    """有限维实李代数 + 坐标分解 g = m ⊕ h"""

    def __init__(
        self,
        structure_constants: Any,
        dim_m: int,
        name: str = "custom",
        representation: Optional[MatrixRepresentation] = None,
        check: bool = True,
        tol: float = 1e-12,
    ):
        c = np.array(structure_constants, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise InputError(f"结构常数必须是 m×m×m 数组，实际形状 {c.shape}")
        dim_g = c.shape[0]
        if dim_g < 1:
            raise InputError("李代数维数必须为正")
        if not (1 <= dim_m <= dim_g):
            raise InputError(f"dim_m 必须在 1..{dim_g} 之间，实际 {dim_m}")
        c.setflags(write=False)

        self.structure_constants = c
        self.dim_g = dim_g
        self.dim_m = int(dim_m)
        self.name = name
        self.representation = representation
        self.tol = tol

        if check:
            for report in (self.check_antisymmetry(), self.check_jacobi(), self.check_subalgebra()):
                if not report.passed:
                    raise InputError(
                        f"李代数 {name} 未通过 {report.name} 检查: 最大偏差 {report.max_violation:.3e}",
                        details=report.to_dict(),
                    )
            if representation is not None:
                report = representation.check_consistency(self)
                if not report.passed:
                    raise InputError(
                        f"李代数 {name} 的矩阵表示与结构常数不一致: {report.max_violation:.3e}",
                        details=report.to_dict(),
                    )

    # ------------------------------------------------------------------
    # 基本结构
    # ------------------------------------------------------------------
    @property
    def dim_h(self) -> int:
        return self.dim_g - self.dim_m

    def _scaled_tol(self, tol: Optional[float] = None) -> float:
        scale = max(1.0, float(np.max(np.abs(self.structure_constants))) if self.dim_g else 1.0)
        return (self.tol if tol is None else tol) * scale * scale

    def _as_g(self, x: Any, label: str = "向量") -> np.ndarray:
        """接受 g 向量或 m 向量（自动嵌入）"""
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.size == self.dim_g:
            return arr
        if arr.size == self.dim_m:
            return self.embed_m(arr)
        raise InputError(f"{label} 维度不匹配: 期望 {self.dim_g} 或 {self.dim_m}, 实际 {arr.size}")

    def bracket(self, x: Any, y: Any) -> np.ndarray:
        """[x, y]_g"""
        x = _as_vector(x, self.dim_g, "bracket 第一个参数")
        y = _as_vector(y, self.dim_g, "bracket 第二个参数")
        return np.einsum('i,j,ijk->k', x, y, self.structure_constants)

    def project_m(self, x: Any) -> np.ndarray:
        x = _as_vector(x, self.dim_g, "project_m 参数")
        return x[:self.dim_m].copy()

    def project_h(self, x: Any) -> np.ndarray:
        x = _as_vector(x, self.dim_g, "project_h 参数")
        return x[self.dim_m:].copy()

    def embed_m(self, y: Any) -> np.ndarray:
        y = _as_vector(y, self.dim_m, "m 向量")
        out = np.zeros(self.dim_g)
        out[:self.dim_m] = y
        return out

    def embed_h(self, z: Any) -> np.ndarray:
        z = _as_vector(z, self.dim_h, "h 向量")
        out = np.zeros(self.dim_g)
        out[self.dim_m:] = z
        return out

    def bracket_m(self, x: Any, y: Any) -> np.ndarray:
        """[x, y]_m = pr_m [x, y]_g"""
        return self.project_m(self.bracket(self._as_g(x), self._as_g(y)))

    def bracket_h(self, x: Any, y: Any) -> np.ndarray:
        """[x, y]_h = pr_h [x, y]_g"""
        return self.project_h(self.bracket(self._as_g(x), self._as_g(y)))

    def ad_matrix(self, x: Any) -> np.ndarray:
        """ad(x) 在 g 上的矩阵，第 j 列为 [x, e_j]"""
        x = self._as_g(x)
        return np.einsum('i,ijk->kj', x, self.structure_constants)

    def ad_m_matrix(self, y: Any) -> np.ndarray:
        """ad_m(y): m → m, w ↦ [y, w]_m"""
        y = _as_vector(y, self.dim_m, "ad_m 参数")
        n = self.dim_m
        return self.ad_matrix(self.embed_m(y))[:n, :n]

    # ------------------------------------------------------------------
    # 不变量检查
    # ------------------------------------------------------------------
    def check_antisymmetry(self) -> CheckReport:
        c = self.structure_constants
        diff = c + c.transpose(1, 0, 2)
        worst = float(np.max(np.abs(diff))) if diff.size else 0.0
        violations = [list(map(int, idx)) for idx in np.argwhere(diff != 0.0)[:20]]
        return CheckReport(
            name="antisymmetry", passed=worst == 0.0, max_violation=worst,
            tolerance=0.0, violations=violations,
        )

    def jacobi_tensor(self) -> np.ndarray:
        """J[i,j,k,:] = [[e_i,e_j],e_k] + [[e_j,e_k],e_i] + [[e_k,e_i],e_j]"""
        c = self.structure_constants
        first = np.einsum('ijl,lkm->ijkm', c, c)
        return first + first.transpose(1, 2, 0, 3) + first.transpose(2, 0, 1, 3)

    def check_jacobi(self, tol: Optional[float] = None) -> CheckReport:
        tol = self._scaled_tol(tol)
        J = self.jacobi_tensor()
        worst = float(np.max(np.abs(J))) if J.size else 0.0
        violations = [list(map(int, idx)) for idx in np.argwhere(np.abs(J) > tol)[:20]]
        return CheckReport(
            name="jacobi", passed=worst <= tol, max_violation=worst,
            tolerance=tol, violations=violations,
        )

    def check_subalgebra(self, tol: Optional[float] = None) -> CheckReport:
        """[h, h] ⊂ h：c[α][β][i] = 0"""
        n = self.dim_m
        block = self.structure_constants[n:, n:, :n]
        tol = self._scaled_tol(tol)
        worst = float(np.max(np.abs(block))) if block.size else 0.0
        violations = [
            {"alpha": int(a + n), "beta": int(b + n), "i": int(i), "value": float(block[a, b, i])}
            for a, b, i in np.argwhere(np.abs(block) > tol)
        ]
        return CheckReport(
            name="subalgebra", passed=worst <= tol, max_violation=worst,
            tolerance=tol, violations=violations,
        )

    def check_reductive(self, tol: Optional[float] = None) -> CheckReport:
        """无穷小约化条件 [h, m] ⊂ m：c[α][i][β] = 0"""
        n = self.dim_m
        block = self.structure_constants[n:, :n, n:]
        tol = self._scaled_tol(tol)
        worst = float(np.max(np.abs(block))) if block.size else 0.0
        violations = [
            {"alpha": int(a + n), "i": int(i), "beta": int(b + n), "value": float(block[a, i, b])}
            for a, i, b in np.argwhere(np.abs(block) > tol)
        ]
        return CheckReport(
            name="reductive", passed=worst <= tol, max_violation=worst,
            tolerance=tol, violations=violations,
            details={"dim_g": self.dim_g, "dim_m": self.dim_m},
        )

    def check_unimodular_isotropy(self, tol: float = 1e-10) -> CheckReport:
        """Ad(H) 在 g/h 上幺模的无穷小判据：tr(pr_m ∘ ad(z)|_m) = 0"""
        n = self.dim_m
        traces = [
            float(np.trace(self.structure_constants[alpha, :n, :n]))
            for alpha in range(n, self.dim_g)
        ]
        worst = max((abs(t) for t in traces), default=0.0)
        return CheckReport(
            name="unimodular_isotropy", passed=worst <= tol, max_violation=worst,
            tolerance=tol, details={"traces": traces},
        )

    # ------------------------------------------------------------------
    # dexp
    # ------------------------------------------------------------------
    def dexp_trivialized(self, x: Any, v: Any, tol: float = 1e-15) -> np.ndarray:
        """左平凡化的 exp 微分 T_x(v) = Σ_{k≥0} (-ad_x)^k v / (k+1)!

        exp(-X) d/dt exp(X + tV)|_0 的坐标；符号由矩阵指数差分校验固定。
        """
        if tol <= 0:
            raise InputError("dexp 截断容差必须为正")
        x = _as_vector(x, self.dim_g, "dexp 的 x")
        v = _as_vector(v, self.dim_g, "dexp 的 v")
        v_norm = float(np.linalg.norm(v))
        if v_norm == 0.0:
            return np.zeros(self.dim_g)
        neg_ad = -self.ad_matrix(x)
        total = v.copy()
        term = v.copy()
        for k in range(1, DEXP_MAX_TERMS):
            term = neg_ad @ term / (k + 1)
            total = total + term
            if np.linalg.norm(term) <= tol * v_norm:
                return total
        raise SeriesConvergenceError(
            f"dexp 级数 {DEXP_MAX_TERMS} 项内未收敛，请缩放 x",
            details={"x_norm": float(np.linalg.norm(x))},
        )

    def dexp_matrix(self, x: Any, tol: float = 1e-15) -> np.ndarray:
        """T_x 的 dim_g×dim_g 矩阵"""
        x = _as_vector(x, self.dim_g, "dexp 的 x")
        neg_ad = -self.ad_matrix(x)
        total = np.eye(self.dim_g)
        term = np.eye(self.dim_g)
        for k in range(1, DEXP_MAX_TERMS):
            term = neg_ad @ term / (k + 1)
            total = total + term
            if np.max(np.abs(term)) <= tol:
                return total
        raise SeriesConvergenceError(
            f"dexp 级数 {DEXP_MAX_TERMS} 项内未收敛，请缩放 x",
            details={"x_norm": float(np.linalg.norm(x))},
        )

    # ------------------------------------------------------------------
    # 基变换与序列化
    # ------------------------------------------------------------------
    def with_basis_change(self, P: Any, dim_m: Optional[int] = None, check: bool = True) -> "LieAlgebra":
        """新基 f_i = Σ_a P[a, i] e_a（P 的列是新基向量在旧基下的坐标）"""
        P = np.asarray(P, dtype=float)
        if P.shape != (self.dim_g, self.dim_g):
            raise InputError(f"基变换矩阵必须是 {self.dim_g}×{self.dim_g}")
        if abs(np.linalg.det(P)) < 1e-12:
            raise InputError("基变换矩阵不可逆")
        P_inv = np.linalg.inv(P)
        c_new = np.einsum('ai,bj,abd,kd->ijk', P, P, self.structure_constants, P_inv)
        # 浮点误差下保持严格反对称
        c_new = 0.5 * (c_new - c_new.transpose(1, 0, 2))
        rep = None
        if self.representation is not None:
            rep = MatrixRepresentation(
                np.einsum('ai,aXY->iXY', P, self.representation.basis_matrices)
            )
        return LieAlgebra(
            c_new,
            dim_m=self.dim_m if dim_m is None else dim_m,
            name=f"{self.name}(basis-changed)",
            representation=rep,
            check=check,
            tol=self.tol,
        )

    @classmethod
    def from_json(cls, doc: Dict[str, Any], check: bool = True) -> "LieAlgebra":
        """从 {"dim_g", "dim_m", "structure_constants": [[i,j,k,value],...], "matrix_rep"} 构造"""
        try:
            dim_g = int(doc["dim_g"])
            dim_m = int(doc["dim_m"])
            triplets = doc.get("structure_constants", [])
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"李代数 JSON 缺少字段或类型错误: {e}")
        if dim_g < 1:
            raise InputError("dim_g 必须为正")
        c = np.zeros((dim_g, dim_g, dim_g))
        assigned: Dict[tuple, float] = {}
        for pos, entry in enumerate(triplets):
            if len(entry) != 4:
                raise InputError(f"structure_constants[{pos}] 必须是 [i, j, k, value]")
            i, j, k = (int(entry[0]), int(entry[1]), int(entry[2]))
            value = float(entry[3])
            if not all(0 <= idx < dim_g for idx in (i, j, k)):
                raise InputError(f"structure_constants[{pos}] 下标越界")
            if i == j and value != 0.0:
                raise InputError(f"structure_constants[{pos}]: [e_i, e_i] 必须为零")
            for key, val in (((i, j, k), value), ((j, i, k), -value)):
                if key in assigned and assigned[key] != val:
                    raise InputError(f"structure_constants[{pos}] 与已给出的反对称分量冲突")
                assigned[key] = val
                c[key] = val
        rep = None
        if doc.get("matrix_rep") is not None:
            rep = MatrixRepresentation(doc["matrix_rep"])
        return cls(c, dim_m=dim_m, name=str(doc.get("name", "custom")), representation=rep, check=check)

    def to_json(self) -> Dict[str, Any]:
        triplets = []
        c = self.structure_constants
        for i, j, k in np.argwhere(c != 0.0):
            if i < j:
                triplets.append([int(i), int(j), int(k), float(c[i, j, k])])
        doc: Dict[str, Any] = {
            "name": self.name,
            "dim_g": self.dim_g,
            "dim_m": self.dim_m,
            "structure_constants": triplets,
        }
        if self.representation is not None:
            doc["matrix_rep"] = self.representation.to_json()
        return doc

    def __repr__(self) -> str:
        return f"LieAlgebra(name={self.name!r}, dim_g={self.dim_g}, dim_m={self.dim_m})"
