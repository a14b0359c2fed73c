"""
共享有限差分方案

中心差分 + 一级 Richardson 外推：
    D(h) = (f(x+hd) - f(x-hd)) / 2h
    R    = (4 D(h/2) - D(h)) / 3          误差 O(h^4)

一阶导数的基准相对步长取 cbrt(eps)，再乘以尺度因子。
高阶导数或逐层嵌套的差分用 order_step(k) = eps^(1/(k+4))，
对本身由差分得到的量再求导时使用 widened() 放宽的步长 sqrt(h)。
Minkowski 模块用尺度 max(1, |y|)，喷射模块用 1 + |y|。
"""

import logging
from typing import Any, Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .errors import NumericalError

logger = logging.getLogger(__name__)

MACHINE_EPS = float(np.finfo(float).eps)
BASE_STEP = float(np.cbrt(MACHINE_EPS))


def order_step(order: int) -> float:
    """k 阶导数（含一级 Richardson）的基准相对步长"""
    return MACHINE_EPS ** (1.0 / (order + 4))


class FiniteDifferenceScheme(BaseModel):
    """有限差分参数"""
    model_config = ConfigDict(frozen=True)

    relative_step: float = BASE_STEP
    richardson: bool = True
    max_shrink: int = 30

    @field_validator('relative_step')
    @classmethod
    def validate_step(cls, v):
        if not (0.0 < v < 1.0):
            raise ValueError('相对步长必须在 (0, 1) 内')
        return v

    def widened(self) -> "FiniteDifferenceScheme":
        """嵌套差分用的放宽步长"""
        return self.model_copy(update={"relative_step": float(np.sqrt(self.relative_step))})

    def halved(self) -> "FiniteDifferenceScheme":
        """步长减半（步长一致性检查用）"""
        return self.model_copy(update={"relative_step": self.relative_step / 2.0})

    def for_order(self, order: int) -> "FiniteDifferenceScheme":
        """k 阶导数的步长，与本方案相对基准步长的比例保持一致"""
        ratio = self.relative_step / BASE_STEP
        return self.model_copy(update={"relative_step": min(0.5, order_step(order) * ratio)})

    def _cone_safe_step(self, x: np.ndarray, d: np.ndarray, h: float) -> float:
        """步长不得让 x ± h d 靠近原点（锥尖）"""
        x_norm = float(np.linalg.norm(x))
        d_norm = float(np.linalg.norm(d))
        if d_norm == 0.0:
            return h
        if x_norm == 0.0:
            raise NumericalError("差分基点位于原点，喷射在此无定义", details={"x": x.tolist()})
        for _ in range(self.max_shrink):
            if h * d_norm <= 0.5 * x_norm:
                return h
            h *= 0.5
        raise NumericalError(
            "找不到避开锥尖的差分步长",
            details={"x": x.tolist(), "direction": d.tolist()}
        )

    def derivative(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        x: np.ndarray,
        d: np.ndarray,
        scale: float = 1.0,
        cone_guard: bool = False,
    ) -> np.ndarray:
        """方向导数 d/dt f(x + t d) |_{t=0}"""
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        if not np.any(d):
            return np.zeros_like(np.asarray(f(x), dtype=float))
        h = self.relative_step * scale
        if cone_guard:
            h = self._cone_safe_step(x, d, h)

        def central(step: float) -> np.ndarray:
            fp = np.asarray(f(x + step * d), dtype=float)
            fm = np.asarray(f(x - step * d), dtype=float)
            return (fp - fm) / (2.0 * step)

        coarse = central(h)
        if not self.richardson:
            return coarse
        fine = central(0.5 * h)
        return (4.0 * fine - coarse) / 3.0

    def jacobian(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        x: np.ndarray,
        scale: float = 1.0,
        cone_guard: bool = False,
    ) -> np.ndarray:
        """雅可比矩阵，第 j 列为沿 e_j 的方向导数"""
        x = np.asarray(x, dtype=float)
        columns = [
            np.atleast_1d(self.derivative(f, x, e, scale=scale, cone_guard=cone_guard))
            for e in np.eye(x.size)
        ]
        return np.stack(columns, axis=-1)

    def mixed_second(
        self,
        f: Callable[[np.ndarray], Any],
        x: np.ndarray,
        u: np.ndarray,
        v: np.ndarray,
        scale: float = 1.0,
    ) -> Any:
        """二阶混合方向导数 ∂²/∂s∂t f(x + s u + t v)，f 可以是向量值"""
        x = np.asarray(x, dtype=float)
        h = self.relative_step * scale

        def central(step: float) -> np.ndarray:
            return (
                np.asarray(f(x + step * u + step * v), dtype=float)
                - np.asarray(f(x + step * u - step * v), dtype=float)
                - np.asarray(f(x - step * u + step * v), dtype=float)
                + np.asarray(f(x - step * u - step * v), dtype=float)
            ) / (4.0 * step * step)

        coarse = central(h)
        if not self.richardson:
            return coarse
        fine = central(0.5 * h)
        return (4.0 * fine - coarse) / 3.0

    def hessian(
        self,
        f: Callable[[np.ndarray], float],
        x: np.ndarray,
        scale: float = 1.0,
    ) -> np.ndarray:
        """标量函数的 Hessian（对称化）"""
        x = np.asarray(x, dtype=float)
        n = x.size
        basis = np.eye(n)
        hess = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                value = float(self.mixed_second(f, x, basis[i], basis[j], scale=scale))
                hess[i, j] = value
                hess[j, i] = value
        return hess


DEFAULT_SCHEME = FiniteDifferenceScheme()
