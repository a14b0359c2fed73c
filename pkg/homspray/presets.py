"""
预设李代数目录

abelian(n) / su2 / su2_u1 / sl2_r / heisenberg3 / se2 / se2_so2
"""

import logging
from typing import Callable, Dict, Optional

import numpy as np

from .errors import InputError
from .lie_algebra import LieAlgebra, MatrixRepresentation

logger = logging.getLogger(__name__)


def _from_relations(dim_g: int, relations: Dict) -> np.ndarray:
    """由 {(i, j): {k: value}} 形式的关系构造反对称结构常数"""
    c = np.zeros((dim_g, dim_g, dim_g))
    for (i, j), image in relations.items():
        for k, value in image.items():
            c[i, j, k] = value
            c[j, i, k] = -value
    return c


def _unit(d: int, row: int, col: int) -> np.ndarray:
    m = np.zeros((d, d))
    m[row, col] = 1.0
    return m


def _su2_constants() -> np.ndarray:
    # [e1,e2]=e3, [e2,e3]=e1, [e3,e1]=e2
    return _from_relations(3, {(0, 1): {2: 1.0}, (1, 2): {0: 1.0}, (2, 0): {1: 1.0}})


def _su2_representation(kind: Optional[str]) -> Optional[MatrixRepresentation]:
    if kind is None:
        return None
    kind = kind.lower()
    c = _su2_constants()
    if kind == "adjoint":
        # E_i[k][j] = c[i][j][k]
        return MatrixRepresentation([c[i].T for i in range(3)])
    if kind == "complex":
        # e_k ↦ -(i/2)σ_k，复 2×2 矩阵写成实 4×4 块 [[A, -B], [B, A]]
        sigma = [
            np.array([[0, 1], [1, 0]], dtype=complex),
            np.array([[0, -1j], [1j, 0]], dtype=complex),
            np.array([[1, 0], [0, -1]], dtype=complex),
        ]
        mats = []
        for s in sigma:
            z = -0.5j * s
            mats.append(np.block([[z.real, -z.imag], [z.imag, z.real]]))
        return MatrixRepresentation(mats)
    raise InputError(f"su2 不支持的矩阵表示: {kind}（可选 adjoint / complex）")


def abelian(n: int = 3, representation: Optional[str] = "diagonal") -> LieAlgebra:
    if n < 1:
        raise InputError("abelian 维数必须为正")
    rep = None
    if representation is not None:
        rep = MatrixRepresentation([_unit(n, i, i) for i in range(n)])
    return LieAlgebra(np.zeros((n, n, n)), dim_m=n, name=f"abelian{n}", representation=rep)


def su2(representation: Optional[str] = "adjoint") -> LieAlgebra:
    """H = {e}，m = su(2)"""
    return LieAlgebra(_su2_constants(), dim_m=3, name="su2", representation=_su2_representation(representation))


def su2_u1(representation: Optional[str] = "adjoint") -> LieAlgebra:
    """球面 S² = SU(2)/U(1)：m = span{e1, e2}，h = span{e3}"""
    return LieAlgebra(_su2_constants(), dim_m=2, name="su2_u1", representation=_su2_representation(representation))


def sl2_r(representation: Optional[str] = "standard") -> LieAlgebra:
    """基 H, E, F：[H,E]=2E, [H,F]=-2F, [E,F]=H"""
    c = _from_relations(3, {(0, 1): {1: 2.0}, (0, 2): {2: -2.0}, (1, 2): {0: 1.0}})
    rep = None
    if representation is not None:
        rep = MatrixRepresentation([
            np.array([[1.0, 0.0], [0.0, -1.0]]),
            _unit(2, 0, 1),
            _unit(2, 1, 0),
        ])
    return LieAlgebra(c, dim_m=3, name="sl2_r", representation=rep)


def heisenberg3(representation: Optional[str] = "upper_triangular") -> LieAlgebra:
    """[e1,e2]=e3，e1=E12, e2=E23, e3=E13"""
    c = _from_relations(3, {(0, 1): {2: 1.0}})
    rep = None
    if representation is not None:
        rep = MatrixRepresentation([_unit(3, 0, 1), _unit(3, 1, 2), _unit(3, 0, 2)])
    return LieAlgebra(c, dim_m=3, name="heisenberg3", representation=rep)


def _se2_parts(representation: Optional[str]):
    # 基 Tx, Ty, J：[J,Tx]=Ty, [J,Ty]=-Tx, [Tx,Ty]=0
    c = _from_relations(3, {(2, 0): {1: 1.0}, (2, 1): {0: -1.0}})
    rep = None
    if representation is not None:
        J = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        rep = MatrixRepresentation([_unit(3, 0, 2), _unit(3, 1, 2), J])
    return c, rep


def se2(representation: Optional[str] = "affine") -> LieAlgebra:
    c, rep = _se2_parts(representation)
    return LieAlgebra(c, dim_m=3, name="se2", representation=rep)


def se2_so2(representation: Optional[str] = "affine") -> LieAlgebra:
    """欧氏平面 SE(2)/SO(2)：m = span{Tx, Ty}，h = span{J}"""
    c, rep = _se2_parts(representation)
    return LieAlgebra(c, dim_m=2, name="se2_so2", representation=rep)


PRESETS: Dict[str, Callable[..., LieAlgebra]] = {
    "abelian": abelian,
    "su2": su2,
    "su2_u1": su2_u1,
    "sl2_r": sl2_r,
    "heisenberg3": heisenberg3,
    "se2": se2,
    "se2_so2": se2_so2,
}


def preset(name: str, n: Optional[int] = None, representation: Optional[str] = "default") -> LieAlgebra:
    """按名称取预设李代数

    representation="default" 使用该预设的默认矩阵表示，None 表示不带表示。
    """
    key = name.strip().lower()
    if key not in PRESETS:
        raise InputError(f"未知预设: {name}（可选: {', '.join(sorted(PRESETS))}）")
    kwargs = {}
    if representation != "default":
        kwargs["representation"] = representation
    if key == "abelian":
        algebra = abelian(n if n is not None else 3, **kwargs)
    else:
        if n is not None:
            raise InputError(f"预设 {name} 不接受维数参数 n")
        algebra = PRESETS[key](**kwargs)
    logger.debug(f"加载预设李代数: {algebra}")
    return algebra
