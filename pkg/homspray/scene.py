"""
场景文件（JSON）解析

{
  "name": "sphere",
  "algebra": {"preset": "su2_u1"}                      # 或内联 {"dim_g", "dim_m", "structure_constants", "matrix_rep"}
  "basis_change": {"matrix": [[...]], "dim_m": 2},     # 可选，列为新基在旧基下的坐标
  "norm": {"type": "euclidean" | "randers", "a": [[...]], "b": [...]},
  "eta":  {"type": "zero" | "quadratic" | "euler_top" | "callable", ...},   # 与 norm 二选一
  "connection_mode": "auto" | "A" | "B",
  "tolerances": {...},                                 # NumericsConfig 字段
  "integrator": {"method": "rk4", "dt": 1e-3, ...},
  "seed": 42
}

解析失败一律抛出 SceneParseError，消息中带行列号或字段路径。
"""

import importlib
import json
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .config import IntegratorConfig, NumericsConfig
from .errors import HomSprayError, InputError, SceneParseError
from .homogeneous_spray import DirectSource, FinslerSource
from .lie_algebra import LieAlgebra
from .minkowski import EuclideanNorm, MinkowskiNorm, RandersNorm
from .presets import preset

logger = logging.getLogger(__name__)


class AlgebraSpec(BaseModel):
    """预设名或内联结构常数"""
    model_config = ConfigDict(extra="forbid")

    preset: Optional[str] = None
    n: Optional[int] = None
    representation: Optional[str] = "default"
    name: Optional[str] = None
    dim_g: Optional[int] = None
    dim_m: Optional[int] = None
    structure_constants: Optional[List[List[float]]] = None
    matrix_rep: Optional[List[List[List[float]]]] = None

    @model_validator(mode="after")
    def check_source(self):
        if self.preset is None and self.dim_g is None:
            raise ValueError("必须给出 preset 或内联的 dim_g/dim_m/structure_constants")
        if self.preset is not None and self.dim_g is not None:
            raise ValueError("preset 与内联结构常数不能同时给出")
        if self.preset is None and self.dim_m is None:
            raise ValueError("内联李代数必须给出 dim_m")
        return self


class BasisChangeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    matrix: List[List[float]]
    dim_m: Optional[int] = None


class NormSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: str
    a: Optional[List[List[float]]] = None
    b: Optional[List[float]] = None

    @field_validator('type')
    @classmethod
    def validate_type(cls, v):
        v = v.strip().lower()
        if v not in ("euclidean", "randers"):
            raise ValueError('范数类型只能是 euclidean 或 randers')
        return v

    @model_validator(mode="after")
    def check_fields(self):
        if self.type == "randers" and self.b is None:
            raise ValueError("randers 范数必须给出 b")
        if self.type == "euclidean" and self.b is not None:
            raise ValueError("euclidean 范数不接受 b")
        return self


class EtaSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: str
    Q: Optional[List[List[List[float]]]] = None
    inertia: Optional[List[float]] = None
    target: Optional[str] = None
    derivative: Optional[str] = None
    metric: Optional[List[List[float]]] = None

    @field_validator('type')
    @classmethod
    def validate_type(cls, v):
        v = v.strip().lower()
        if v not in ("zero", "quadratic", "euler_top", "callable"):
            raise ValueError('η 类型只能是 zero / quadratic / euler_top / callable')
        return v

    @model_validator(mode="after")
    def check_fields(self):
        required = {"quadratic": "Q", "euler_top": "inertia", "callable": "target"}
        key = required.get(self.type)
        if key is not None and getattr(self, key) is None:
            raise ValueError(f"{self.type} 类型的 η 必须给出 {key}")
        return self


class Scene(BaseModel):
    """场景描述"""
    model_config = ConfigDict(extra="forbid")

    name: str = "scene"
    algebra: AlgebraSpec
    basis_change: Optional[BasisChangeSpec] = None
    norm: Optional[NormSpec] = None
    eta: Optional[EtaSpec] = None
    connection_mode: str = "auto"
    tolerances: NumericsConfig = NumericsConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    seed: Optional[int] = None

    @field_validator('connection_mode')
    @classmethod
    def validate_mode(cls, v):
        if v.strip().upper() not in ("AUTO", "A", "B"):
            raise ValueError('connection_mode 只能是 auto / A / B')
        return v.strip()

    @model_validator(mode="after")
    def check_source(self):
        if (self.norm is None) == (self.eta is None):
            raise ValueError("norm 与 eta 必须恰好给出一个")
        return self


@dataclass
class SceneObjects:
    """场景构造出的对象，在任何计算之前全部通过各模块的不变量检查"""
    scene: Scene
    algebra: LieAlgebra
    norm: Optional[MinkowskiNorm]
    source: Any

    @property
    def numerics(self) -> NumericsConfig:
        return self.scene.tolerances

    @property
    def integrator(self) -> IntegratorConfig:
        return self.scene.integrator


def load_callable(target: str, label: str = "target") -> Callable:
    """"pkg.module:function" → 可调用对象"""
    module_name, sep, attr = target.partition(":")
    if not sep or not module_name or not attr:
        raise SceneParseError(f"{label}: 可调用对象的格式应为 'pkg.module:function'，实际 {target!r}")
    try:
        module = importlib.import_module(module_name)
    except ImportError as e:
        raise SceneParseError(f"{label}: 无法导入模块 {module_name}: {e}")
    func = module
    for part in attr.split("."):
        func = getattr(func, part, None)
        if func is None:
            raise SceneParseError(f"{label}: 模块 {module_name} 中没有 {attr}")
    if not callable(func):
        raise SceneParseError(f"{label}: {target} 不可调用")
    return func


def _format_location(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_scene(text: str, source: str = "<scene>") -> Scene:
    """JSON 文本 → Scene（只做语法与结构检查）"""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneParseError(
            f"{source}:{e.lineno}:{e.colno}: JSON 语法错误: {e.msg}",
            details={"line": e.lineno, "column": e.colno},
        )
    if not isinstance(doc, dict):
        raise SceneParseError(f"{source}: 场景文件的顶层必须是对象")
    try:
        return Scene.model_validate(doc)
    except ValidationError as e:
        problems = [
            {"field": _format_location(err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        summary = "; ".join(f"{p['field']}: {p['message']}" for p in problems)
        raise SceneParseError(f"{source}: 场景字段错误: {summary}", details=problems)


def _build_algebra(spec: AlgebraSpec, basis_change: Optional[BasisChangeSpec]) -> LieAlgebra:
    if spec.preset is not None:
        algebra = preset(spec.preset, n=spec.n, representation=spec.representation)
    else:
        algebra = LieAlgebra.from_json(spec.model_dump(exclude_none=True))
    if basis_change is not None:
        algebra = algebra.with_basis_change(basis_change.matrix, dim_m=basis_change.dim_m)
    return algebra


def _build_norm(spec: NormSpec, dim_m: int) -> MinkowskiNorm:
    a = np.eye(dim_m) if spec.a is None else spec.a
    if spec.type == "euclidean":
        return EuclideanNorm(a)
    return RandersNorm(a, spec.b)


def _build_direct(spec: EtaSpec, dim_m: int) -> DirectSource:
    if spec.type == "zero":
        return DirectSource.zero(dim_m)
    if spec.type == "quadratic":
        return DirectSource.quadratic(spec.Q)
    if spec.type == "euler_top":
        if dim_m != 3:
            raise InputError("euler_top 只适用于 dim_m = 3")
        return DirectSource.euler_top(spec.inertia)
    field = load_callable(spec.target, "eta.target")
    derivative = load_callable(spec.derivative, "eta.derivative") if spec.derivative else None
    return DirectSource(field, derivative, label=spec.target, metric=spec.metric)


def build_scene(scene: Scene) -> SceneObjects:
    """构造李代数、范数和 η 来源；输入错误按字段路径报告"""
    section = "algebra"
    try:
        algebra = _build_algebra(scene.algebra, scene.basis_change)
        norm = None
        if scene.norm is not None:
            section = "norm"
            norm = _build_norm(scene.norm, algebra.dim_m)
            if norm.dim != algebra.dim_m:
                raise InputError(f"范数维数 {norm.dim} 与 dim_m = {algebra.dim_m} 不一致")
            source = FinslerSource(norm)
        else:
            section = "eta"
            source = _build_direct(scene.eta, algebra.dim_m)
    except SceneParseError:
        raise
    except HomSprayError as e:
        raise SceneParseError(f"{section}: {e}", details=getattr(e, "details", None))
    logger.info(f"场景 {scene.name}: {algebra}, 来源 {source}")
    return SceneObjects(scene=scene, algebra=algebra, norm=norm, source=source)


def load_scene(path: str) -> SceneObjects:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise SceneParseError(f"无法读取场景文件 {path}: {e}")
    return build_scene(parse_scene(text, source=path))


def scene_summary(objects: SceneObjects) -> Dict[str, Any]:
    return {
        "name": objects.scene.name,
        "algebra": objects.algebra.name,
        "dim_g": objects.algebra.dim_g,
        "dim_m": objects.algebra.dim_m,
        "source": repr(objects.source),
    }
