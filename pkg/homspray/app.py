"""
homspray 命令行入口

    homspray <command> --scene FILE [--y ...] [--t-end ...] [--dt ...] [--grid ...]
                       [--seed N] [--out FILE] [--format csv|json]

退出码: 0 成功, 1 校验未通过, 2 数值错误, 3 解析错误
"""

import argparse
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError
from scipy.linalg import eigh

from .chart_oracle import ChartMetric, compare_at_origin, transport_cross_check
from .config import AppSettings, IntegratorConfig, NumericsConfig, config_manager
from .dynamics import (
    conserved_quantities,
    integrate_geodesic,
    linear_transport,
    nonlinear_transport,
    reconstruct_group_curve,
)
from .errors import (
    ArgumentError,
    HomSprayError,
    SceneParseError,
    UnsupportedConfigurationError,
)
from .exporter import format_csv, format_json, rows_frame, trajectory_frame, trajectory_json, write_text
from .homogeneous_spray import RIEMANN_TERMS, SprayModel
from .minkowski import check_ad_h_invariance
from .scene import SceneObjects, load_scene, scene_summary
from .utils import CheckReport, ProcessLogger, app_logger, create_response, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_PARSE = 3

DEFAULT_FORMATS = {
    "validate": "json",
    "eta": "json",
    "curvature": "json",
    "geodesic": "csv",
    "transport": "csv",
    "scan": "csv",
    "oracle-compare": "json",
}


class HomSprayArgumentParser(argparse.ArgumentParser):
    """参数错误按解析错误（退出码 3）处理"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: 参数错误: {message}\n")
        sys.exit(EXIT_PARSE)


@dataclass
class CommandContext:
    """一次命令运行所需的全部输入（场景 + 配置 + 命令行覆盖）"""
    objects: SceneObjects
    numerics: NumericsConfig
    integrator: IntegratorConfig
    seed: int
    workers: int
    fmt: str

    @property
    def algebra(self):
        return self.objects.algebra

    @property
    def norm(self):
        return self.objects.norm

    def build_spray(self, check_invariance: bool = True) -> SprayModel:
        return SprayModel(
            self.objects.algebra,
            self.objects.source,
            n_mode=self.objects.scene.connection_mode,
            numerics=self.numerics,
            check_invariance=check_invariance,
            seed=self.seed,
        )


@dataclass
class CommandResult:
    code: int
    text: str


# ----------------------------------------------------------------------
# 参数处理
# ----------------------------------------------------------------------
def parse_vector(values: Optional[List[str]], dim: int, label: str) -> Optional[np.ndarray]:
    """"1,0,0" / "1 0 0" / 多个参数 → 长度为 dim 的向量"""
    if values is None:
        return None
    tokens = [tok for value in values for tok in re.split(r"[,\s]+", value.strip()) if tok]
    try:
        vector = np.array([float(tok) for tok in tokens], dtype=float)
    except ValueError:
        raise ArgumentError(f"{label}: 无法解析为实数向量: {' '.join(values)!r}")
    if vector.size != dim:
        raise ArgumentError(f"{label}: 维度不匹配: 期望 {dim}, 实际 {vector.size}")
    if not np.all(np.isfinite(vector)):
        raise ArgumentError(f"{label}: 含有非有限值")
    return vector


def _require(vector: Optional[np.ndarray], label: str) -> np.ndarray:
    if vector is None:
        raise ArgumentError(f"此命令需要 {label}")
    return vector


def _resolve_context(args: argparse.Namespace, settings: AppSettings, objects: SceneObjects) -> CommandContext:
    """优先级：命令行 > 场景 > 配置文件/环境变量"""
    scene = objects.scene
    fields = scene.model_fields_set
    numerics = scene.tolerances if "tolerances" in fields else settings.numerics
    integrator = scene.integrator if "integrator" in fields else settings.integrator
    overrides = {}
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.method is not None:
        overrides["method"] = args.method
    if overrides:
        integrator = IntegratorConfig(**{**integrator.model_dump(), **overrides})
    if args.seed is not None:
        seed = args.seed
    elif scene.seed is not None:
        seed = scene.seed
    else:
        seed = settings.seed
    return CommandContext(
        objects=objects,
        numerics=numerics,
        integrator=integrator,
        seed=seed,
        workers=args.workers if args.workers is not None else settings.workers,
        fmt=args.format or DEFAULT_FORMATS[args.command],
    )


def _render(ctx: CommandContext, report: Dict[str, Any], frame_builder: Optional[Callable] = None) -> str:
    if ctx.fmt == "csv":
        if frame_builder is None:
            raise ArgumentError("此命令只支持 --format json")
        return format_csv(frame_builder())
    return format_json(report)


def _complement_basis(g: np.ndarray, y: np.ndarray) -> np.ndarray:
    """g_y 正交补 {w : g_y(y, w) = 0} 的一组 g_y 标准正交基（列）"""
    n = y.size
    if n < 2:
        return np.zeros((n, 0))
    gy = g @ y
    projector = np.eye(n) - np.outer(y, gy) / float(y @ gy)
    # 在 g_y 内积下正交化投影后的坐标基
    _, vecs = eigh(projector.T @ g @ projector, g)
    return vecs[:, -(n - 1):]


# ----------------------------------------------------------------------
# 命令
# ----------------------------------------------------------------------
def _skipped(name: str, reason: str) -> CheckReport:
    return CheckReport(name=name, passed=False, details={"skipped": reason})


def cmd_validate(ctx: CommandContext, args: argparse.Namespace) -> CommandResult:
    """代数、范数与喷射的全部不变量检查"""
    alg = ctx.algebra
    num = ctx.numerics
    samples = args.samples or num.convexity_samples
    checks: List[CheckReport] = [
        alg.check_antisymmetry(),
        alg.check_jacobi(tol=num.jacobi_tol),
        alg.check_subalgebra(tol=num.reductive_tol),
    ]
    reductive = alg.check_reductive(tol=num.reductive_tol)
    checks.append(reductive)
    if alg.representation is not None:
        checks.append(alg.representation.check_consistency(alg))
    advisories = [alg.check_unimodular_isotropy()]

    # 抽样检查各自按种子取样、互不依赖，交给线程池；map 保持提交顺序
    sampled: List[Callable[[], CheckReport]] = []
    if ctx.norm is not None:
        sampled.append(partial(ctx.norm.check_strong_convexity, samples=samples, seed=ctx.seed))
        if reductive.passed:
            sampled.append(partial(
                check_ad_h_invariance, ctx.norm, alg, samples=samples, seed=ctx.seed, tol=num.invariance_tol,
            ))
        else:
            sampled.append(partial(_skipped, "ad_h_invariance", "分解不是约化的"))

    spray = None
    try:
        spray = ctx.build_spray(check_invariance=False)
    except UnsupportedConfigurationError as e:
        app_logger.warning(f"无法构造喷射: {e}")
        sampled.append(partial(_skipped, "spray", str(e)))
    if spray is not None:
        if reductive.passed:
            sampled.append(partial(spray.check_equivariance, samples=min(samples, 32), seed=ctx.seed))
        else:
            sampled.append(partial(_skipped, "equivariance", "分解不是约化的"))
        sampled.append(partial(spray.check_homogeneity, samples=samples, seed=ctx.seed))
        if spray.is_finsler:
            sampled.append(partial(spray.check_connection_modes, samples=min(samples, 50), seed=ctx.seed))

    with ThreadPoolExecutor(max_workers=ctx.workers) as pool:
        checks += list(pool.map(lambda job: job(), sampled))

    passed = all(check.passed for check in checks)
    failed = [check.name for check in checks if not check.passed]
    message = "全部校验通过" if passed else f"校验未通过: {', '.join(failed)}"
    report = create_response(
        success=passed,
        message=message,
        data={
            "scene": scene_summary(ctx.objects),
            "seed": ctx.seed,
            "checks": [check.to_dict() for check in checks],
            "advisories": [check.to_dict() for check in advisories],
        },
    )

    def frame():
        return rows_frame(
            [{"check": c.name, "passed": c.passed, "max_violation": c.max_violation, "tolerance": c.tolerance}
             for c in checks],
        )

    return CommandResult(EXIT_OK if passed else EXIT_VALIDATION, _render(ctx, report, frame))


def cmd_eta(ctx: CommandContext, args: argparse.Namespace) -> CommandResult:
    """η(y)、N(y, e_j) 各列与齐次性残差"""
    spray = ctx.build_spray()
    y = _require(args.y_vector, "--y")
    eta = spray.eta(y)
    N = spray.connection_matrix(y)
    data = {
        "scene": scene_summary(ctx.objects),
        "seed": ctx.seed,
        "y": y,
        "eta": eta,
        "N": N,
        "n_mode": spray.n_mode,
        "geodesic_vector_residual": spray.geodesic_vector_residual(y),
        "homogeneity": spray.homogeneity_residuals(y),
    }
    if spray.is_finsler:
        other = "A" if spray.n_mode == "B" else "B"
        data["mode_agreement"] = float(np.max(np.abs(N - spray.connection_matrix(y, mode=other))))
    report = create_response(success=True, message="η 计算完成", data=data)

    def frame():
        rows = [{"quantity": "eta", "index": i + 1, "value": v} for i, v in enumerate(eta)]
        rows += [
            {"quantity": f"N[:,{j + 1}]", "index": i + 1, "value": N[i, j]}
            for j in range(N.shape[1]) for i in range(N.shape[0])
        ]
        return rows_frame(rows)

    return CommandResult(EXIT_OK, _render(ctx, report, frame))


def cmd_curvature(ctx: CommandContext, args: argparse.Namespace) -> CommandResult:
    """R_y 及其五项分解、S(y)、正交补上的旗曲率与 Landsberg 值"""
    spray = ctx.build_spray()
    y = _require(args.y_vector, "--y")
    terms = spray.riemann_terms(y)
    R = sum(terms[name] for name in RIEMANN_TERMS)
    data = {
        "scene": scene_summary(ctx.objects),
        "seed": ctx.seed,
        "y": y,
        "riemann": R,
        "terms": {name: terms[name] for name in RIEMANN_TERMS},
        "s_curvature": spray.s_curvature(y),
        "unimodular": spray.unimodular.passed,
        "riemann_y": spray.riemann_y_residual(y),
    }
    flags = []
    if spray.is_finsler:
        g = spray.source.norm.fundamental_tensor(y)
        data["riemann_symmetry"] = spray.riemann_symmetry_residual(y)
        for w in _complement_basis(g, y).T:
            flags.append({
                "w": w,
                "flag_curvature": spray.flag_curvature(y, w),
                "landsberg": spray.landsberg(y, w),
            })
    data["flags"] = flags
    report = create_response(success=True, message="曲率计算完成", data=data)

    def frame():
        n = spray.n
        rows = []
        for name in ("riemann",) + tuple(RIEMANN_TERMS):
            matrix = R if name == "riemann" else terms[name]
            rows += [{"term": name, "row": i + 1, "col": j + 1, "value": matrix[i, j]}
                     for i in range(n) for j in range(n)]
        return rows_frame(rows)

    return CommandResult(EXIT_OK, _render(ctx, report, frame))


def cmd_geodesic(ctx: CommandContext, args: argparse.Namespace) -> CommandResult:
    """y(t) 采样及守恒量列"""
    spray = ctx.build_spray()
    y0 = _require(args.y_vector, "--y")
    traj = integrate_geodesic(spray, y0, args.t_end, config=ctx.integrator)
    columns: Dict[str, List[float]] = {}
    for state in traj.states:
        for key, value in conserved_quantities(spray, state).items():
            columns.setdefault(key, []).append(value)
    group = None
    if args.group:
        group = reconstruct_group_curve(spray.algebra, traj)
    if ctx.fmt == "csv":
        return CommandResult(EXIT_OK, format_csv(trajectory_frame(traj, "y", columns)))
    doc = trajectory_json(traj, group)
    doc["conserved"] = columns
    report = create_response(success=True, message="测地线积分完成", data={
        "scene": scene_summary(ctx.objects), "seed": ctx.seed, **doc,
    })
    return CommandResult(EXIT_OK, format_json(report))


def cmd_transport(ctx: CommandContext, args: argparse.Namespace) -> CommandResult:
    """沿 --base 给出的底曲线（测地线或常速度）做线性/非线性平行移动"""
    spray = ctx.build_spray()
    base = _require(args.base_vector, "--base")
    vector = _require(args.vector_vector, "--vector")
    if args.curve == "geodesic":
        curve = integrate_geodesic(spray, base, args.t_end, config=ctx.integrator)
    else:
        curve = spray._nonzero(base)

    columns: Dict[str, List[float]] = {}
    if args.mode == "linear":
        traj = linear_transport(spray, curve, vector, args.t_end, config=ctx.integrator)
        prefix = "w"
        if spray.is_finsler:
            norm = spray.source.norm
            ys = [curve(t) if callable(curve) else curve for t in traj.times]
            columns["g_yw"] = [float(y @ norm.fundamental_tensor(y) @ w) for y, w in zip(ys, traj.states)]
    else:
        traj = nonlinear_transport(spray, curve, vector, args.t_end, config=ctx.integrator)
        prefix = "y"
        if spray.is_finsler:
            columns["F"] = [spray.source.norm.value(y) for y in traj.states]

    if ctx.fmt == "csv":
        return CommandResult(EXIT_OK, format_csv(trajectory_frame(traj, prefix, columns)))
    doc = trajectory_json(traj)
    doc["columns"] = columns
    report = create_response(success=True, message=f"{args.mode} 平行移动完成", data={
        "scene": scene_summary(ctx.objects), "seed": ctx.seed, "mode": args.mode, "curve": args.curve, **doc,
    })
    return CommandResult(EXIT_OK, format_json(report))


def scan_directions(g: np.ndarray, y: np.ndarray, grid: int, seed: int) -> np.ndarray:
    """g_y 正交补中 grid 个随机单位方向（按种子确定）"""
    basis = _complement_basis(g, y)
    if basis.shape[1] == 0:
        logger.info("dim_m = 1，没有旗方向")
        return np.zeros((0, y.size))
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((grid, basis.shape[1]))
    coeffs /= np.linalg.norm(coeffs, axis=1, keepdims=True)
    return coeffs @ basis.T


def cmd_scan(ctx: CommandContext, args: argparse.Namespace) -> CommandResult:
    """K(y, w) 在一组旗方向上的取值，按网格下标排序"""
    spray = ctx.build_spray()
    if not spray.is_finsler:
        raise UnsupportedConfigurationError("旗曲率扫描需要 Finsler 来源")
    y = spray._nonzero(_require(args.y_vector, "--y"))
    if args.grid < 1:
        raise ArgumentError("--grid 至少为 1")
    directions = scan_directions(spray.source.norm.fundamental_tensor(y), y, args.grid, ctx.seed)
    columns = ["index"] + [f"w{i + 1}" for i in range(spray.n)] + ["K"]

    def evaluate(w: np.ndarray) -> float:
        return spray.flag_curvature(y, w)

    with ThreadPoolExecutor(max_workers=ctx.workers) as pool:
        values = list(pool.map(evaluate, directions))

    rows = []
    for index, (w, K) in enumerate(zip(directions, values)):
        row = {"index": index}
        row.update({f"w{i + 1}": wi for i, wi in enumerate(w)})
        row["K"] = K
        rows.append(row)
    report = create_response(success=True, message="旗曲率扫描完成", data={
        "scene": scene_summary(ctx.objects), "seed": ctx.seed, "y": y, "rows": rows,
    })
    return CommandResult(EXIT_OK, _render(ctx, report, lambda: rows_frame(rows, columns=columns)))


def cmd_oracle_compare(ctx: CommandContext, args: argparse.Namespace) -> CommandResult:
    """原点处齐性公式与坐标卡计算的逐项对照，外加平行移动对照"""
    spray = ctx.build_spray()
    chart = ChartMetric.from_spray(spray)
    rng = np.random.default_rng(ctx.seed)
    n = spray.n
    if args.y_vector is not None:
        samples = [(args.y_vector, rng.standard_normal(n))]
    else:
        count = args.samples or 5
        samples = [(rng.standard_normal(n), rng.standard_normal(n)) for _ in range(count)]

    rows: List[Dict[str, Any]] = []
    for index, (y, w) in enumerate(samples):
        for row in compare_at_origin(spray, chart, y, w):
            rows.append({"sample": index, "y": y, **row})

    # 沿 exp(t·base)·o，base 缩放到坐标卡半径内
    base, vector = samples[0]
    base = np.asarray(base, dtype=float) / float(np.linalg.norm(base))
    t_end = 0.8 * chart.radius
    for mode in ("linear", "nonlinear"):
        check = transport_cross_check(spray, chart, base, vector, mode=mode, t_end=t_end, dt=1e-2)
        rows.append({
            "sample": 0,
            "y": base,
            "quantity": check.name,
            "homogeneous": None,
            "chart": None,
            "residual": check.max_violation,
            "tolerance": check.tolerance,
            "passed": check.passed,
        })

    passed = all(row["passed"] for row in rows)
    failed = sorted({row["quantity"] for row in rows if not row["passed"]})
    report = create_response(
        success=passed,
        message="坐标卡对照全部通过" if passed else f"坐标卡对照未通过: {', '.join(failed)}",
        data={"scene": scene_summary(ctx.objects), "seed": ctx.seed, "rows": rows},
    )
    columns = ["sample", "quantity", "residual", "tolerance", "passed"]
    return CommandResult(
        EXIT_OK if passed else EXIT_VALIDATION,
        _render(ctx, report, lambda: rows_frame(rows, columns)),
    )


COMMANDS: Dict[str, Callable[[CommandContext, argparse.Namespace], CommandResult]] = {
    "validate": cmd_validate,
    "eta": cmd_eta,
    "curvature": cmd_curvature,
    "geodesic": cmd_geodesic,
    "transport": cmd_transport,
    "scan": cmd_scan,
    "oracle-compare": cmd_oracle_compare,
}


# ----------------------------------------------------------------------
# 入口
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = HomSprayArgumentParser(
        prog="homspray",
        description="齐性喷射与齐性 Finsler 空间的曲率、测地线与平行移动计算",
    )
    parser.add_argument("command", choices=list(COMMANDS), help="子命令")
    parser.add_argument("--scene", required=True, help="场景 JSON 文件")
    parser.add_argument("--y", nargs="+", dest="y", help="m 中的向量，如 1,0,0")
    parser.add_argument("--t-end", type=float, default=1.0, help="积分终点 (默认 1.0)")
    parser.add_argument("--dt", type=float, default=None, help="积分步长 (覆盖场景)")
    parser.add_argument("--method", choices=["rk4", "rk45"], default=None, help="积分方法 (覆盖场景)")
    parser.add_argument("--grid", type=int, default=16, help="scan 的旗方向个数 (默认 16)")
    parser.add_argument("--samples", type=int, default=None, help="随机校验的采样数")
    parser.add_argument("--seed", type=int, default=None, help="随机种子 (默认 42)")
    parser.add_argument("--workers", type=int, default=None, help="scan 与 validate 抽样检查的线程数")
    parser.add_argument("--mode", choices=["linear", "nonlinear"], default="linear", help="平行移动类型")
    parser.add_argument("--base", nargs="+", help="底曲线的初速度")
    parser.add_argument("--vector", nargs="+", help="平行移动的初始向量")
    parser.add_argument("--curve", choices=["geodesic", "constant"], default="geodesic",
                        help="底曲线：从 --base 出发的测地线，或常速度 --base")
    parser.add_argument("--group", action="store_true", help="geodesic 的 JSON 输出附带群曲线")
    parser.add_argument("--out", default=None, help="输出文件 (默认标准输出)")
    parser.add_argument("--format", choices=["csv", "json"], default=None, help="输出格式")
    parser.add_argument("--config", default=None, help="配置文件 (默认 config/homspray.json)")
    parser.add_argument("--log-level", default=None, help="日志级别")
    return parser


def _load_settings(path: Optional[str]) -> Tuple[AppSettings, Optional[str]]:
    if path is not None:
        config_manager.config_file = path
    try:
        settings = config_manager.load_config()
    except Exception as e:
        return AppSettings(), f"配置加载失败，使用默认配置: {e}"
    validation = config_manager.validate_config(settings)
    if not validation["valid"]:
        return AppSettings(), f"配置无效，使用默认配置: {validation['errors']}"
    return settings, None


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    settings, problem = _load_settings(args.config)
    setup_logging(
        log_level=args.log_level or settings.log_level,
        log_dir=settings.log_dir,
        file_output=settings.log_file,
    )
    if problem:
        app_logger.warning(problem)

    process = ProcessLogger(args.command)
    process.start(args.scene)
    try:
        objects = load_scene(args.scene)
        dim = objects.algebra.dim_m
        args.y_vector = parse_vector(args.y, dim, "--y")
        args.base_vector = parse_vector(args.base, dim, "--base")
        args.vector_vector = parse_vector(args.vector, dim, "--vector")
        ctx = _resolve_context(args, settings, objects)
        process.step("场景加载完成", {"algebra": objects.algebra.name, "seed": ctx.seed})
    except (SceneParseError, ArgumentError) as e:
        process.error("解析失败", e)
        sys.stderr.write(f"错误: {e}\n")
        return EXIT_PARSE
    except HomSprayError as e:
        process.error("输入无效", e)
        sys.stderr.write(f"错误: {e}\n")
        return EXIT_PARSE
    except ValidationError as e:
        # 命令行覆盖的积分参数
        process.error("参数无效", e)
        sys.stderr.write(f"错误: {e}\n")
        return EXIT_PARSE

    try:
        result = COMMANDS[args.command](ctx, args)
    except ArgumentError as e:
        process.error("参数无效", e)
        sys.stderr.write(f"错误: {e}\n")
        return EXIT_PARSE
    except HomSprayError as e:
        process.error("计算失败", e)
        sys.stderr.write(f"错误: {e}\n")
        return EXIT_NUMERICAL

    write_text(result.text, args.out)
    process.finish(success=result.code == EXIT_OK)
    return result.code


if __name__ == "__main__":
    sys.exit(main())
