"""
异常定义

所有异常都携带 code 与 details，命令行根据异常类型决定退出码。
"""

from typing import Any


class HomSprayError(Exception):
    """homspray 异常基类"""
    def __init__(self, message: str, code: int = 0, details: Any = None):
        super().__init__(message)
        self.code = code
        self.details = details


class InputError(HomSprayError):
    """输入错误：维度不匹配、未知预设等"""


class SceneParseError(HomSprayError):
    """场景文件解析错误，message 中带有行列号或字段路径"""


class NumericalError(HomSprayError):
    """数值计算失败"""


class StrongConvexityError(NumericalError):
    """基本张量不正定（强凸性失败），details 中记录出问题的 y"""


class UnsupportedConfigurationError(NumericalError):
    """不支持的配置，例如非约化分解上的 Finsler 喷射"""


class ConeExitError(NumericalError):
    """轨线离开去零锥 m\\{0}"""


class SeriesConvergenceError(NumericalError):
    """dexp 级数在项数上限内未收敛"""


class ChartRadiusError(NumericalError):
    """超出指数坐标卡半径"""


class DegenerateFlagError(NumericalError):
    """旗退化（y 与 w 线性相关）"""


class MissingRepresentationError(NumericalError):
    """缺少矩阵表示"""


class IntegrationError(NumericalError):
    """ODE 积分失败"""


class ArgumentError(InputError):
    """命令行参数错误（向量格式、维度等）"""
