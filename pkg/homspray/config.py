import os
import json
import logging
from typing import Dict, Optional
from pydantic import BaseModel, ConfigDict, field_validator
from dotenv import load_dotenv

# 加载环境变量
load_dotenv()

logger = logging.getLogger(__name__)


class NumericsConfig(BaseModel):
    """数值容差配置"""
    model_config = ConfigDict(frozen=True)

    homogeneity_tol: float = 1e-8
    mode_agreement_tol: float = 1e-6
    invariance_tol: float = 1e-8
    equivariance_tol: float = 1e-6
    reductive_tol: float = 1e-12
    jacobi_tol: float = 1e-12
    oracle_tol: float = 1e-4
    s_curvature_tol: float = 1e-5
    eta_tol: float = 1e-5
    transport_tol: float = 1e-5
    dexp_tol: float = 1e-15
    chart_radius: float = 0.5
    convexity_samples: int = 64
    cone_exit_ratio: float = 1e-9
    degenerate_flag_tol: float = 1e-12

    @field_validator('chart_radius', 'dexp_tol', 'cone_exit_ratio', 'degenerate_flag_tol')
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError('容差和半径必须为正数')
        return v

    @field_validator('convexity_samples')
    @classmethod
    def validate_samples(cls, v):
        if v < 1:
            raise ValueError('凸性采样数至少为1')
        return v


class IntegratorConfig(BaseModel):
    """积分器配置"""
    model_config = ConfigDict(frozen=True)

    method: str = "rk4"
    dt: float = 1e-3
    rtol: float = 1e-10
    atol: float = 1e-12

    @field_validator('method')
    @classmethod
    def validate_method(cls, v):
        v = v.strip().lower()
        if v not in ("rk4", "rk45"):
            raise ValueError('积分方法只能是 rk4 或 rk45')
        return v

    @field_validator('dt')
    @classmethod
    def validate_dt(cls, v):
        if v <= 0:
            raise ValueError('步长必须为正数')
        return v


class AppSettings(BaseModel):
    """应用配置"""
    log_level: str = "INFO"
    log_dir: str = "logs"
    log_file: bool = False
    seed: int = 42
    workers: int = 1
    numerics: NumericsConfig = NumericsConfig()
    integrator: IntegratorConfig = IntegratorConfig()

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        v = v.strip().upper()
        if v not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f'未知日志级别: {v}')
        return v

    @field_validator('workers')
    @classmethod
    def validate_workers(cls, v):
        if v < 1:
            raise ValueError('工作线程数至少为1')
        return v


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_file: str = "config/homspray.json"):
        self.config_file = config_file
        self._config: Optional[AppSettings] = None

    def load_config(self) -> AppSettings:
        """加载配置：JSON文件为底，环境变量优先"""
        try:
            config_data = self._load_json_config()

            env_map = {
                'log_level': os.getenv('HOMSPRAY_LOG_LEVEL'),
                'log_dir': os.getenv('HOMSPRAY_LOG_DIR'),
                'log_file': os.getenv('HOMSPRAY_LOG_FILE'),
                'seed': os.getenv('HOMSPRAY_SEED'),
                'workers': os.getenv('HOMSPRAY_WORKERS'),
            }
            for key, value in env_map.items():
                if value is not None and value.strip():
                    config_data[key] = value.strip()

            self._config = AppSettings(**config_data)
            logger.debug("配置加载成功")
            return self._config

        except Exception as e:
            logger.error(f"配置加载失败: {e}")
            raise

    def _load_json_config(self) -> Dict:
        """从JSON文件加载配置"""
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                return json.load(f)
        except FileNotFoundError:
            logger.debug(f"配置文件 {self.config_file} 不存在，使用默认配置")
            return {}
        except json.JSONDecodeError as e:
            logger.error(f"配置文件格式错误: {e}")
            raise

    def validate_config(self, config: AppSettings) -> Dict:
        """验证配置"""
        errors = []
        warnings = []

        numerics = config.numerics
        if numerics.chart_radius > 1.0:
            warnings.append("坐标卡半径大于1，dexp 条件数可能变差")
        if numerics.oracle_tol < 1e-6:
            warnings.append("嵌套差分的预言机容差低于1e-6，可能无法达到")
        if config.integrator.method == "rk45" and config.integrator.rtol > 1e-6:
            warnings.append("自适应积分的相对容差过大，守恒量检查可能失败")
        if config.integrator.dt > 0.1:
            errors.append("积分步长过大")

        return {
            "valid": len(errors) == 0,
            "errors": errors,
            "warnings": warnings
        }

    @property
    def config(self) -> Optional[AppSettings]:
        """获取当前配置"""
        return self._config


# 全局配置管理器实例
config_manager = ConfigManager()
