#!/usr/bin/env python3
"""
homspray 启动脚本

    python start.py <command> --scene FILE [...]

先做环境检查（Python 版本、依赖、配置与场景目录），再交给命令行入口。
"""

import importlib
import sys
from pathlib import Path

REQUIRED_MODULES = {
    "numpy": "numpy",
    "scipy": "scipy",
    "pandas": "pandas",
    "pydantic": "pydantic",
    "dotenv": "python-dotenv",
}


def check_python_version():
    """检查Python版本"""
    if sys.version_info < (3, 9):
        print("❌ 错误: 需要Python 3.9或更高版本", file=sys.stderr)
        print(f"当前版本: {sys.version}", file=sys.stderr)
        sys.exit(1)


def check_venv():
    """检查虚拟环境"""
    if hasattr(sys, 'real_prefix') or (hasattr(sys, 'base_prefix') and sys.base_prefix != sys.prefix):
        return True
    print("⚠️  警告: 未检测到虚拟环境", file=sys.stderr)
    return False


def check_dependencies():
    """检查依赖是否可导入"""
    missing = []
    for module, package in REQUIRED_MODULES.items():
        try:
            importlib.import_module(module)
        except ImportError:
            missing.append(package)
    if missing:
        print(f"❌ 缺少依赖: {', '.join(missing)}", file=sys.stderr)
        print("请先执行: pip install -r requirements.txt", file=sys.stderr)
        sys.exit(1)


def check_config(root: Path):
    """检查配置文件和示例场景"""
    config_file = root / "config" / "homspray.json"
    env_file = root / ".env"
    scenes_dir = root / "scenes"

    if not config_file.exists() and not env_file.exists():
        # 不强制要求，全部使用默认配置
        print("ℹ️  未找到 config/homspray.json 或 .env，使用默认配置", file=sys.stderr)

    if not scenes_dir.is_dir() or not any(scenes_dir.glob("*.json")):
        print("⚠️  scenes/ 目录中没有示例场景", file=sys.stderr)
        return False
    return True


def main():
    """主函数"""
    # 场景路径相对于当前目录，不切换工作目录
    script_dir = Path(__file__).parent.absolute()
    sys.path.insert(0, str(script_dir))

    check_python_version()
    check_venv()
    check_dependencies()
    check_config(script_dir)

    from homspray.app import main as cli_main
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
