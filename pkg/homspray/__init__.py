"""齐性喷射与齐性 Finsler 空间的数值计算"""

__version__ = "0.1.0"
