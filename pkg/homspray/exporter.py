"""
结果输出：CSV（pandas，17 位有效数字）与 JSON

相同输入输出逐字节一致：不写时间戳，浮点格式与区域设置无关。
"""

import json
import logging
import re
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .dynamics import GroupTrajectory, Trajectory
from .utils import format_float, to_jsonable

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


def trajectory_frame(
    traj: Trajectory,
    prefix: str = "y",
    extra: Optional[Dict[str, Sequence[float]]] = None,
) -> pd.DataFrame:
    """t, y1..yn 以及附加列"""
    data = {"t": traj.times}
    for i in range(traj.dim):
        data[f"{prefix}{i + 1}"] = traj.states[:, i]
    for key, values in (extra or {}).items():
        data[key] = np.asarray(values, dtype=float)
    return pd.DataFrame(data)


def rows_frame(rows: List[Dict[str, Any]], columns: Optional[List[str]] = None) -> pd.DataFrame:
    """表格行（dict）→ DataFrame；非标量单元格转成 JSON 文本"""
    flat = []
    for row in rows:
        flat.append({
            key: (json.dumps(to_jsonable(value)) if isinstance(value, (list, tuple, np.ndarray, dict)) else value)
            for key, value in row.items()
        })
    return pd.DataFrame(flat, columns=columns)


def format_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


# 浮点数先替换成带标记的字符串，dumps 之后再还原成 17 位有效数字的字面量
_FLOAT_MARK = "\x00float:"
_FLOAT_MARK_RE = re.compile(r'"\\u0000float:([^"]*)"')


def _mark_floats(data: Any) -> Any:
    if isinstance(data, dict):
        return {key: _mark_floats(value) for key, value in data.items()}
    if isinstance(data, list):
        return [_mark_floats(item) for item in data]
    if isinstance(data, float):
        return _FLOAT_MARK + format_float(data)
    return data


def format_json(obj: Any) -> str:
    text = json.dumps(_mark_floats(to_jsonable(obj)), indent=2, ensure_ascii=False)
    return _FLOAT_MARK_RE.sub(lambda m: m.group(1), text) + "\n"


def write_text(text: str, out: Optional[str] = None) -> None:
    """写到文件；out 为空或 '-' 时写到标准输出"""
    if out in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, 'w', encoding='utf-8', newline="\n") as f:
        f.write(text)
    logger.info(f"结果已写入 {out}")


def trajectory_json(traj: Trajectory, group: Optional[GroupTrajectory] = None) -> Dict[str, Any]:
    doc = {"trajectory": traj.to_json()}
    if group is not None:
        doc["group"] = group.to_json()
    return doc
