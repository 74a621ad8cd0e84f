"""
结果文件读写：JSON、CSV、内容哈希与运行清单

JSON 键排序、CSV 浮点数用 repr、清单里没有时间戳，相同输入得到逐字节相同的文件。
"""
import csv
import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pydantic
import scipy
import sklearn
from pydantic import BaseModel

import app
from app.schemas import Manifest

MANIFEST_NAME = "manifest.json"


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def to_json(value: Any) -> str:
    return json.dumps(_plain(value), sort_keys=True, indent=2, default=_plain) + "\n"


def write_json(value: Any, path: Union[str, Path]) -> Path:
    """pydantic 模型或普通字典写成键排序的 JSON"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(value), encoding="utf-8")
    return path


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def write_csv(rows: Sequence[Mapping[str, Any]], path: Union[str, Path],
              columns: Optional[Sequence[str]] = None) -> Path:
    """字典行写成 CSV，列顺序取 columns 或第一行的键顺序"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(columns) if columns is not None else (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def hash_bytes(*parts: Union[bytes, str]) -> str:
    """SHA-256；各部分之间加分隔，避免拼接歧义"""
    digest = hashlib.sha256()
    for part in parts:
        data = part.encode("utf-8") if isinstance(part, str) else part
        digest.update(len(data).to_bytes(8, "big"))
        digest.update(data)
    return digest.hexdigest()


def hash_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def hash_directory(root: Union[str, Path], pattern: str = "*") -> str:
    """目录内容哈希：按相对路径排序，逐个文件哈希"""
    root = Path(root)
    parts: List[str] = []
    for path in sorted(p for p in root.rglob(pattern) if p.is_file()):
        parts.append(path.relative_to(root).as_posix())
        parts.append(hash_file(path))
    return hash_bytes(*parts)


def versions() -> Dict[str, str]:
    return {
        "wfleak": app.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "pydantic": pydantic.VERSION,
    }


def _setting(value: Any) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, Enum):
        return str(value.value)
    return str(_plain(value))


def build_manifest(command: str, config: Mapping[str, Any], seed: Optional[int]) -> Manifest:
    """运行清单：命令、合并后的配置、种子与依赖版本"""
    snapshot = {str(k): _setting(v) for k, v in sorted(config.items())}
    return Manifest(command=command, config=snapshot, seed=seed, versions=versions())


def write_manifest(output_dir: Union[str, Path], command: str, config: Mapping[str, Any],
                   seed: Optional[int]) -> Path:
    return write_json(build_manifest(command, config, seed), Path(output_dir) / MANIFEST_NAME)


def rows_from(items: Iterable[Any]) -> List[Dict[str, Any]]:
    """dataclass / pydantic / dict 对象转成 CSV 行"""
    rows = []
    for item in items:
        if isinstance(item, BaseModel):
            rows.append(item.model_dump(mode="json"))
        elif hasattr(item, "__dataclass_fields__"):
            rows.append({name: getattr(item, name) for name in item.__dataclass_fields__})
        else:
            rows.append(dict(item))
    return rows
