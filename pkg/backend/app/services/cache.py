"""
阶段产物缓存

键为输入内容哈希与阶段配置的 SHA-256；索引存在 cache.db 的 CacheEntry 表，
文件本体放在缓存目录下。索引还在但文件丢失时按未命中处理。
"""
import json
import shutil
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from sqlalchemy.engine import Engine
from sqlmodel import Session

from app.logger import get_logger
from app.models import CacheEntry
from app.services.artifacts import hash_bytes

logger = get_logger(__name__)


class ArtifactCache:
    """按内容寻址的阶段产物缓存"""

    def __init__(self, engine: Engine, root: Union[str, Path]):
        self.engine = engine
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(stage: str, input_hash: str, config: Mapping[str, Any]) -> str:
        return hash_bytes(stage, input_hash, json.dumps(dict(config), sort_keys=True, default=str))

    def lookup(self, key: str) -> Optional[Path]:
        """命中时返回缓存文件路径"""
        with Session(self.engine) as session:
            entry = session.get(CacheEntry, key)
            if entry is None:
                return None
            path = Path(entry.path)
            if not path.is_file():
                logger.warning(f"缓存文件丢失，删除索引: {path}")
                session.delete(entry)
                session.commit()
                return None
            logger.info(f"缓存命中: {entry.stage} {key[:12]}")
            return path

    def store(self, key: str, stage: str, source: Union[str, Path]) -> Path:
        """复制产物到缓存目录并写入索引（同键覆盖）"""
        source = Path(source)
        target = self.root / stage / f"{key}{source.suffix}"
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(source, target)
        with Session(self.engine) as session:
            entry = session.get(CacheEntry, key)
            if entry is None:
                entry = CacheEntry(key=key, stage=stage, path=str(target))
            entry.path = str(target)
            entry.stage = stage
            entry.size = target.stat().st_size
            session.add(entry)
            session.commit()
        logger.debug(f"写入缓存: {stage} {key[:12]} ({target.stat().st_size} bytes)")
        return target
