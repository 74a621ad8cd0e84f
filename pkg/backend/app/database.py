"""缓存索引数据库配置和会话管理"""
from pathlib import Path
from typing import Optional

from sqlalchemy.engine import Engine
from sqlmodel import SQLModel, create_engine

from app.config import get_settings


def get_engine(cache_dir: Optional[Path] = None) -> Engine:
    """
    创建缓存目录下 cache.db 的数据库引擎

    Args:
        cache_dir: 缓存目录，默认取配置中的 cache_dir
    """
    cache_dir = Path(cache_dir or get_settings().cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    db_path = cache_dir / "cache.db"
    # SQLite 需要绝对路径
    database_url = f"sqlite:///{db_path.absolute()}"
    engine = create_engine(
        database_url,
        connect_args={
            "check_same_thread": False,
            "timeout": 30.0,
        },
        echo=False,
        pool_pre_ping=True,
    )
    create_db_and_tables(engine)
    return engine


def create_db_and_tables(engine: Engine) -> None:
    """创建数据库表"""
    SQLModel.metadata.create_all(engine)
