"""日志配置模块"""
import logging
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from app.config import get_settings

# 配置日志格式
log_format = logging.Formatter(
    '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

# 创建根日志记录器
logger = logging.getLogger('wfleak')
logger.setLevel(logging.DEBUG)
logger.propagate = False


def configure_logging(level: Optional[str] = None, log_dir: Optional[Path] = None) -> None:
    """
    (重新)配置处理器

    Args:
        level: 控制台日志级别，默认取配置中的 log_level
        log_dir: 日志目录，默认取配置中的 log_dir
    """
    settings = get_settings()
    level = (level or settings.log_level).upper()
    log_dir = Path(log_dir or settings.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    today = datetime.now().strftime('%Y%m%d')
    log_file = log_dir / f"app_{today}.log"
    error_log_file = log_dir / f"error_{today}.log"

    # 清除已有的处理器（避免重复添加）
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    # 控制台处理器
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(getattr(logging, level, logging.INFO))
    console_handler.setFormatter(log_format)
    logger.addHandler(console_handler)

    # 文件处理器（所有级别，带轮转）
    file_handler = RotatingFileHandler(
        log_file,
        maxBytes=10 * 1024 * 1024,  # 10MB
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(log_format)
    logger.addHandler(file_handler)

    # 错误日志文件处理器（ERROR级别及以上）
    error_handler = RotatingFileHandler(
        error_log_file,
        maxBytes=10 * 1024 * 1024,
        backupCount=5,
        encoding='utf-8'
    )
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(log_format)
    logger.addHandler(error_handler)


configure_logging()

# 缓存索引用到 SQLAlchemy，只记录 WARNING 及以上
logging.getLogger('sqlalchemy.engine').setLevel(logging.WARNING)


def get_logger(name: str = None):
    """
    获取日志记录器

    Args:
        name: 日志记录器名称（通常是模块名）

    Returns:
        Logger实例
    """
    if name:
        return logger.getChild(name)
    return logger
