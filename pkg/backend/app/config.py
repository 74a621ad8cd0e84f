"""运行配置：环境变量、.env 文件与 key = value 配置文件"""
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import UsageError

BACKEND_DIR = Path(__file__).parent.parent


class Settings(BaseSettings):
    """
    全局默认值

    读取顺序：环境变量（前缀 WFLEAK_）> backend/.env > 下面的默认值。
    命令行参数与配置文件在 PipelineConfig 中再覆盖这些值。
    """
    model_config = SettingsConfigDict(
        env_prefix="WFLEAK_",
        env_file=str(BACKEND_DIR / ".env"),
        env_file_encoding="utf-8",
        extra="ignore",
    )

    threads: int = Field(1, ge=1, description="默认工作线程数")
    log_dir: Path = Field(BACKEND_DIR / "logs", description="日志目录")
    log_level: str = Field("INFO", description="控制台日志级别")
    cache_dir: Path = Field(BACKEND_DIR / ".cache", description="阶段产物缓存目录")

    # 防御模拟的显式默认值（τ 和 L 必须由调用方给出）
    buflo_rho: float = Field(0.02, gt=0, description="BuFLO 固定发送间隔（秒）")
    buflo_cell_size: int = Field(512, gt=0, description="BuFLO 固定包大小（字节）")
    tamaraw_rho_out: float = Field(0.04, gt=0, description="Tamaraw 上行间隔（秒）")
    tamaraw_rho_in: float = Field(0.012, gt=0, description="Tamaraw 下行间隔（秒）")


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """获取（缓存的）全局配置"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """清除缓存，测试中修改环境变量后调用"""
    global _settings
    _settings = None


def load_config_file(path: Path) -> Dict[str, str]:
    """
    读取 `key = value` 格式的配置文件

    键名与命令行参数一致（`--top-n` 写作 `top_n` 或 `top-n`），`#` 开头为注释。

    Returns:
        键已规范化为下划线形式的字典
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    values = dotenv_values(path)
    config: Dict[str, str] = {}
    for key, value in values.items():
        if value is None:
            raise UsageError(f"config key without value: {key}")
        config[key.strip().replace("-", "_")] = value.strip()
    return config
