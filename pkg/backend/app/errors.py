"""异常类型与命令行退出码"""
from typing import Optional

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class WfleakError(Exception):
    """所有可预期错误的基类"""
    exit_code = EXIT_FAILURE


class UsageError(WfleakError):
    """参数组合或配置无效"""
    exit_code = EXIT_USAGE


class DataError(WfleakError, ValueError):
    """输入数据不满足约束"""
    exit_code = EXIT_DATA


class TraceFormatError(DataError):
    """trace 文本格式错误，带行号"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DatasetError(DataError):
    """数据集目录不可用"""


class NumericError(WfleakError, ArithmeticError):
    """带宽选择、蒙特卡洛估计或置信区间计算失败"""
    exit_code = EXIT_NUMERIC
