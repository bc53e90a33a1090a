"""
memoctrl 记忆型零能控性工具库 - 异常定义

所有库内异常都继承自 MemoctrlError，前端据此映射退出码:
- 配置 / 维度 / 适用性类错误 -> 2
- NumericalError 及其子类 -> 3
"""

from typing import Optional


class MemoctrlError(Exception):
    """库内所有异常的基类"""


class DimensionMismatchError(MemoctrlError, ValueError):
    """矩阵或向量维度不一致"""


class ConfigurationError(MemoctrlError, ValueError):
    """领域对象参数非法，例如控制窗口在某时刻不含任何网格节点"""


class GridError(MemoctrlError, ValueError):
    """时间网格相关错误：非均匀网格、时刻不在网格上、时间区间不一致"""


class KernelStructureError(MemoctrlError, ValueError):
    """核函数或控制算子的结构不满足某个判据的前提（如要求常数核、常数 B）"""


class ConditionInapplicableError(MemoctrlError):
    """
    秩判据不适用

    条件 (ii) 要求 d^i M̃/dt^i (0) = M̃(0) G_i 可解，最小二乘残差超限时抛出。

    Attributes:
        index: 失败时的导数阶数 i，None 表示与阶数无关
    """

    def __init__(self, message: str, index: Optional[int] = None) -> None:
        super().__init__(message)
        self.index = index


class NumericalError(MemoctrlError):
    """
    数值求解失败

    Attributes:
        step: 出错的时间步编号（从 1 开始），None 表示与步数无关
    """

    def __init__(self, message: str, step: Optional[int] = None) -> None:
        super().__init__(message)
        self.step = step


class SingularStepError(NumericalError):
    """单步线性方程组的系数矩阵奇异"""


class DivergenceError(NumericalError):
    """解出现非有限值（发散）"""


__all__ = [
    "MemoctrlError",
    "DimensionMismatchError",
    "ConfigurationError",
    "GridError",
    "KernelStructureError",
    "ConditionInapplicableError",
    "NumericalError",
    "SingularStepError",
    "DivergenceError",
]
