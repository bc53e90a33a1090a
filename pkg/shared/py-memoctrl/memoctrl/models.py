"""
memoctrl 记忆型零能控性工具库 - 结果与字面量模型

本模块定义了在库与命令行前端之间传递、并最终写成 JSON 的 Pydantic 模型:
- KernelTermLiteral: 配置文件中的核函数项
- RankReport: 秩判据报告
- SynthesisResult: HUM 控制合成结果
- SimulationSummary / AdjointSummary: 正向 / 伴随求解摘要
- CoverageReport / WindowComparison / ParabolicSummary: 热方程相关报告
- InertiaCase / InertiaReport: 记忆惯性演示

数值字段一律保存为 Python float，JSON 中是可逐位还原的双精度表示。
"""

from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from .trajectory import Trajectory

Verdict = Literal["holds", "fails", "inconclusive"]
ConditionName = Literal["i", "ii", "iii", "augmented"]


class KernelTermLiteral(BaseModel):
    """
    核函数字面量中的一项 e^{a t} Σ_k C_k t^k

    coeffs 是按次数排列的 n×n 矩阵列表，或标量列表（展开为 c·I）。

    Example:
        >>> KernelTermLiteral(a=2.0, coeffs=[1.0, 3.0])
    """

    a: float = Field(default=0.0, description="指数 a")
    coeffs: Union[list[float], list[list[list[float]]]] = Field(
        ..., description="系数矩阵列表或标量简写"
    )

    @model_validator(mode="after")
    def validate_square(self) -> "KernelTermLiteral":
        """矩阵系数必须是同阶方阵"""
        for matrix in self.coeffs:
            if isinstance(matrix, list):
                size = len(matrix)
                if any(len(row) != size for row in matrix):
                    raise ValueError("kernel coefficient matrices must be square")
        return self


class RankReport(BaseModel):
    """
    秩判据报告

    Attributes:
        condition: 判据编号
        verdict: holds 当且仅当 rank == target
        rank: 数值秩
        target: 目标秩 2n
        blocks_used: 拼接的列块数
        stop_reason: 停止原因
        singular_values: 拼接矩阵的奇异值
        necessary_too: 条件 (iii) 中 M̃ 可逆时为 True（判据同时是必要条件）
        null_directions: 判据不成立时，左零空间方向按 (w_T, -z_T) 两半给出
        matrix: 拼接矩阵本身，不进入 JSON
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    condition: ConditionName = Field(..., description="判据编号")
    verdict: Verdict = Field(..., description="结论")
    rank: int = Field(..., ge=0, description="数值秩")
    target: int = Field(..., ge=0, description="目标秩 2n")
    blocks_used: int = Field(..., ge=0, description="拼接的列块数")
    stop_reason: str = Field(..., description="停止原因")
    singular_values: list[float] = Field(default_factory=list, description="奇异值")
    necessary_too: Optional[bool] = Field(default=None, description="判据是否同时必要")
    null_directions: list[list[float]] = Field(
        default_factory=list, description="左零空间方向"
    )
    matrix: Optional[Any] = Field(default=None, exclude=True, description="拼接矩阵")

    @model_validator(mode="after")
    def validate_verdict(self) -> "RankReport":
        """verdict 与 rank 保持一致"""
        if (self.verdict == "holds") != (self.rank == self.target):
            raise ValueError("verdict must be 'holds' exactly when rank equals target")
        if self.condition == "iii" and self.verdict == "inconclusive":
            raise ValueError("condition iii is never inconclusive")
        return self

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"


class SynthesisResult(BaseModel):
    """
    HUM 控制合成结果

    Attributes:
        control: 节点上的控制 u = B(t)ᵀw，不进入 JSON（另存为 CSV）
        w_T / z_T: 最终的对偶变量
        terminal_state_norm: |y(T)|
        memory_norm: |∫M̃(T-s)y(s)ds|
        cost: ∫|u|²dt（梯形公式）
        iterations: CG 迭代次数
        epsilon: 正则化参数
        converged: CG 相对残差是否达到 cg_tol
        residual_history: 每次迭代后的 CG 相对残差
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    control: Optional[Trajectory] = Field(default=None, exclude=True, description="控制轨迹")
    w_T: list[float] = Field(default_factory=list, description="对偶变量 w_T")
    z_T: list[float] = Field(default_factory=list, description="对偶变量 z_T")
    terminal_state_norm: float = Field(..., ge=0, description="|y(T)|")
    memory_norm: float = Field(..., ge=0, description="记忆泛函范数")
    cost: float = Field(..., ge=0, description="控制代价")
    iterations: int = Field(..., ge=0, description="CG 迭代次数")
    epsilon: float = Field(..., gt=0, description="正则化参数")
    cg_tol: float = Field(..., gt=0, description="CG 相对残差容差")
    converged: bool = Field(..., description="是否收敛")
    residual_history: list[float] = Field(default_factory=list, description="CG 残差历史")

    @model_validator(mode="after")
    def validate_convergence(self) -> "SynthesisResult":
        """converged 意味着最后一次残差不超过容差"""
        if self.converged and self.residual_history and self.residual_history[-1] > self.cg_tol:
            raise ValueError("converged result must end below cg_tol")
        return self

    def residuals_below(self, bound: float) -> bool:
        return self.terminal_state_norm <= bound and self.memory_norm <= bound


class SimulationSummary(BaseModel):
    """正向求解摘要"""

    T: float = Field(..., description="时间区间长度")
    steps: int = Field(..., description="步数")
    terminal_value: list[float] = Field(..., description="y(T)")
    terminal_state_norm: float = Field(..., description="|y(T)|")
    memory_functional: list[float] = Field(..., description="∫M̃(T-s)y(s)ds")
    memory_norm: float = Field(..., description="记忆泛函范数")

    @classmethod
    def from_solution(cls, y: Trajectory, memory: np.ndarray) -> "SimulationSummary":
        return cls(
            T=y.grid.T,
            steps=y.grid.steps,
            terminal_value=y.final.tolist(),
            terminal_state_norm=y.norm_at_end(),
            memory_functional=np.asarray(memory).tolist(),
            memory_norm=float(np.linalg.norm(memory)),
        )


class AdjointSummary(BaseModel):
    """伴随求解摘要"""

    T: float = Field(..., description="时间区间长度")
    steps: int = Field(..., description="步数")
    initial_value: list[float] = Field(..., description="w(0)")
    initial_norm: float = Field(..., description="|w(0)|")


class CoverageReport(BaseModel):
    """
    移动窗口覆盖检查

    Attributes:
        covered: 窗口扫过的区域是否覆盖 [0, L]
        swept: 扫过的区间 [min(c0,c1)-r, max(c0,c1)+r]
        uncovered: 未覆盖的子区间
    """

    covered: bool = Field(..., description="是否覆盖")
    swept: tuple[float, float] = Field(..., description="扫过的区间")
    uncovered: list[tuple[float, float]] = Field(default_factory=list, description="未覆盖子区间")

    @model_validator(mode="after")
    def validate_uncovered(self) -> "CoverageReport":
        if self.covered != (not self.uncovered):
            raise ValueError("covered must be true exactly when nothing is uncovered")
        return self


class WindowComparison(BaseModel):
    """移动窗口与固定窗口的合成残差对比（仅作信息展示）"""

    moving_terminal_norm: float
    moving_memory_norm: float
    fixed_terminal_norm: float
    fixed_memory_norm: float
    fixed_center: float = Field(..., description="固定窗口中心")

    @computed_field
    @property
    def residual_ratio(self) -> float:
        moving = max(self.moving_terminal_norm, self.moving_memory_norm)
        fixed = max(self.fixed_terminal_norm, self.fixed_memory_norm)
        if moving == 0.0:
            return float("inf")
        return fixed / moving


class ParabolicSummary(BaseModel):
    """半离散热方程系统摘要"""

    L: float
    N: int
    h: float
    T: float
    steps: int
    variant: Literal["state-memory", "laplacian-memory"]
    smallest_eigenvalue: float = Field(..., description="离散 Laplace 算子模最小的特征值")
    initial_norm: float = Field(..., description="|y0|")
    coverage: CoverageReport


class InertiaCase(BaseModel):
    """一种合成策略在 T 时刻及延长到 T+δ 后的残差"""

    terminal_state_norm: float
    memory_norm: float
    extended_state_norm: float = Field(..., description="|y(T+δ)|，T 之后 u = 0")


class InertiaReport(BaseModel):
    """
    记忆惯性演示

    state_only 只针对 y(T) = 0 合成（M̃ 取零），memory_type 同时要求记忆泛函为零。
    """

    extra_time: float = Field(..., gt=0, description="延长时间 δ")
    state_only: InertiaCase
    memory_type: InertiaCase


__all__ = [
    "Verdict",
    "ConditionName",
    "KernelTermLiteral",
    "RankReport",
    "SynthesisResult",
    "SimulationSummary",
    "AdjointSummary",
    "CoverageReport",
    "WindowComparison",
    "ParabolicSummary",
    "InertiaCase",
    "InertiaReport",
]
