"""
memoctrl-cli 命令行前端 - 配置

- AppSettings: 进程级设置，来自 MEMOCTRL_* 环境变量与 .env
- RunConfig: 一次运行的 JSON 配置，按 command 字段区分的联合类型
"""

import math
from functools import lru_cache
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, TypeAdapter, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from memoctrl import (
    ExpPolyKernel,
    KernelTermLiteral,
    MemorySystem,
    Mesh1D,
    MovingWindow,
    TimeGrid,
)

KernelLiteral = list[KernelTermLiteral]
LogLevel = Literal["error", "info", "debug"]


class AppSettings(BaseSettings):
    APP_NAME: str = "memoctrl"
    LOG: LogLevel = "info"
    RANK_TOL: float = Field(default=1e-12, gt=0)
    CG_TOL: float = Field(default=1e-10, gt=0)
    model_config = SettingsConfigDict(env_prefix="MEMOCTRL_", env_file=".env", extra="ignore")


@lru_cache
def get_app_settings() -> AppSettings:
    return AppSettings()


def _parse_kernel(literal: KernelLiteral, dim: int) -> ExpPolyKernel:
    return ExpPolyKernel.from_literal([term.model_dump() for term in literal], dim=dim)


class GridBlock(BaseModel):
    """时间网格 {T, steps}"""

    T: float = Field(..., gt=0, description="时间区间长度")
    steps: int = Field(..., ge=2, description="时间步数")

    def to_grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.steps)


class SystemBlock(BaseModel):
    """
    记忆系统 (A, M, M̃, B)

    矩阵按行给出；M 与 M_tilde 是核函数字面量，缺省为零核。
    """

    A: list[list[float]] = Field(..., description="n×n 矩阵 A")
    M: KernelLiteral = Field(default_factory=list, description="动力学记忆核")
    M_tilde: KernelLiteral = Field(default_factory=list, description="目标记忆核 M̃")
    B: list[list[float]] = Field(..., description="n×m 控制矩阵")

    @property
    def n(self) -> int:
        return len(self.A)

    @model_validator(mode="after")
    def validate_dimensions(self) -> "SystemBlock":
        """A 为方阵，B 行数为 n 且各行等长，核函数阶数为 n"""
        n = self.n
        if n == 0 or any(len(row) != n for row in self.A):
            raise ValueError("A must be a non-empty square matrix")
        if len(self.B) != n:
            raise ValueError(f"B must have {n} rows, got {len(self.B)}")
        m = len(self.B[0])
        if m == 0 or any(len(row) != m for row in self.B):
            raise ValueError("B rows must be non-empty and of equal length")
        # DimensionMismatchError 与 ConfigurationError 都是 ValueError
        _parse_kernel(self.M, n)
        _parse_kernel(self.M_tilde, n)
        return self

    def to_system(self, T: float) -> MemorySystem:
        return MemorySystem(
            np.asarray(self.A, dtype=float),
            _parse_kernel(self.M, self.n),
            _parse_kernel(self.M_tilde, self.n),
            np.asarray(self.B, dtype=float),
            T,
        )


def _check_vector(name: str, values: list[float], n: int) -> None:
    if len(values) != n:
        raise ValueError(f"{name} must have length {n}, got {len(values)}")


class SimulateConfig(BaseModel):
    """u ≡ 0 的正向求解"""

    command: Literal["simulate"]
    system: SystemBlock
    grid: GridBlock
    y0: list[float] = Field(..., description="初值")

    @model_validator(mode="after")
    def validate_initial_value(self) -> "SimulateConfig":
        _check_vector("y0", self.y0, self.system.n)
        return self


class AdjointConfig(BaseModel):
    """伴随方程求解"""

    command: Literal["adjoint"]
    system: SystemBlock
    grid: GridBlock
    w_T: list[float] = Field(..., description="终端数据 w_T")
    z_T: list[float] = Field(..., description="终端数据 z_T")
    discrete: bool = Field(default=False, description="使用正向格式的精确离散伴随")

    @model_validator(mode="after")
    def validate_terminal_data(self) -> "AdjointConfig":
        _check_vector("w_T", self.w_T, self.system.n)
        _check_vector("z_T", self.z_T, self.system.n)
        return self


class CheckRankConfig(BaseModel):
    """秩判据；判据与时间区间无关，T 只用于构造系统"""

    command: Literal["check-rank"]
    system: SystemBlock
    condition: Literal["i", "ii", "iii", "augmented", "all"] = "all"
    T: float = Field(default=1.0, gt=0)
    tol: Optional[float] = Field(default=None, gt=0, description="数值秩相对容差，缺省取 MEMOCTRL_RANK_TOL")
    max_blocks: Optional[int] = Field(default=None, ge=1, description="条件 i / ii 的列块数上限")


class SynthesizeConfig(BaseModel):
    """
    HUM 控制合成

    给出 control_csv 时不做合成，而是读入存储的控制重放正向求解。
    """

    command: Literal["synthesize"]
    system: SystemBlock
    grid: GridBlock
    y0: list[float]
    epsilon: float = Field(default=1e-8, gt=0, description="正则化参数")
    cg_tol: Optional[float] = Field(default=None, gt=0, description="CG 容差，缺省取 MEMOCTRL_CG_TOL")
    cg_max: Optional[int] = Field(default=None, ge=1, description="CG 迭代上限")
    control_csv: Optional[str] = Field(default=None, description="重放的控制轨迹 CSV")
    inertia_extra_steps: Optional[int] = Field(default=None, ge=1, description="记忆惯性演示的延长步数")
    observability_samples: Optional[int] = Field(default=None, ge=1, description="可观测常数下界的采样数")

    @model_validator(mode="after")
    def validate_initial_value(self) -> "SynthesizeConfig":
        _check_vector("y0", self.y0, self.system.n)
        if self.control_csv is not None and (
            self.inertia_extra_steps is not None or self.observability_samples is not None
        ):
            raise ValueError("control_csv replay cannot be combined with inertia or observability runs")
        return self


class WindowBlock(BaseModel):
    c0: float = Field(..., description="起始中心")
    c1: float = Field(..., description="终止中心")
    r: float = Field(..., gt=0, description="半宽")


class ParabolicBlock(BaseModel):
    """带记忆热方程 {L, N, T, window, kernel, kernel_tilde, variant}"""

    L: float = Field(default=1.0, gt=0)
    N: int = Field(..., ge=3, description="内部节点数")
    T: float = Field(..., gt=0)
    window: WindowBlock
    kernel: KernelLiteral = Field(default_factory=list, description="标量核 m")
    kernel_tilde: Optional[KernelLiteral] = Field(default=None, description="标量核 m̃，缺省取 m")
    variant: Literal["state-memory", "laplacian-memory"] = "state-memory"

    @model_validator(mode="after")
    def validate_scalar_kernels(self) -> "ParabolicBlock":
        _parse_kernel(self.kernel, 1)
        if self.kernel_tilde is not None:
            _parse_kernel(self.kernel_tilde, 1)
        return self

    def mesh(self) -> Mesh1D:
        return Mesh1D(self.L, self.N)

    def moving_window(self) -> MovingWindow:
        return MovingWindow(self.window.c0, self.window.c1, self.window.r)

    def kernels(self) -> tuple[ExpPolyKernel, Optional[ExpPolyKernel]]:
        tilde = None if self.kernel_tilde is None else _parse_kernel(self.kernel_tilde, 1)
        return _parse_kernel(self.kernel, 1), tilde


class ParabolicConfig(BaseModel):
    """移动窗口热方程控制；y0 缺省为 sin(mode·πx/L)"""

    command: Literal["parabolic"]
    parabolic: ParabolicBlock
    grid: GridBlock
    y0: Optional[list[float]] = None
    mode: int = Field(default=1, ge=1)
    epsilon: float = Field(default=1e-6, gt=0)
    cg_tol: Optional[float] = Field(default=None, gt=0)
    cg_max: int = Field(default=500, ge=1, description="CG 迭代上限")
    compare_fixed: bool = Field(default=False, description="同时报告中点固定窗口的结果")

    @model_validator(mode="after")
    def validate_consistency(self) -> "ParabolicConfig":
        if not math.isclose(self.grid.T, self.parabolic.T, rel_tol=1e-12):
            raise ValueError(f"grid.T = {self.grid.T} differs from parabolic.T = {self.parabolic.T}")
        if self.y0 is not None:
            _check_vector("y0", self.y0, self.parabolic.N)
        return self


RunConfig = Annotated[
    Union[SimulateConfig, AdjointConfig, CheckRankConfig, SynthesizeConfig, ParabolicConfig],
    Field(discriminator="command"),
]
run_config_adapter = TypeAdapter(RunConfig)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    读入并校验 JSON 运行配置

    Raises:
        OSError: 文件不可读
        pydantic.ValidationError: JSON 格式或字段校验失败
    """
    return run_config_adapter.validate_json(Path(path).read_text(encoding="utf-8"))


def run_config_schema() -> dict:
    return run_config_adapter.json_schema()


__all__ = [
    "AppSettings",
    "get_app_settings",
    "LogLevel",
    "KernelLiteral",
    "GridBlock",
    "SystemBlock",
    "SimulateConfig",
    "AdjointConfig",
    "CheckRankConfig",
    "SynthesizeConfig",
    "WindowBlock",
    "ParabolicBlock",
    "ParabolicConfig",
    "RunConfig",
    "run_config_adapter",
    "load_run_config",
    "run_config_schema",
]
