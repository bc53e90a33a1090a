"""
memoctrl 记忆型零能控性工具库 - 时间网格与轨迹

- TimeGrid: [0, T] 上的均匀网格，节点 t_k = kΔt
- Trajectory: 网格上的向量值时间序列，网格随数据一起保存

轨迹 CSV 格式: 表头 `t,v0,...,v{d-1}`，每个节点一行，17 位有效数字，
写出后再读入可逐位还原。
"""

from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, GridError

# 判断时刻落在节点上、网格是否均匀时使用的相对容差
NODE_RTOL = 1e-9


class TimeGrid:
    """
    均匀时间网格

    Attributes:
        T: 时间区间长度
        steps: 步数 N_t (≥ 2)

    Example:
        >>> grid = TimeGrid(1.0, 1000)
        >>> grid.dt
        0.001
    """

    def __init__(self, T: float, steps: int) -> None:
        if not np.isfinite(T) or T <= 0:
            raise GridError(f"grid horizon must be positive and finite, got {T}")
        if int(steps) != steps or steps < 2:
            raise GridError(f"grid needs at least 2 steps, got {steps}")
        self.T = float(T)
        self.steps = int(steps)

    @classmethod
    def from_nodes(cls, nodes: np.ndarray) -> "TimeGrid":
        """
        由节点序列还原网格

        Raises:
            GridError: 节点不从 0 开始、少于 3 个或间距不均匀
        """
        nodes = np.asarray(nodes, dtype=float).reshape(-1)
        if nodes.shape[0] < 3:
            raise GridError(f"a grid needs at least 3 nodes, got {nodes.shape[0]}")
        grid = cls(nodes[-1] - nodes[0], nodes.shape[0] - 1)
        if abs(nodes[0]) > NODE_RTOL * grid.dt:
            raise GridError(f"grid must start at t=0, got {nodes[0]}")
        if np.max(np.abs(nodes - grid.nodes)) > NODE_RTOL * grid.T:
            raise GridError("non-uniform time grids are not supported")
        return grid

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.arange(self.steps + 1) * self.dt
        nodes[-1] = self.T
        nodes.setflags(write=False)
        return nodes

    @cached_property
    def weights(self) -> np.ndarray:
        """复合梯形公式权重 ω_k"""
        weights = np.full(self.steps + 1, self.dt)
        weights[0] = weights[-1] = 0.5 * self.dt
        weights.setflags(write=False)
        return weights

    def index_of(self, t: float) -> int:
        """
        时刻 t 对应的节点编号

        Raises:
            GridError: t 不在网格节点上
        """
        k = int(round(t / self.dt))
        if k < 0 or k > self.steps or abs(k * self.dt - t) > NODE_RTOL * self.dt:
            raise GridError(f"t={t} is not a node of a grid with dt={self.dt}")
        return k

    def extended(self, extra_steps: int) -> "TimeGrid":
        """在末端追加 extra_steps 个同步长节点"""
        return TimeGrid(self.T + extra_steps * self.dt, self.steps + extra_steps)

    def check_horizon(self, T: float) -> None:
        if abs(self.T - T) > NODE_RTOL * max(T, self.T):
            raise GridError(f"grid horizon {self.T} does not match system horizon {T}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.steps == other.steps and self.T == other.T

    def __hash__(self) -> int:
        return hash((self.T, self.steps))

    def __repr__(self) -> str:
        return f"TimeGrid(T={self.T!r}, steps={self.steps})"


class Trajectory:
    """
    网格上的向量值时间序列

    values 的第 k 行是节点 t_k 上的取值，构造后只读。

    Attributes:
        grid: 所在网格
        values: 形状 (N_t+1, d) 的只读数组
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: TimeGrid, values: np.ndarray) -> None:
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != grid.steps + 1:
            raise DimensionMismatchError(
                f"trajectory needs {grid.steps + 1} rows, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("trajectory values must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int) -> "Trajectory":
        return cls(grid, np.zeros((grid.steps + 1, dim)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def at(self, t: float) -> np.ndarray:
        return self.values[self.grid.index_of(t)]

    def norm_at_end(self) -> float:
        return float(np.linalg.norm(self.values[-1]))

    def l2_norm_squared(self) -> float:
        """梯形公式近似 ∫|v(t)|² dt"""
        return float(self.grid.weights @ np.einsum("ki,ki->k", self.values, self.values))

    def sup_distance(self, other: "Trajectory") -> float:
        """两条同网格轨迹的逐点最大偏差"""
        if other.grid != self.grid or other.dim != self.dim:
            raise GridError("trajectories live on different grids or dimensions")
        return float(np.max(np.abs(self.values - other.values)))

    def padded(self, extra_steps: int) -> "Trajectory":
        """在延长网格上补零"""
        grid = self.grid.extended(extra_steps)
        return Trajectory(grid, np.vstack([self.values, np.zeros((extra_steps, self.dim))]))

    def to_csv(self, path: Union[str, Path]) -> None:
        header = ",".join(["t", *(f"v{i}" for i in range(self.dim))])
        np.savetxt(
            path,
            np.column_stack([self.grid.nodes, self.values]),
            delimiter=",",
            fmt="%.17g",
            header=header,
            comments="",
        )

    @classmethod
    def from_csv(cls, path: Union[str, Path], dim: Optional[int] = None) -> "Trajectory":
        """
        读入轨迹 CSV

        Args:
            path: 文件路径
            dim: 期望的向量维数，给出时做一致性检查

        Raises:
            ConfigurationError: 表头格式错误或数据行无法解析
            GridError: 时间列不构成均匀网格
            DimensionMismatchError: 维数与 dim 不符
        """
        with open(path, encoding="utf-8") as fp:
            header = fp.readline().strip().split(",")
        if not header or header[0] != "t" or header[1:] != [f"v{i}" for i in range(len(header) - 1)]:
            raise ConfigurationError(f"{path}: expected header 't,v0,...', got {','.join(header)}")
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as e:
            raise ConfigurationError(f"{path}: malformed rows: {e}") from e
        if data.shape[1] != len(header):
            raise ConfigurationError(f"{path}: rows do not match the header width")
        if dim is not None and data.shape[1] - 1 != dim:
            raise DimensionMismatchError(
                f"{path}: trajectory has dimension {data.shape[1] - 1}, expected {dim}"
            )
        return cls(TimeGrid.from_nodes(data[:, 0]), data[:, 1:])

    def __repr__(self) -> str:
        return f"Trajectory(grid={self.grid!r}, dim={self.dim})"


__all__ = [
    "NODE_RTOL",
    "TimeGrid",
    "Trajectory",
]
