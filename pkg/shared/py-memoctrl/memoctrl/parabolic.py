"""
memoctrl 记忆型零能控性工具库 - 带记忆的一维热方程

在 Ω = (0, L) 上对
    y_t - y_xx - ∫_0^t m(t-s) y(s) ds = u χ_{ω(t)}          (state-memory)
    y_t - y_xx - ∫_0^t m(t-s) y_xx(s) ds = u χ_{ω(t)}       (laplacian-memory)
做二阶中心差分半离散（Dirichlet 边界消去），得到可直接交给
volterra / hum 的 MemorySystem。控制区域 ω(t) 以常速从 c0 扫到 c1。

固定窗口 (c0 = c1) 同样允许，用于对比固定控制区域下残差停滞的现象。
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import sparse

from .errors import ConfigurationError, DimensionMismatchError
from .hum import synthesize
from .kernels import ExpPolyKernel
from .logger import get_logger
from .models import CoverageReport, WindowComparison
from .trajectory import TimeGrid
from .volterra import MemorySystem

Variant = Literal["state-memory", "laplacian-memory"]


@dataclass(frozen=True)
class Mesh1D:
    """
    均匀一维网格，内部节点 x_i = i·h，h = L/(N+1)

    Attributes:
        length: 区间长度 L
        interior_nodes: 内部节点数 N (≥ 3)
    """

    length: float
    interior_nodes: int

    def __post_init__(self) -> None:
        if not self.length > 0:
            raise ConfigurationError(f"domain length must be positive, got {self.length}")
        if self.interior_nodes < 3:
            raise ConfigurationError(f"mesh needs at least 3 interior nodes, got {self.interior_nodes}")

    @property
    def h(self) -> float:
        return self.length / (self.interior_nodes + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.interior_nodes + 1)


@dataclass(frozen=True)
class MovingWindow:
    """
    以常速平移的控制区域 ω(t) = (c(t)-r, c(t)+r) ∩ Ω，c(t) = c0 + (c1-c0)·t/T

    Attributes:
        center_start: c0
        center_end: c1
        half_width: r (> 0)
    """

    center_start: float
    center_end: float
    half_width: float

    def __post_init__(self) -> None:
        if not self.half_width > 0:
            raise ConfigurationError(f"window half width must be positive, got {self.half_width}")

    def center(self, t: float, T: float) -> float:
        return self.center_start + (self.center_end - self.center_start) * t / T

    def mask(self, t: float, T: float, mesh: Mesh1D) -> np.ndarray:
        """节点上的 0/1 指示函数 χ_{ω(t)}(x_i)"""
        return (np.abs(mesh.nodes - self.center(t, T)) < self.half_width).astype(float)

    def fixed(self, center: Optional[float] = None) -> "MovingWindow":
        """同宽度的固定窗口，默认取扫掠中点"""
        c = 0.5 * (self.center_start + self.center_end) if center is None else center
        return MovingWindow(c, c, self.half_width)


def discretize_laplacian(mesh: Mesh1D) -> np.ndarray:
    """
    三对角差分矩阵，对角 -2/h²，次对角 1/h²

    Example:
        >>> discretize_laplacian(Mesh1D(1.0, 3))
        array([[-32.,  16.,   0.],
               [ 16., -32.,  16.],
               [  0.,  16., -32.]])
    """
    n = mesh.interior_nodes
    inv_h2 = 1.0 / (mesh.h * mesh.h)
    stencil = sparse.diags(
        [np.full(n - 1, inv_h2), np.full(n, -2.0 * inv_h2), np.full(n - 1, inv_h2)],
        offsets=[-1, 0, 1],
    )
    return stencil.toarray()


def smallest_eigenvalue(mesh: Mesh1D) -> float:
    """模最小的差分特征值 -(4/h²) sin²(πh/(2L))"""
    h = mesh.h
    return float(-(4.0 / (h * h)) * np.sin(np.pi * h / (2.0 * mesh.length)) ** 2)


def _active_intervals(win: MovingWindow, mesh: Mesh1D, T: float) -> list[tuple[float, float]]:
    """窗口中心的运动范围内，至少含一个节点的中心位置区间"""
    lo = min(win.center_start, win.center_end)
    hi = max(win.center_start, win.center_end)
    r = win.half_width
    holes = []
    cursor = lo
    for x in mesh.nodes:
        left, right = x - r, x + r
        if right <= cursor:
            continue
        if left >= cursor:
            holes.append((cursor, min(left, hi)))
        cursor = max(cursor, right)
        if cursor > hi:
            break
    if cursor <= hi:
        holes.append((cursor, hi))
    return [(a, b) for a, b in holes if a <= b]


def moving_support_injector(win: MovingWindow, mesh: Mesh1D, T: float):
    """
    B(t) = diag(χ_{ω(t)}(x_i))，控制维数 m = N

    Raises:
        ConfigurationError: 某一时刻窗口内没有任何网格节点
    """
    if not T > 0:
        raise ConfigurationError(f"horizon must be positive, got {T}")
    holes = _active_intervals(win, mesh, T)
    if holes:
        a, b = holes[0]
        raise ConfigurationError(
            f"moving window contains no mesh node while its center is in [{a:.6g}, {b:.6g}]"
        )

    def injector(t: float) -> np.ndarray:
        return np.diag(win.mask(t, T, mesh))

    return injector


def coverage_check(win: MovingWindow, mesh: Mesh1D, T: float) -> CoverageReport:
    """
    扫掠区间 [min(c0,c1)-r, max(c0,c1)+r] 是否覆盖 [0, L]

    Example:
        >>> coverage_check(MovingWindow(0.1, 0.9, 0.05), Mesh1D(1.0, 40), 1.0).uncovered
        [(0.0, 0.05), (0.95, 1.0)]
    """
    r = win.half_width
    low = min(win.center_start, win.center_end) - r
    high = max(win.center_start, win.center_end) + r
    L = mesh.length
    uncovered: list[tuple[float, float]] = []
    if low > 0.0:
        uncovered.append((0.0, min(low, L)))
    if high < L:
        uncovered.append((max(high, 0.0), L))
    return CoverageReport(covered=not uncovered, swept=(low, high), uncovered=uncovered)


def sine_profile(mesh: Mesh1D, mode: int = 1) -> np.ndarray:
    """y0(x_i) = sin(mode·π·x_i / L)"""
    return np.sin(mode * np.pi * mesh.nodes / mesh.length)


def assemble_system(
    mesh: Mesh1D,
    win: MovingWindow,
    kernel: ExpPolyKernel,
    variant: Variant,
    T: float,
    kernel_tilde: Optional[ExpPolyKernel] = None,
) -> MemorySystem:
    """
    组装半离散系统

    A 为差分 Laplace 算子；state-memory 时 M = m(·)·I，laplacian-memory 时
    M = m(·)·A；M̃ = m̃(·)·I，m̃ 缺省时取 m；B(t) 为移动窗口指示矩阵。
    覆盖检查不通过时只记录警告。

    Args:
        mesh: 空间网格
        win: 控制窗口
        kernel: 标量核 m
        variant: "state-memory" 或 "laplacian-memory"
        T: 时间区间长度
        kernel_tilde: 标量核 m̃

    Raises:
        DimensionMismatchError: 核函数不是标量核
        ConfigurationError: variant 非法或窗口在某时刻为空
    """
    kernel_tilde = kernel if kernel_tilde is None else kernel_tilde
    for name, k in (("kernel", kernel), ("kernel_tilde", kernel_tilde)):
        if k.dim != 1:
            raise DimensionMismatchError(f"{name} must be a scalar kernel, got dimension {k.dim}")

    n = mesh.interior_nodes
    laplacian = discretize_laplacian(mesh)
    if variant == "state-memory":
        M = kernel.expand_scalar(n)
    elif variant == "laplacian-memory":
        M = kernel.expand_scalar(n).right_multiply(laplacian)
    else:
        raise ConfigurationError(f"unknown variant {variant!r}")

    coverage = coverage_check(win, mesh, T)
    if not coverage.covered:
        get_logger().warning(
            f"control window sweep {coverage.swept} does not cover [0, {mesh.length}]; "
            f"uncovered {coverage.uncovered}"
        )
    injector = moving_support_injector(win, mesh, T)
    return MemorySystem(laplacian, M, kernel_tilde.expand_scalar(n), injector, T)


def fixed_window_comparison(
    mesh: Mesh1D,
    win: MovingWindow,
    kernel: ExpPolyKernel,
    variant: Variant,
    T: float,
    y0: np.ndarray,
    grid: TimeGrid,
    epsilon: float,
    cg_tol: float,
    cg_max: Optional[int] = None,
    kernel_tilde: Optional[ExpPolyKernel] = None,
) -> WindowComparison:
    """
    移动窗口与中点固定窗口在相同预算下的合成残差对比

    固定窗口下残差停滞是预期现象，结果只作展示。
    """
    fixed = win.fixed()
    results = []
    for window in (win, fixed):
        sys = assemble_system(mesh, window, kernel, variant, T, kernel_tilde)
        results.append(synthesize(sys, y0, grid, epsilon, cg_tol, cg_max))
    moving, still = results
    comparison = WindowComparison(
        moving_terminal_norm=moving.terminal_state_norm,
        moving_memory_norm=moving.memory_norm,
        fixed_terminal_norm=still.terminal_state_norm,
        fixed_memory_norm=still.memory_norm,
        fixed_center=fixed.center_start,
    )
    get_logger().info(f"fixed/moving residual ratio {comparison.residual_ratio:.3g}")
    return comparison


__all__ = [
    "Variant",
    "Mesh1D",
    "MovingWindow",
    "discretize_laplacian",
    "smallest_eigenvalue",
    "moving_support_injector",
    "coverage_check",
    "sine_profile",
    "assemble_system",
    "fixed_window_comparison",
]
