"""
memoctrl 记忆型零能控性工具库 - Volterra 时间推进

记忆系统
    y_t = A y + ∫_0^t M(t-s) y(s) ds + B(t) u,   y(0) = y0
的正向求解、伴随方程
    w_t = -Aᵀw - ∫_t^T M(s-t)ᵀ w(s) ds + M̃(T-t)ᵀ z_T,   w(T) = w_T
的求解，以及记忆泛函 ∫_0^T M̃(T-s) y(s) ds 的求积。

离散格式:
- 局部项用隐式梯形（Crank–Nicolson 型）: y_{k+1} - y_k = Δt/2 (f_k + f_{k+1})
- 卷积项在已存储的历史上用复合梯形公式，新时刻的权重 (Δt/2)·M(0)
  并入单步线性方程组，系数矩阵 I - (Δt/2)A - (Δt²/4)M(0) 每个网格只分解一次
- 指数多项式核按 e^{at}t^k·C 分解后逐个标量基函数累加卷积，
  与逐个矩阵求和的结果在舍入误差内相同

dual_march 是正向格式的精确转置（离散伴随），HUM 合成依赖它使
离散 Gramian 在舍入误差内对称。
"""

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Union

import numpy as np
from scipy import linalg

from .errors import (
    DimensionMismatchError,
    DivergenceError,
    GridError,
    KernelStructureError,
    SingularStepError,
)
from .kernels import ExpPolyKernel
from .logger import get_logger, timed
from .trajectory import TimeGrid, Trajectory

KernelLike = Union[ExpPolyKernel, Callable[[float], np.ndarray]]
Injector = Union[np.ndarray, Callable[[float], np.ndarray]]


def kernel_samples(kernel: KernelLike, times: np.ndarray) -> np.ndarray:
    """在一组时刻上对任意可求值核函数采样，返回形状 (len(times), n, n)"""
    if isinstance(kernel, ExpPolyKernel):
        return kernel.samples(times)
    return np.array([np.atleast_2d(np.asarray(kernel(float(t)), dtype=float)) for t in times])


@dataclass(frozen=True, eq=False)
class MemorySystem:
    """
    记忆系统 (A, M, M̃, B, T)

    M 与 M̃ 通常是 ExpPolyKernel；求解器也接受任意 t ↦ n×n 矩阵的可调用对象，
    但秩判据和增广系统只支持指数多项式核。B 可以是常数 n×m 矩阵，
    也可以是 t ↦ n×m 矩阵的回调（移动控制区域）。

    Attributes:
        A: n×n 矩阵
        M: 动力学中的记忆核
        M_tilde: 目标条件中的记忆核 M̃
        B: 控制算子
        T: 时间区间长度
    """

    A: np.ndarray
    M: KernelLike
    M_tilde: KernelLike
    B: Injector
    T: float
    m: int = field(init=False)

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"A must be square, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "A", a)
        n = a.shape[0]

        if not np.isfinite(self.T) or self.T <= 0:
            raise GridError(f"horizon T must be positive, got {self.T}")

        for name in ("M", "M_tilde"):
            kernel = getattr(self, name)
            if isinstance(kernel, ExpPolyKernel):
                if kernel.dim != n:
                    raise DimensionMismatchError(f"{name} is {kernel.dim}x{kernel.dim}, A is {n}x{n}")
            elif callable(kernel):
                sample = np.atleast_2d(np.asarray(kernel(0.0), dtype=float))
                if sample.shape != (n, n):
                    raise DimensionMismatchError(f"{name}(0) has shape {sample.shape}, expected {(n, n)}")
            else:
                raise KernelStructureError(f"{name} must be an ExpPolyKernel or a callable")

        if callable(self.B):
            sample = np.asarray(self.B(0.0), dtype=float)
        else:
            sample = np.asarray(self.B, dtype=float)
            if sample.ndim == 1:
                sample = sample[:, None]
            sample.setflags(write=False)
            object.__setattr__(self, "B", sample)
        if sample.ndim != 2 or sample.shape[0] != n:
            raise DimensionMismatchError(f"B must have {n} rows, got shape {sample.shape}")
        object.__setattr__(self, "m", sample.shape[1])

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def has_constant_injector(self) -> bool:
        return not callable(self.B)

    @property
    def has_exp_poly_kernels(self) -> bool:
        return isinstance(self.M, ExpPolyKernel) and isinstance(self.M_tilde, ExpPolyKernel)

    def injector_at(self, t: float) -> np.ndarray:
        if not callable(self.B):
            return self.B
        value = np.asarray(self.B(t), dtype=float)
        if value.shape != (self.n, self.m):
            raise DimensionMismatchError(
                f"B({t}) has shape {value.shape}, expected {(self.n, self.m)}"
            )
        return value

    def injector_samples(self, grid: TimeGrid) -> np.ndarray:
        """B 在网格节点上的采样，形状 (N_t+1, n, m)"""
        if not callable(self.B):
            return np.broadcast_to(self.B, (grid.steps + 1, self.n, self.m))
        return np.array([self.injector_at(t) for t in grid.nodes])

    def with_memory_kernel(self, M_tilde: KernelLike) -> "MemorySystem":
        return replace(self, M_tilde=M_tilde)

    def with_horizon(self, T: float) -> "MemorySystem":
        return replace(self, T=T)


@dataclass(frozen=True, eq=False)
class DiscreteAdjoint:
    """
    离散伴随的结果

    Attributes:
        w: 节点上的伴随状态
        initial: 离散余状态 ŵ_0，满足
            (w_T, y_N) - (z_T, Z_N) = (ŵ_0, y_0) + Σ_k ω_k (B_kᵀ w_k, u_k)
    """

    w: Trajectory
    initial: np.ndarray


class _HistoryConvolution:
    """按节点历史做卷积求和 Σ K(t_l) v_j，K 可选转置"""

    def __init__(self, kernel: KernelLike, grid: TimeGrid, transpose: bool = False) -> None:
        times = grid.nodes
        self._factors: list[tuple[np.ndarray, np.ndarray]] = []
        self._samples: Optional[np.ndarray] = None
        if isinstance(kernel, ExpPolyKernel):
            k = kernel.transpose() if transpose else kernel
            self._factors = k.basis_samples(times)
            self.at_zero = k.eval(0.0)
        else:
            samples = kernel_samples(kernel, times)
            if transpose:
                samples = np.swapaxes(samples, 1, 2)
            self._samples = samples
            self.at_zero = samples[0]

    def single(self, lag: int, v: np.ndarray) -> np.ndarray:
        """K(t_lag) v"""
        if self._samples is not None:
            return self._samples[lag] @ v
        out = np.zeros_like(v)
        for phi, coeff in self._factors:
            out += phi[lag] * (coeff @ v)
        return out

    def lagged(self, history: np.ndarray, m: int) -> np.ndarray:
        """Σ_{j=1}^{m-1} K(t_{m-j}) v_j"""
        if m <= 1:
            return np.zeros(history.shape[1])
        if self._samples is not None:
            return np.einsum("jab,jb->a", self._samples[m - 1 : 0 : -1], history[1:m])
        out = np.zeros(history.shape[1])
        for phi, coeff in self._factors:
            out += coeff @ (phi[m - 1 : 0 : -1] @ history[1:m])
        return out

    def trailing(self, history: np.ndarray, j: int, last: int) -> np.ndarray:
        """Σ_{m=j+1}^{last} K(t_{m-j}) v_m"""
        if last <= j:
            return np.zeros(history.shape[1])
        count = last - j
        if self._samples is not None:
            return np.einsum("lab,lb->a", self._samples[1 : count + 1], history[j + 1 : last + 1])
        out = np.zeros(history.shape[1])
        for phi, coeff in self._factors:
            out += coeff @ (phi[1 : count + 1] @ history[j + 1 : last + 1])
        return out


def _factorize(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if not np.all(np.isfinite(matrix)):
        raise DivergenceError("step matrix has non-finite entries", step=1)
    lu, piv = linalg.lu_factor(matrix, check_finite=False)
    pivots = np.abs(np.diag(lu))
    scale = max(float(np.max(np.abs(matrix))), 1.0)
    if np.min(pivots) <= matrix.shape[0] * np.finfo(float).eps * scale:
        raise SingularStepError(
            "per-step matrix I - dt/2 A - dt^2/4 M(0) is singular", step=1
        )
    return lu, piv


def _march(
    A: np.ndarray,
    conv: _HistoryConvolution,
    source: np.ndarray,
    y0: np.ndarray,
    grid: TimeGrid,
    left_source: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    梯形格式推进 y_t = A y + ∫K y + g，source 为 g 的节点采样

    left_source 给出时作为每一步左端点的 g，用于 g 在某个节点间断的情形
    """
    if left_source is None:
        left_source = source
    n = y0.shape[0]
    dt = grid.dt
    factor = _factorize(np.eye(n) - 0.5 * dt * A - 0.25 * dt * dt * conv.at_zero)

    values = np.zeros((grid.steps + 1, n))
    values[0] = y0
    rate = A @ y0 + left_source[0]
    for m in range(1, grid.steps + 1):
        memory = dt * (0.5 * conv.single(m, values[0]) + conv.lagged(values, m))
        rhs = values[m - 1] + 0.5 * dt * (rate + memory + source[m])
        y = linalg.lu_solve(factor, rhs, check_finite=False)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"solution became non-finite at step {m}", step=m)
        values[m] = y
        rate = A @ y + memory + 0.5 * dt * (conv.at_zero @ y) + left_source[m]
    return values


def _check_grid(sys: MemorySystem, grid: TimeGrid) -> None:
    grid.check_horizon(sys.T)


def _as_vector(v: Any, n: int, name: str) -> np.ndarray:
    vec = np.asarray(v, dtype=float).reshape(-1)
    if vec.shape[0] != n:
        raise DimensionMismatchError(f"{name} must have length {n}, got {vec.shape[0]}")
    return vec


def control_source(sys: MemorySystem, u: Optional[Trajectory], grid: TimeGrid) -> np.ndarray:
    """节点上的 B(t_k) u_k，形状 (N_t+1, n)"""
    if u is None:
        return np.zeros((grid.steps + 1, sys.n))
    if u.grid != grid:
        raise GridError(f"control lives on {u.grid!r}, solve uses {grid!r}")
    if u.dim != sys.m:
        raise DimensionMismatchError(f"control has dimension {u.dim}, B has {sys.m} columns")
    return np.einsum("knm,km->kn", sys.injector_samples(grid), u.values)


def solve_forward(
    sys: MemorySystem, y0: Any, u: Optional[Trajectory], grid: TimeGrid
) -> Trajectory:
    """
    正向求解记忆系统

    Args:
        sys: 记忆系统
        y0: 初值
        u: 节点上的控制，None 表示 u ≡ 0
        grid: 时间网格，grid.T 必须等于 sys.T

    Returns:
        状态轨迹 y

    Raises:
        GridError: 网格与系统时间区间或控制网格不一致
        SingularStepError: 单步系数矩阵奇异
        DivergenceError: 解出现非有限值
    """
    _check_grid(sys, grid)
    y0 = _as_vector(y0, sys.n, "y0")
    source = control_source(sys, u, grid)
    with timed(f"forward solve n={sys.n} steps={grid.steps}"):
        values = _march(sys.A, _HistoryConvolution(sys.M, grid), source, y0, grid)
    return Trajectory(grid, values)


def solve_adjoint(sys: MemorySystem, w_T: Any, z_T: Any, grid: TimeGrid) -> Trajectory:
    """
    求解伴随方程

    令 τ = T - t，得到 τ 方向的正向 Volterra 方程
        v_τ = Aᵀv + ∫_0^τ M(τ-σ)ᵀ v(σ) dσ - M̃(τ)ᵀ z_T,  v(0) = w_T
    用同一梯形格式求解后反转回 t。

    Example:
        >>> sys = MemorySystem(np.zeros((1, 1)), ExpPolyKernel.zero(1),
        ...                    ExpPolyKernel.constant([[1.0]]), np.ones((1, 1)), 1.0)
        >>> w = solve_adjoint(sys, [0.0], [1.0], TimeGrid(1.0, 1000))
        >>> float(w.values[0, 0])  # w(t) = t - 1
        -1.0
    """
    _check_grid(sys, grid)
    w_T = _as_vector(w_T, sys.n, "w_T")
    z_T = _as_vector(z_T, sys.n, "z_T")
    tilde = kernel_samples(sys.M_tilde, grid.nodes)
    source = -np.einsum("kba,b->ka", tilde, z_T)
    with timed(f"adjoint solve n={sys.n} steps={grid.steps}"):
        values = _march(sys.A.T, _HistoryConvolution(sys.M, grid, transpose=True), source, w_T, grid)
    return Trajectory(grid, values[::-1])


def dual_march(sys: MemorySystem, w_T: Any, z_T: Any, grid: TimeGrid) -> DiscreteAdjoint:
    """
    正向离散格式的精确转置

    以 λ_j 记第 j 步方程的乘子（λ_{N+1} = 0），μ_m = (Δt/2)(λ_m + λ_{m+1})，
    自 j = N 向 j = 1 依次解
        Sᵀλ_j = δ_{jN} w_T - q_j K̃(t_{N-j})ᵀ z_T + (I + Δt/2 A)ᵀ λ_{j+1}
                + (Δt²/4) K(0)ᵀ λ_{j+1} + Δt Σ_{m>j} K(t_{m-j})ᵀ μ_m
    其中 S 为正向单步矩阵，q_N = Δt/2，其余 q_j = Δt。
    节点上的伴随状态取 w_j = μ_j / ω_j。

    在内部节点上这是伴随方程的二阶相容离散，同时使离散对偶恒等式
    精确成立（舍入误差内）。

    Returns:
        伴随状态 w 与离散余状态 ŵ_0
    """
    _check_grid(sys, grid)
    n = sys.n
    w_T = _as_vector(w_T, n, "w_T")
    z_T = _as_vector(z_T, n, "z_T")
    dt = grid.dt
    N = grid.steps
    A = sys.A

    conv = _HistoryConvolution(sys.M, grid, transpose=True)
    tilde = kernel_samples(sys.M_tilde, grid.nodes)
    factor = _factorize(np.eye(n) - 0.5 * dt * A - 0.25 * dt * dt * conv.at_zero.T)
    explicit = (np.eye(n) + 0.5 * dt * A).T + 0.25 * dt * dt * conv.at_zero

    lam = np.zeros((N + 2, n))
    mu = np.zeros((N + 1, n))
    with timed(f"discrete adjoint n={n} steps={N}"):
        for j in range(N, 0, -1):
            q = 0.5 * dt if j == N else dt
            rhs = -q * (tilde[N - j].T @ z_T)
            if j == N:
                rhs += w_T
            rhs += explicit @ lam[j + 1]
            rhs += dt * conv.trailing(mu, j, N)
            lam[j] = linalg.lu_solve(factor, rhs, trans=1, check_finite=False)
            if not np.all(np.isfinite(lam[j])):
                raise DivergenceError(f"discrete adjoint became non-finite at step {j}", step=j)
            mu[j] = 0.5 * dt * (lam[j] + lam[j + 1])

    initial = (
        (np.eye(n) + 0.5 * dt * A).T @ lam[1]
        + 0.5 * dt * conv.trailing(mu, 0, N)
        - 0.5 * dt * (tilde[N].T @ z_T)
    )
    mu[0] = 0.5 * dt * lam[1]
    w = mu / grid.weights[:, None]
    return DiscreteAdjoint(w=Trajectory(grid, w), initial=initial)


def memory_functional(kernel: KernelLike, y: Trajectory, at: Optional[float] = None) -> np.ndarray:
    """
    梯形公式近似 ∫_0^{at} K(at-s) y(s) ds

    Args:
        kernel: 记忆核
        y: 状态轨迹
        at: 求值时刻，默认为网格终点；必须是网格节点

    Raises:
        GridError: at 不是网格节点
    """
    grid = y.grid
    m = grid.steps if at is None else grid.index_of(at)
    if m == 0:
        return np.zeros(y.dim)
    conv = _HistoryConvolution(kernel, grid)
    values = y.values
    return grid.dt * (
        0.5 * conv.single(m, values[0]) + conv.lagged(values, m) + 0.5 * conv.single(0, values[m])
    )


def memory_trajectory(kernel: KernelLike, y: Trajectory) -> Trajectory:
    """z(t_k) = ∫_0^{t_k} K(t_k-s) y(s) ds 在所有节点上的梯形近似"""
    grid = y.grid
    conv = _HistoryConvolution(kernel, grid)
    values = y.values
    z = np.zeros_like(values)
    for m in range(1, grid.steps + 1):
        z[m] = grid.dt * (
            0.5 * conv.single(m, values[0]) + conv.lagged(values, m) + 0.5 * conv.single(0, values[m])
        )
    return Trajectory(grid, z)


def augment(sys: MemorySystem) -> MemorySystem:
    """
    增广系统，状态 (y, z)，z(t) = ∫_0^t M̃(t-s) y(s) ds

        y_t = A y + ∫ M(t-s) y ds + B u
        z_t = M̃(0) y + ∫ M̃'(t-s) y ds

    常数 M̃ 时即 z_t = M̃ y。记忆目标化为 z(T) = 0。

    Raises:
        KernelStructureError: 核函数不是指数多项式
    """
    if not sys.has_exp_poly_kernels:
        raise KernelStructureError("the augmented system needs exponential-polynomial kernels")
    n, m = sys.n, sys.m
    A_aug = np.zeros((2 * n, 2 * n))
    A_aug[:n, :n] = sys.A
    A_aug[n:, :n] = sys.M_tilde.eval(0.0)
    M_aug = ExpPolyKernel.block([[sys.M, None], [sys.M_tilde.differentiate(), None]])

    if sys.has_constant_injector:
        B_aug: Injector = np.vstack([sys.B, np.zeros((n, m))])
    else:
        def B_aug(t: float) -> np.ndarray:
            return np.vstack([sys.injector_at(t), np.zeros((n, m))])

    return MemorySystem(A_aug, M_aug, ExpPolyKernel.zero(2 * n), B_aug, sys.T)


def solve_augmented(
    sys: MemorySystem, y0: Any, u: Optional[Trajectory], grid: TimeGrid
) -> tuple[Trajectory, Trajectory]:
    """在增广系统上求解，返回 (y, z)"""
    n = sys.n
    y0 = _as_vector(y0, n, "y0")
    x = solve_forward(augment(sys), np.concatenate([y0, np.zeros(n)]), u, grid)
    return Trajectory(grid, x.values[:, :n]), Trajectory(grid, x.values[:, n:])


def extend(
    sys: MemorySystem, y0: Any, u: Optional[Trajectory], grid: TimeGrid, extra_steps: int
) -> Trajectory:
    """
    控制在 T 之后补零，在延长的区间 [0, T + extra_steps·Δt] 上重新求解

    从 T 出发的各步左端点都取 u = 0，[0, T] 上的解与 solve_forward 相同。

    Args:
        extra_steps: 追加的步数 (≥ 1)
    """
    if extra_steps < 1:
        raise GridError(f"extra_steps must be positive, got {extra_steps}")
    _check_grid(sys, grid)
    longer = grid.extended(extra_steps)
    y0 = _as_vector(y0, sys.n, "y0")
    longer_sys = sys.with_horizon(longer.T)
    source = control_source(longer_sys, None if u is None else u.padded(extra_steps), longer)
    left_source = source.copy()
    left_source[grid.steps] = 0.0
    get_logger().debug(f"extending horizon {grid.T} -> {longer.T}")
    with timed(f"extended solve n={sys.n} steps={longer.steps}"):
        values = _march(
            sys.A, _HistoryConvolution(sys.M, longer), source, y0, longer, left_source=left_source
        )
    return Trajectory(longer, values)


__all__ = [
    "KernelLike",
    "Injector",
    "MemorySystem",
    "DiscreteAdjoint",
    "kernel_samples",
    "control_source",
    "solve_forward",
    "solve_adjoint",
    "dual_march",
    "memory_functional",
    "memory_trajectory",
    "augment",
    "solve_augmented",
    "extend",
]
