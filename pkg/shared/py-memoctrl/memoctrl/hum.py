"""
memoctrl 记忆型零能控性工具库 - HUM 对偶控制合成

对偶泛函
    J(w_T, z_T) = ½ ∫|B(t)ᵀw(t)|² dt + (w(0), y0)
的极小点给出最小范数控制 u = B(t)ᵀw。J 的线性部分由自由解决定，
二次部分是 Gramian Λ：
    Λ(w_T, z_T) = (y⁰(T), -∫M̃(T-t) y⁰(t) dt)，y⁰ 从零初值出发、u = Bᵀw
这里用 Tikhonov 正则化的共轭梯度解 (Λ + εI) p = -(y_free(T), -Z_free)，
并报告实际达到的残差 |y(T)| 与 |记忆泛函|，而不是断言精确零控。

伴随一律用 volterra.dual_march（正向格式的精确转置），
所以离散 Λ 在舍入误差内对称半正定，梯度也是离散意义下精确的。
"""

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError
from .kernels import ExpPolyKernel
from .logger import get_logger
from .models import InertiaCase, InertiaReport, SynthesisResult
from .trajectory import TimeGrid, Trajectory
from .volterra import (
    DiscreteAdjoint,
    MemorySystem,
    dual_march,
    extend,
    memory_functional,
    solve_forward,
)

DEFAULT_EPSILON = 1e-8
DEFAULT_CG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DualPoint:
    """
    对偶变量 (w_T, z_T)

    Example:
        >>> p = DualPoint.from_vector([1.0, 0.0])
        >>> p.w_T, p.z_T
        (array([1.]), array([0.]))
    """

    w_T: np.ndarray
    z_T: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.w_T, dtype=float).reshape(-1)
        z = np.asarray(self.z_T, dtype=float).reshape(-1)
        if w.shape != z.shape:
            raise DimensionMismatchError(f"w_T has length {w.shape[0]}, z_T has length {z.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(z))):
            raise ConfigurationError("dual point entries must be finite")
        object.__setattr__(self, "w_T", w)
        object.__setattr__(self, "z_T", z)

    @classmethod
    def zeros(cls, n: int) -> "DualPoint":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_vector(cls, v: Any) -> "DualPoint":
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] % 2:
            raise DimensionMismatchError(f"dual vector needs even length, got {v.shape[0]}")
        half = v.shape[0] // 2
        return cls(v[:half], v[half:])

    @property
    def n(self) -> int:
        return self.w_T.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.w_T, self.z_T])

    def is_zero(self) -> bool:
        return not (np.any(self.w_T) or np.any(self.z_T))


def _check_point(sys: MemorySystem, p: DualPoint) -> None:
    if p.n != sys.n:
        raise DimensionMismatchError(f"dual point has dimension {p.n}, system has {sys.n}")


def control_from_dual(
    sys: MemorySystem, p: DualPoint, grid: TimeGrid
) -> tuple[Trajectory, DiscreteAdjoint]:
    """由对偶变量得到 u_k = B(t_k)ᵀ w_k 与离散伴随"""
    _check_point(sys, p)
    adjoint = dual_march(sys, p.w_T, p.z_T, grid)
    u = np.einsum("knm,kn->km", sys.injector_samples(grid), adjoint.w.values)
    return Trajectory(grid, u), adjoint


def _targets(sys: MemorySystem, y: Trajectory) -> np.ndarray:
    return np.concatenate([y.final, -memory_functional(sys.M_tilde, y)])


def objective(sys: MemorySystem, y0: Any, p: DualPoint, grid: TimeGrid) -> float:
    """
    离散对偶泛函 J(p) = ½ Σ_k ω_k |B_kᵀ w_k|² + (ŵ_0, y0)

    Args:
        sys: 记忆系统
        y0: 初值
        p: 对偶变量
        grid: 时间网格

    Returns:
        J 的值
    """
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    u, adjoint = control_from_dual(sys, p, grid)
    return 0.5 * u.l2_norm_squared() + float(adjoint.initial @ y0)


def objective_gradient(
    sys: MemorySystem, y0: Any, p: DualPoint, grid: TimeGrid
) -> tuple[np.ndarray, np.ndarray]:
    """
    ∇J = (y(T), -∫M̃(T-t) y(t) dt)，其中 y 在 u = B(t)ᵀw 下从 y0 出发

    在极小点两个分量同时为零，恰好是记忆型零能控的目标。
    """
    u, _ = control_from_dual(sys, p, grid)
    y = solve_forward(sys, y0, u, grid)
    gradient = _targets(sys, y)
    return gradient[: sys.n], gradient[sys.n :]


def gramian_apply(sys: MemorySystem, p: DualPoint, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Λp：一次伴随求解加一次零初值的正向求解"""
    return objective_gradient(sys, np.zeros(sys.n), p, grid)


def synthesize(
    sys: MemorySystem,
    y0: Any,
    grid: TimeGrid,
    epsilon: float = DEFAULT_EPSILON,
    cg_tol: float = DEFAULT_CG_TOL,
    cg_max: Optional[int] = None,
) -> SynthesisResult:
    """
    正则化 HUM：共轭梯度求解 (Λ + εI) p = -(y_free(T), -Z_free)

    从 p = 0 出发，以相对残差 |r_k| / |r_0| ≤ cg_tol 判停。

    Args:
        sys: 记忆系统
        y0: 初值
        grid: 时间网格
        epsilon: 正则化参数 (> 0)
        cg_tol: CG 相对残差容差
        cg_max: CG 迭代上限，默认 10·2n

    Returns:
        SynthesisResult；未收敛时 converged=False，其余字段为最后一次迭代的结果

    Raises:
        ConfigurationError: epsilon 不为正
    """
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    logger = get_logger()
    n = sys.n
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if y0.shape[0] != n:
        raise DimensionMismatchError(f"y0 must have length {n}, got {y0.shape[0]}")
    cg_max = cg_max if cg_max is not None else 10 * 2 * n

    def apply(v: np.ndarray) -> np.ndarray:
        w_part, z_part = gramian_apply(sys, DualPoint.from_vector(v), grid)
        return np.concatenate([w_part, z_part]) + epsilon * v

    free = solve_forward(sys, y0, None, grid)
    residual = -_targets(sys, free)
    x = np.zeros(2 * n)
    initial_norm = float(np.linalg.norm(residual))
    history: list[float] = []
    iterations = 0
    converged = initial_norm == 0.0

    if not converged:
        direction = residual.copy()
        rr = float(residual @ residual)
        while iterations < cg_max:
            q = apply(direction)
            curvature = float(direction @ q)
            if curvature <= 0.0:
                logger.warning(f"CG stopped: non-positive curvature {curvature:.3e}")
                break
            alpha = rr / curvature
            x += alpha * direction
            residual -= alpha * q
            iterations += 1
            rr_next = float(residual @ residual)
            relative = np.sqrt(rr_next) / initial_norm
            history.append(float(relative))
            logger.debug(f"CG iteration {iterations}: relative residual {relative:.3e}")
            if relative <= cg_tol:
                converged = True
                break
            direction = residual + (rr_next / rr) * direction
            rr = rr_next

    p = DualPoint.from_vector(x)
    u, _ = control_from_dual(sys, p, grid)
    y = solve_forward(sys, y0, u, grid)
    memory = memory_functional(sys.M_tilde, y)
    result = SynthesisResult(
        control=u,
        w_T=p.w_T.tolist(),
        z_T=p.z_T.tolist(),
        terminal_state_norm=y.norm_at_end(),
        memory_norm=float(np.linalg.norm(memory)),
        cost=u.l2_norm_squared(),
        iterations=iterations,
        epsilon=epsilon,
        cg_tol=cg_tol,
        converged=converged,
        residual_history=history,
    )
    log = logger.info if converged else logger.warning
    log(
        f"synthesis {'converged' if converged else 'did not converge'} after {iterations} iterations: "
        f"|y(T)|={result.terminal_state_norm:.3e} |memory|={result.memory_norm:.3e} cost={result.cost:.6g}"
    )
    return result


def observability_ratio(sys: MemorySystem, p: DualPoint, grid: TimeGrid) -> float:
    """
    |w(0)|² / ∫|B(t)ᵀw(t)|² dt

    每个样本都是可观测常数 C 的下界；分母不超过机器下限时返回 ∞。

    Raises:
        ConfigurationError: p 为零
    """
    if p.is_zero():
        raise ConfigurationError("observability ratio is undefined at the zero dual point")
    u, adjoint = control_from_dual(sys, p, grid)
    denominator = u.l2_norm_squared()
    numerator = float(adjoint.initial @ adjoint.initial)
    if denominator <= np.finfo(float).tiny:
        return float("inf")
    return numerator / denominator


@dataclass(frozen=True)
class ObservabilityEstimate:
    """随机单位对偶点上 observability_ratio 的最大值及其取得点"""

    lower_bound: float
    worst: DualPoint
    samples: int


def estimate_observability_constant(
    sys: MemorySystem, grid: TimeGrid, samples: int = 32, seed: int = 0
) -> ObservabilityEstimate:
    """
    在随机单位对偶点上采样 observability_ratio，取最大值作为 C 的下界

    这是诊断量而不是证明：样本只能给出下界。
    """
    if samples < 1:
        raise ConfigurationError(f"samples must be positive, got {samples}")
    rng = np.random.default_rng(seed)
    best = -np.inf
    worst: Optional[DualPoint] = None
    for _ in range(samples):
        v = rng.standard_normal(2 * sys.n)
        p = DualPoint.from_vector(v / np.linalg.norm(v))
        ratio = observability_ratio(sys, p, grid)
        if worst is None or ratio > best:
            best, worst = ratio, p
    get_logger().info(f"observability constant lower bound {best:.6g} from {samples} samples")
    return ObservabilityEstimate(lower_bound=float(best), worst=worst, samples=samples)


def memory_inertia(
    sys: MemorySystem,
    y0: Any,
    grid: TimeGrid,
    extra_steps: int,
    epsilon: float = DEFAULT_EPSILON,
    cg_tol: float = DEFAULT_CG_TOL,
    cg_max: Optional[int] = None,
) -> InertiaReport:
    """
    记忆惯性演示

    分别按 M̃ = 0（只要求 y(T) = 0）和按 sys.M_tilde（记忆型零控）合成控制，
    再在 T 之后令 u = 0 继续求解 extra_steps 步。只压住状态的控制留下非零记忆，
    在有记忆的动力学下状态离开零点。
    """
    def run(target: MemorySystem) -> InertiaCase:
        result = synthesize(target, y0, grid, epsilon, cg_tol, cg_max)
        y = solve_forward(sys, y0, result.control, grid)
        later = extend(sys, y0, result.control, grid, extra_steps)
        return InertiaCase(
            terminal_state_norm=y.norm_at_end(),
            memory_norm=float(np.linalg.norm(memory_functional(sys.M_tilde, y))),
            extended_state_norm=later.norm_at_end(),
        )

    state_only = run(sys.with_memory_kernel(ExpPolyKernel.zero(sys.n)))
    memory_type = run(sys)
    return InertiaReport(
        extra_time=extra_steps * grid.dt,
        state_only=state_only,
        memory_type=memory_type,
    )


__all__ = [
    "DEFAULT_EPSILON",
    "DEFAULT_CG_TOL",
    "DualPoint",
    "ObservabilityEstimate",
    "control_from_dual",
    "objective",
    "objective_gradient",
    "gramian_apply",
    "synthesize",
    "observability_ratio",
    "estimate_observability_constant",
    "memory_inertia",
]
