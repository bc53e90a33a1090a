"""
memoctrl 记忆型零能控性工具库

判定带记忆线性系统
    y_t = A y + ∫_0^t M(t-s) y(s) ds + B(t) u
是否记忆型零能控（y(T) = 0 且 ∫_0^T M̃(T-s) y(s) ds = 0），
并用对偶（HUM）方法构造控制。

主要组件:
- ExpPolyKernel: 指数多项式核函数及其精确代数
- MemorySystem / TimeGrid / Trajectory: 系统、网格与轨迹
- solve_forward / solve_adjoint / dual_march / memory_functional: 时间推进
- check_condition_i / ii / iii / check_augmented_kalman: 秩判据
- synthesize / observability_ratio: 控制合成与可观测性诊断
- assemble_system 等: 带记忆热方程的移动控制半离散

Example:
    >>> import numpy as np
    >>> from memoctrl import ExpPolyKernel, MemorySystem, TimeGrid, synthesize
    >>>
    >>> one = ExpPolyKernel.constant([[1.0]])
    >>> sys = MemorySystem(np.zeros((1, 1)), ExpPolyKernel.zero(1), one, np.ones((1, 1)), 1.0)
    >>> result = synthesize(sys, [1.0], TimeGrid(1.0, 1000), epsilon=1e-10)
    >>> result.cost  # u(t) = 6t - 4
"""

from .errors import (
    ConditionInapplicableError,
    ConfigurationError,
    DimensionMismatchError,
    DivergenceError,
    GridError,
    KernelStructureError,
    MemoctrlError,
    NumericalError,
    SingularStepError,
)
from .hum import (
    DualPoint,
    ObservabilityEstimate,
    estimate_observability_constant,
    gramian_apply,
    memory_inertia,
    objective,
    objective_gradient,
    observability_ratio,
    synthesize,
)
from .kernels import ExpPolyKernel, KernelTerm, solve_g
from .logger import Logger, get_logger, set_logger
from .models import (
    AdjointSummary,
    CoverageReport,
    InertiaReport,
    KernelTermLiteral,
    ParabolicSummary,
    RankReport,
    SimulationSummary,
    SynthesisResult,
    WindowComparison,
)
from .parabolic import (
    Mesh1D,
    MovingWindow,
    assemble_system,
    coverage_check,
    discretize_laplacian,
    fixed_window_comparison,
    moving_support_injector,
    sine_profile,
)
from .rank import (
    RecursionState,
    check_all,
    check_augmented_kalman,
    check_condition_i,
    check_condition_ii,
    check_condition_iii,
    kalman_rank,
    numerical_rank,
    recursion_step,
)
from .trajectory import TimeGrid, Trajectory
from .volterra import (
    MemorySystem,
    augment,
    dual_march,
    extend,
    memory_functional,
    memory_trajectory,
    solve_adjoint,
    solve_augmented,
    solve_forward,
)

__version__ = "0.1.0"

__all__ = [
    # Kernels
    "ExpPolyKernel",
    "KernelTerm",
    "solve_g",
    # Volterra
    "MemorySystem",
    "TimeGrid",
    "Trajectory",
    "solve_forward",
    "solve_adjoint",
    "dual_march",
    "memory_functional",
    "memory_trajectory",
    "augment",
    "solve_augmented",
    "extend",
    # Rank
    "RecursionState",
    "recursion_step",
    "numerical_rank",
    "kalman_rank",
    "check_condition_i",
    "check_condition_ii",
    "check_condition_iii",
    "check_augmented_kalman",
    "check_all",
    # HUM
    "DualPoint",
    "ObservabilityEstimate",
    "objective",
    "objective_gradient",
    "gramian_apply",
    "synthesize",
    "observability_ratio",
    "estimate_observability_constant",
    "memory_inertia",
    # Parabolic
    "Mesh1D",
    "MovingWindow",
    "discretize_laplacian",
    "moving_support_injector",
    "coverage_check",
    "sine_profile",
    "assemble_system",
    "fixed_window_comparison",
    # Models
    "KernelTermLiteral",
    "RankReport",
    "SynthesisResult",
    "SimulationSummary",
    "AdjointSummary",
    "CoverageReport",
    "WindowComparison",
    "ParabolicSummary",
    "InertiaReport",
    # Errors
    "MemoctrlError",
    "DimensionMismatchError",
    "ConfigurationError",
    "GridError",
    "KernelStructureError",
    "ConditionInapplicableError",
    "NumericalError",
    "SingularStepError",
    "DivergenceError",
    # Logger
    "Logger",
    "get_logger",
    "set_logger",
    "__version__",
]
