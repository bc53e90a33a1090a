"""
memoctrl 记忆型零能控性工具库 - 秩判据

由递推
    A_1 = A, M_1 = M, M̃_1 = M̃
    A_{i+1} = A A_i + M_i(0)
    M_{i+1} = M A_i + M_i'
    M̃_{i+1} = M̃ A_i + M̃_i'
拼出 2n 行的分块矩阵，秩达到 2n 时系统是记忆型零能控的。

条件 (i)、(ii) 的列是无穷多的。递推是有限维空间上的固定线性映射，
列又是状态的线性像，所以一旦新状态落入此前状态张成的空间，
后续的列再也不会扩大列空间，此时判定 fails（Krylov 封闭）。
max_blocks 只是数值病态时的保险，触发时给出 inconclusive。

条件 (iii) 针对常数核，列数固定为 2n+2 块，不会出现 inconclusive。
"""

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy import linalg

from .errors import ConditionInapplicableError, KernelStructureError
from .kernels import DEFAULT_G_TOL, ExpPolyKernel, exponents_match, solve_g
from .logger import get_logger
from .models import ConditionName, RankReport
from .volterra import MemorySystem

DEFAULT_RANK_TOL = 1e-12
# 新状态相对正交化残差低于此值即视为线性相关
CLOSURE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class RecursionState:
    """
    递推状态 (i, A_i, M_i, M̃_i)

    Example:
        >>> state = RecursionState.initial(sys)
        >>> state = recursion_step(state, sys)
        >>> state.index
        2
    """

    index: int
    A_i: np.ndarray
    M_i: ExpPolyKernel
    M_tilde_i: ExpPolyKernel

    @classmethod
    def initial(cls, sys: MemorySystem) -> "RecursionState":
        _require_exp_poly(sys)
        return cls(1, sys.A.copy(), sys.M, sys.M_tilde)


def recursion_step(state: RecursionState, sys: MemorySystem) -> RecursionState:
    """A_{i+1} = A A_i + M_i(0), M_{i+1} = M A_i + M_i', M̃_{i+1} = M̃ A_i + M̃_i'"""
    _require_exp_poly(sys)
    return RecursionState(
        index=state.index + 1,
        A_i=sys.A @ state.A_i + state.M_i.eval(0.0),
        M_i=sys.M.right_multiply(state.A_i).add(state.M_i.differentiate()),
        M_tilde_i=sys.M_tilde.right_multiply(state.A_i).add(state.M_tilde_i.differentiate()),
    )


def a_sequence(sys: MemorySystem, count: int) -> list[np.ndarray]:
    """A_1, ..., A_count"""
    state = RecursionState.initial(sys)
    result = [state.A_i]
    while len(result) < count:
        state = recursion_step(state, sys)
        result.append(state.A_i)
    return result


def f_sequence(sys: MemorySystem, count: int, g_tol: float = DEFAULT_G_TOL) -> list[np.ndarray]:
    """
    F_1, ..., F_count，F_i = A_i + G_1 A_{i-1} + ... + G_{i-1} A_1 + G_i

    Raises:
        ConditionInapplicableError: 某个 G_i 不存在
    """
    a_list = [np.eye(sys.n), *a_sequence(sys, count)]
    g_list = [np.eye(sys.n), *(solve_g(sys.M_tilde, i, g_tol) for i in range(1, count + 1))]
    return [sum(g_list[k] @ a_list[i - k] for k in range(i + 1)) for i in range(1, count + 1)]


# ----------------------------------------------------------------------
# 数值秩
# ----------------------------------------------------------------------


def numerical_rank(matrix: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> tuple[int, np.ndarray]:
    """
    数值秩：大于 tol·σ_max·max(行数, 列数) 的奇异值个数

    Returns:
        (秩, 降序排列的奇异值)
    """
    mx = np.atleast_2d(np.asarray(matrix, dtype=float))
    if mx.size == 0:
        return 0, np.zeros(0)
    singular = linalg.svd(mx, compute_uv=False)
    if singular[0] == 0.0:
        return 0, singular
    threshold = tol * singular[0] * max(mx.shape)
    return int(np.count_nonzero(singular > threshold)), singular


def null_directions(matrix: np.ndarray, rank: int) -> list[list[float]]:
    """拼接矩阵数值秩之外的左奇异向量"""
    u, _, _ = linalg.svd(np.atleast_2d(matrix), full_matrices=True)
    return [u[:, k].tolist() for k in range(rank, u.shape[0])]


def kalman_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """[B, AB, ..., A^{n-1}B]"""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def kalman_rank(A: np.ndarray, B: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> int:
    return numerical_rank(kalman_matrix(A, B), tol)[0]


# ----------------------------------------------------------------------
# Krylov 封闭检测
# ----------------------------------------------------------------------


class _KrylovBasis:
    """递推状态向量的正交基，带一次重正交化"""

    def __init__(self, tol: float = CLOSURE_TOL) -> None:
        self.tol = tol
        self._vectors: list[np.ndarray] = []

    def extend(self, v: np.ndarray) -> bool:
        """加入 v；v 落在已有张成空间内时返回 False"""
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            return False
        r = v.astype(float).copy()
        for _ in range(2):
            for q in self._vectors:
                r -= (q @ r) * q
        residual = float(np.linalg.norm(r))
        if residual <= self.tol * norm:
            return False
        self._vectors.append(r / residual)
        return True

    def __len__(self) -> int:
        return len(self._vectors)


Layout = list[tuple[float, int]]


def _layout(kernel: ExpPolyKernel) -> Layout:
    return [(term.exponent, term.degree) for term in kernel.terms]


def _vectorize(kernel: ExpPolyKernel, layout: Layout) -> np.ndarray:
    """按基核的 (指数, 次数) 布局把核展平为向量"""
    n = kernel.dim
    parts = []
    used = 0
    for exponent, degree in layout:
        block = np.zeros((degree + 1, n, n))
        for term in kernel.terms:
            if exponents_match(term.exponent, exponent):
                if term.degree > degree:
                    raise KernelStructureError("recursion left the kernel's exponential-polynomial space")
                block[: term.degree + 1] = term.coeffs
                used += 1
        parts.append(block.ravel())
    if used != len(kernel.terms):
        raise KernelStructureError("recursion produced an exponent outside the base kernel")
    return np.concatenate(parts) if parts else np.zeros(0)


# ----------------------------------------------------------------------
# 判据
# ----------------------------------------------------------------------


def _require_exp_poly(sys: MemorySystem) -> None:
    if not sys.has_exp_poly_kernels:
        raise KernelStructureError("rank conditions need exponential-polynomial kernels")


def _constant_injector(sys: MemorySystem) -> np.ndarray:
    if not sys.has_constant_injector:
        raise KernelStructureError("rank conditions are stated for a constant control operator B")
    return sys.B


def _constant_kernels(sys: MemorySystem) -> tuple[np.ndarray, np.ndarray]:
    _require_exp_poly(sys)
    if not (sys.M.is_constant() and sys.M_tilde.is_constant()):
        raise KernelStructureError("this condition needs constant memory kernels M and M̃")
    return sys.M.eval(0.0), sys.M_tilde.eval(0.0)


def default_max_blocks(sys: MemorySystem) -> int:
    """2·(n² + 核系数总数) + 2"""
    _require_exp_poly(sys)
    n2 = sys.n * sys.n
    count = n2 * (sys.M.coefficient_count() + sys.M_tilde.coefficient_count())
    return 2 * (n2 + count) + 2


def _report(
    condition: ConditionName,
    verdict: str,
    matrix: np.ndarray,
    rank: int,
    singular: np.ndarray,
    target: int,
    blocks_used: int,
    stop_reason: str,
    necessary_too: Optional[bool] = None,
) -> RankReport:
    directions = [] if verdict == "holds" else null_directions(matrix, rank)
    report = RankReport(
        condition=condition,
        verdict=verdict,
        rank=rank,
        target=target,
        blocks_used=blocks_used,
        stop_reason=stop_reason,
        singular_values=singular.tolist(),
        necessary_too=necessary_too,
        null_directions=directions,
        matrix=matrix,
    )
    get_logger().info(
        f"condition {condition}: {verdict} (rank {rank}/{target}, {blocks_used} blocks, {stop_reason})"
    )
    return report


def _krylov_loop(
    condition: ConditionName,
    target: int,
    first_block: np.ndarray,
    steps: Iterator[tuple[Optional[np.ndarray], np.ndarray, int]],
    tol: float,
    limit: int,
) -> RankReport:
    """
    公共的停止逻辑

    steps 先产出初始状态向量，之后依次产出 (列块, 下一状态向量, 下一状态编号)。
    每拼入一块先检查秩，再检查块数上限，最后检查下一状态是否线性相关。
    """
    blocks = [first_block]
    basis = _KrylovBasis()
    _, initial, _ = next(steps)
    basis.extend(initial)
    for block, state_vector, next_index in steps:
        blocks.append(block)
        matrix = np.hstack(blocks)
        rank, singular = numerical_rank(matrix, tol)
        if rank == target:
            return _report(condition, "holds", matrix, rank, singular, target, len(blocks), "full rank reached")
        if len(blocks) >= limit:
            return _report(
                condition, "inconclusive", matrix, rank, singular, target, len(blocks),
                f"max_blocks={limit} reached before closure",
            )
        if not basis.extend(state_vector):
            return _report(
                condition, "fails", matrix, rank, singular, target, len(blocks),
                f"recursion state {next_index} lies in the span of its predecessors",
            )
    raise AssertionError("recursion generator ended early")


def check_condition_i(
    sys: MemorySystem, tol: float = DEFAULT_RANK_TOL, max_blocks: Optional[int] = None
) -> RankReport:
    """
    条件 (i)：列块 [B; 0], [A_i B; M̃_i(0) B], i = 1, 2, ...

    Args:
        sys: 常数 B、指数多项式核的记忆系统
        tol: 数值秩的相对容差
        max_blocks: 列块数上限，默认 default_max_blocks(sys)

    Raises:
        KernelStructureError: B 不是常数或核函数不是指数多项式
    """
    B = _constant_injector(sys)
    _require_exp_poly(sys)
    layout_M = _layout(sys.M)
    layout_Mt = _layout(sys.M_tilde)

    def vector(state: RecursionState) -> np.ndarray:
        return np.concatenate(
            [state.A_i.ravel(), _vectorize(state.M_i, layout_M), _vectorize(state.M_tilde_i, layout_Mt)]
        )

    def generate():
        state = RecursionState.initial(sys)
        yield None, vector(state), 1
        while True:
            block = np.vstack([state.A_i @ B, state.M_tilde_i.eval(0.0) @ B])
            state = recursion_step(state, sys)
            yield block, vector(state), state.index

    first = np.vstack([B, np.zeros_like(B)])
    return _krylov_loop("i", 2 * sys.n, first, generate(), tol, max_blocks or default_max_blocks(sys))


def check_condition_ii(
    sys: MemorySystem,
    tol: float = DEFAULT_RANK_TOL,
    max_blocks: Optional[int] = None,
    g_tol: float = DEFAULT_G_TOL,
) -> RankReport:
    """
    条件 (ii)：列块 [B; 0], [A_i B; F_{i-1} B]，F_0 = I

    需要 M̃^{(i)}(0) = M̃(0) G_i 对所有 i 可解。由于 G_i = P M̃^{(i)}(0)
    （P 为 M̃(0) 的伪逆），F_{i-1} = Φ_i(0) + (I - P M̃(0)) A_{i-1}，
    其中 Φ_1 = P M̃，Φ_{i+1} = Φ_1 A_i + Φ_i'。于是联合状态
    (A_i, M_i, Φ_i, A_{i-1}) 满足线性递推，封闭检测同条件 (i)。

    Raises:
        ConditionInapplicableError: 某个 G_i 不存在
        KernelStructureError: B 不是常数或核函数不是指数多项式
    """
    B = _constant_injector(sys)
    _require_exp_poly(sys)
    n = sys.n
    M_tilde = sys.M_tilde

    # 指数多项式核的导数落在有限维空间内，检查到系数总数即可
    order = max(M_tilde.coefficient_count(), 1)
    g_list = [np.eye(n)] + [solve_g(M_tilde, i, g_tol) for i in range(1, order + 1)]

    def g(i: int) -> np.ndarray:
        while len(g_list) <= i:
            g_list.append(solve_g(M_tilde, len(g_list), g_tol))
        return g_list[i]

    projector = linalg.pinv(M_tilde.eval(0.0))
    phi_1 = M_tilde.left_multiply(projector)
    layout_M = _layout(sys.M)
    layout_phi = _layout(M_tilde)

    def vector(state: RecursionState, phi: ExpPolyKernel, previous: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [
                state.A_i.ravel(),
                _vectorize(state.M_i, layout_M),
                _vectorize(phi, layout_phi),
                previous.ravel(),
            ]
        )

    def generate():
        state = RecursionState.initial(sys)
        a_list = [np.eye(n), state.A_i]
        phi = phi_1
        yield None, vector(state, phi, a_list[0]), 1
        while True:
            i = state.index
            f_prev = sum(g(k) @ a_list[i - 1 - k] for k in range(i))
            block = np.vstack([state.A_i @ B, f_prev @ B])
            phi = phi_1.right_multiply(state.A_i).add(phi.differentiate())
            state = recursion_step(state, sys)
            a_list.append(state.A_i)
            yield block, vector(state, phi, a_list[i]), state.index

    first = np.vstack([B, np.zeros_like(B)])
    return _krylov_loop("ii", 2 * n, first, generate(), tol, max_blocks or default_max_blocks(sys))


def check_condition_iii(sys: MemorySystem, tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """
    条件 (iii)：常数核 M、M̃，A_0 = I，A_{i+1} = A A_i + M_i，M_{i+1} = M A_i

    拼出固定的 2n × m(2n+2) 矩阵
        [B  A_1B  A_2B  ...  A_{2n+1}B]
        [0  A_0B  A_1B  ...  A_{2n}B  ]
    M̃ 可逆时判据同时是必要条件（necessary_too = True）。

    Example:
        >>> report = check_condition_iii(fibonacci_system)
        >>> report.matrix
        array([[1., 1., 2., 3.],
               [0., 1., 1., 2.]])
    """
    B = _constant_injector(sys)
    M, M_tilde = _constant_kernels(sys)
    n = sys.n

    a_list = [np.eye(n), sys.A.copy()]
    m_i = M
    while len(a_list) < 2 * n + 2:
        a_next = sys.A @ a_list[-1] + m_i
        m_i = M @ a_list[-1]
        a_list.append(a_next)

    top = [B] + [a_list[k] @ B for k in range(1, 2 * n + 2)]
    bottom = [np.zeros_like(B)] + [a_list[k - 1] @ B for k in range(1, 2 * n + 2)]
    matrix = np.vstack([np.hstack(top), np.hstack(bottom)])
    rank, singular = numerical_rank(matrix, tol)
    verdict = "holds" if rank == 2 * n else "fails"
    necessary = numerical_rank(M_tilde, tol)[0] == n
    return _report(
        "iii", verdict, matrix, rank, singular, 2 * n, 2 * n + 2,
        "fixed 2n+2 block columns", necessary_too=necessary,
    )


def check_augmented_kalman(sys: MemorySystem, tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """
    常数核且 M = G M̃ 可解时，增广系统
        y_t = A y + G z + B u,  z_t = M̃ y
    的 Kalman 秩判据（目标秩 2n）

    Raises:
        ConditionInapplicableError: 不存在 G 使 M = G M̃
    """
    B = _constant_injector(sys)
    M, M_tilde = _constant_kernels(sys)
    n = sys.n
    g_t, *_ = linalg.lstsq(M_tilde.T, M.T)
    G = g_t.T
    residual = np.linalg.norm(G @ M_tilde - M)
    if residual > DEFAULT_G_TOL * (1.0 + np.linalg.norm(M)):
        raise ConditionInapplicableError(
            f"M is not of the form G·M̃ (residual {residual:.3e})"
        )
    A_aug = np.block([[sys.A, G], [M_tilde, np.zeros((n, n))]])
    B_aug = np.vstack([B, np.zeros_like(B)])
    matrix = kalman_matrix(A_aug, B_aug)
    rank, singular = numerical_rank(matrix, tol)
    verdict = "holds" if rank == 2 * n else "fails"
    return _report("augmented", verdict, matrix, rank, singular, 2 * n, 2 * n, "Kalman matrix of the augmented system")


def check_all(sys: MemorySystem, tol: float = DEFAULT_RANK_TOL) -> dict[str, RankReport]:
    """运行所有适用的判据，不适用的判据被跳过并记录日志"""
    logger = get_logger()
    reports: dict[str, RankReport] = {}
    reports["i"] = check_condition_i(sys, tol)
    try:
        reports["ii"] = check_condition_ii(sys, tol)
    except ConditionInapplicableError as e:
        logger.info(f"condition ii skipped: {e}")
    if sys.M.is_constant() and sys.M_tilde.is_constant():
        reports["iii"] = check_condition_iii(sys, tol)
        try:
            reports["augmented"] = check_augmented_kalman(sys, tol)
        except ConditionInapplicableError as e:
            logger.info(f"augmented Kalman check skipped: {e}")
    return reports


__all__ = [
    "DEFAULT_RANK_TOL",
    "CLOSURE_TOL",
    "RecursionState",
    "recursion_step",
    "a_sequence",
    "f_sequence",
    "numerical_rank",
    "null_directions",
    "kalman_matrix",
    "kalman_rank",
    "default_max_blocks",
    "check_condition_i",
    "check_condition_ii",
    "check_condition_iii",
    "check_augmented_kalman",
    "check_all",
]
