"""
memoctrl 记忆型零能控性工具库 - 指数多项式核函数

矩阵值核函数 t ↦ Σ_j e^{a_j t} Σ_k C_{j,k} t^k 的精确代数运算。
这一族函数在求导、右乘常数矩阵、相加下封闭，恰好覆盖秩判据递推
A_{i+1} = A A_i + M_i(0), M_{i+1} = M A_i + M_i' 所需的全部运算，
因此 M_i(0)、M̃_i(0) 可以不经数值积分直接算出。

规范形:
- 指数相差不超过 1e-12·(1+max(|a|,|a'|)) 的项合并
- 末尾最大绝对值不超过 1e-14 的系数矩阵被裁掉，全零项被删除
- 各项按指数升序排列

所有运算都返回新对象，核函数本身不可变，可在多线程间共享。
"""

from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import ConditionInapplicableError, ConfigurationError, DimensionMismatchError

# 指数合并的相对容差
MERGE_RTOL = 1e-12
# 系数矩阵视为零的阈值
ZERO_ATOL = 1e-14
# 条件 (ii) 中 G_i 最小二乘残差的默认容差
DEFAULT_G_TOL = 1e-10


def exponents_match(a: float, b: float) -> bool:
    """判断两个指数在合并容差内是否相同"""
    return abs(a - b) <= MERGE_RTOL * (1.0 + max(abs(a), abs(b)))


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class KernelTerm:
    """
    单个指数多项式项 e^{a t} Σ_k C_k t^k

    Attributes:
        exponent: 指数 a
        coeffs: 形状为 (K+1, n, n) 的只读数组，下标即多项式次数
    """

    __slots__ = ("exponent", "coeffs")

    def __init__(self, exponent: float, coeffs: np.ndarray) -> None:
        self.exponent = float(exponent)
        self.coeffs = _freeze(np.array(coeffs, dtype=float))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __repr__(self) -> str:
        return f"KernelTerm(exponent={self.exponent!r}, degree={self.degree})"


def _canonical_terms(terms: Iterable[KernelTerm], dim: int) -> tuple[KernelTerm, ...]:
    ordered = sorted(terms, key=lambda term: term.exponent)

    # 合并指数相同的项，组的指数取第一个成员
    groups: list[tuple[float, np.ndarray]] = []
    for term in ordered:
        coeffs = term.coeffs
        if coeffs.ndim != 3 or coeffs.shape[1:] != (dim, dim):
            raise DimensionMismatchError(
                f"kernel coefficients must have shape (K+1, {dim}, {dim}), got {coeffs.shape}"
            )
        if groups and exponents_match(groups[-1][0], term.exponent):
            exponent, acc = groups[-1]
            size = max(acc.shape[0], coeffs.shape[0])
            merged = np.zeros((size, dim, dim))
            merged[: acc.shape[0]] += acc
            merged[: coeffs.shape[0]] += coeffs
            groups[-1] = (exponent, merged)
        else:
            groups.append((term.exponent, np.array(coeffs, dtype=float)))

    canonical: list[KernelTerm] = []
    for exponent, coeffs in groups:
        keep = coeffs.shape[0]
        while keep > 0 and np.max(np.abs(coeffs[keep - 1]), initial=0.0) <= ZERO_ATOL:
            keep -= 1
        if keep > 0:
            canonical.append(KernelTerm(exponent, coeffs[:keep]))
    return tuple(canonical)


class ExpPolyKernel:
    """
    矩阵值指数多项式核函数

    构造时即化为规范形，因此两个核相等当且仅当规范项列表逐元素相等。

    Attributes:
        dim: 矩阵阶数 n
        terms: 规范化后的项元组

    Example:
        >>> k = ExpPolyKernel.scalar(2.0, [1.0, 3.0])  # e^{2t}(1+3t)
        >>> float(k.eval(0.5)[0, 0])  # 2.5·e
        6.795704571147613
    """

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms: Iterable[KernelTerm] = ()) -> None:
        if dim < 1:
            raise DimensionMismatchError(f"kernel dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.terms = _canonical_terms(terms, self.dim)

    # ------------------------------------------------------------------
    # 构造
    # ------------------------------------------------------------------

    @classmethod
    def zero(cls, dim: int) -> "ExpPolyKernel":
        return cls(dim)

    @classmethod
    def constant(cls, matrix: Any) -> "ExpPolyKernel":
        """常数核 M(t) ≡ C"""
        c = np.atleast_2d(np.asarray(matrix, dtype=float))
        if c.shape[0] != c.shape[1]:
            raise DimensionMismatchError(f"constant kernel needs a square matrix, got {c.shape}")
        return cls(c.shape[0], [KernelTerm(0.0, c[None])])

    @classmethod
    def scalar(cls, exponent: float, coeffs: Sequence[float], dim: int = 1) -> "ExpPolyKernel":
        """
        标量简写 e^{a t} Σ c_k t^k · I

        Args:
            exponent: 指数 a
            coeffs: 按次数排列的标量系数
            dim: 单位阵阶数
        """
        c = np.asarray(coeffs, dtype=float).reshape(-1)
        eye = np.eye(dim)
        return cls(dim, [KernelTerm(exponent, c[:, None, None] * eye)])

    @classmethod
    def from_literal(
        cls, literal: Iterable[Mapping[str, Any]], dim: Optional[int] = None
    ) -> "ExpPolyKernel":
        """
        从配置文件中的核函数字面量构造

        字面量是项的数组，每项为 {"a": 实数, "coeffs": [...]}。coeffs 可以是
        n×n 矩阵列表（下标为次数），也可以是标量列表（展开为 c·I）。

        Args:
            literal: 项字面量序列
            dim: 矩阵阶数；只含标量简写时必须给出，否则由矩阵系数推断

        Raises:
            DimensionMismatchError: 系数矩阵阶数与 dim 或彼此不一致
            ConfigurationError: 字面量格式错误或无法推断阶数
        """
        parsed: list[tuple[float, np.ndarray]] = []
        inferred = dim
        for item in literal:
            if "coeffs" not in item:
                raise ConfigurationError(f"kernel term without 'coeffs': {dict(item)}")
            exponent = float(item.get("a", 0.0))
            coeffs = np.asarray(item["coeffs"], dtype=float)
            if coeffs.ndim == 3:
                if coeffs.shape[1] != coeffs.shape[2]:
                    raise DimensionMismatchError(
                        f"kernel coefficient matrices must be square, got {coeffs.shape[1:]}"
                    )
                if inferred is None:
                    inferred = coeffs.shape[1]
                elif inferred != coeffs.shape[1]:
                    raise DimensionMismatchError(
                        f"kernel coefficients are {coeffs.shape[1]}x{coeffs.shape[1]}, expected {inferred}x{inferred}"
                    )
            elif coeffs.ndim > 1:
                raise ConfigurationError(
                    "kernel 'coeffs' must be a list of scalars or a list of square matrices"
                )
            parsed.append((exponent, coeffs))

        if inferred is None:
            if parsed:
                raise ConfigurationError("scalar kernel shorthand needs an explicit dimension")
            raise ConfigurationError("cannot infer the dimension of an empty kernel literal")

        eye = np.eye(inferred)
        terms = []
        for exponent, coeffs in parsed:
            if coeffs.size == 0:
                continue
            if coeffs.ndim == 1:
                coeffs = coeffs[:, None, None] * eye
            terms.append(KernelTerm(exponent, coeffs))
        return cls(inferred, terms)

    def to_literal(self) -> list[dict[str, Any]]:
        """输出矩阵形式的核函数字面量"""
        return [
            {"a": term.exponent, "coeffs": term.coeffs.tolist()} for term in self.terms
        ]

    @classmethod
    def block(cls, rows: Sequence[Sequence[Optional["ExpPolyKernel"]]]) -> "ExpPolyKernel":
        """
        由同阶方块拼成分块核，None 表示零块

        Args:
            rows: 方阵排列的子核，各子核阶数相同
        """
        size = len(rows)
        if size == 0 or any(len(row) != size for row in rows):
            raise DimensionMismatchError("block kernel layout must be square")
        dims = {k.dim for row in rows for k in row if k is not None}
        if len(dims) != 1:
            raise DimensionMismatchError(f"block kernels must share one dimension, got {dims}")
        n = dims.pop()
        total = size * n
        terms = []
        for r, row in enumerate(rows):
            for c, kernel in enumerate(row):
                if kernel is None:
                    continue
                for term in kernel.terms:
                    coeffs = np.zeros((term.degree + 1, total, total))
                    coeffs[:, r * n : (r + 1) * n, c * n : (c + 1) * n] = term.coeffs
                    terms.append(KernelTerm(term.exponent, coeffs))
        return cls(total, terms)

    def expand_scalar(self, n: int) -> "ExpPolyKernel":
        """把 1×1 核 m(·) 展开为 m(·)·I_n"""
        if self.dim != 1:
            raise DimensionMismatchError(f"expected a scalar kernel, got dimension {self.dim}")
        eye = np.eye(n)
        return ExpPolyKernel(
            n,
            [KernelTerm(t.exponent, t.coeffs[:, 0, 0][:, None, None] * eye) for t in self.terms],
        )

    # ------------------------------------------------------------------
    # 求值
    # ------------------------------------------------------------------

    def eval(self, t: float) -> np.ndarray:
        """按定义求值 Σ_j e^{a_j t} Σ_k C_{j,k} t^k"""
        result = np.zeros((self.dim, self.dim))
        for term in self.terms:
            poly = term.coeffs[-1].copy()
            for coeff in term.coeffs[-2::-1]:
                poly = poly * t + coeff
            result += np.exp(term.exponent * t) * poly
        return result

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    def samples(self, times: np.ndarray) -> np.ndarray:
        """在一组时刻上求值，返回形状 (len(times), n, n)"""
        times = np.asarray(times, dtype=float)
        out = np.zeros((times.shape[0], self.dim, self.dim))
        for phi, coeff in self.basis_samples(times):
            out += phi[:, None, None] * coeff
        return out

    def basis_samples(self, times: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """
        分解形式的采样

        Returns:
            (φ, C) 列表，其中 φ(t) = e^{a t} t^k 为标量采样，C 为对应系数矩阵；
            核函数等于 Σ φ(t)·C。
        """
        times = np.asarray(times, dtype=float)
        factors = []
        for term in self.terms:
            envelope = np.exp(term.exponent * times)
            for k, coeff in enumerate(term.coeffs):
                if not np.any(coeff):
                    continue
                factors.append((envelope * np.power(times, k), coeff))
        return factors

    # ------------------------------------------------------------------
    # 代数运算
    # ------------------------------------------------------------------

    def differentiate(self) -> "ExpPolyKernel":
        """逐项乘积法则: e^{at} Σ C_k t^k ↦ e^{at} Σ (a C_k + (k+1) C_{k+1}) t^k"""
        terms = []
        for term in self.terms:
            a, c = term.exponent, term.coeffs
            d = a * c
            d[:-1] += np.arange(1, c.shape[0])[:, None, None] * c[1:]
            terms.append(KernelTerm(a, d))
        return ExpPolyKernel(self.dim, terms)

    def right_multiply(self, x: Any) -> "ExpPolyKernel":
        """每个系数右乘 X"""
        x = self._check_square(x)
        return ExpPolyKernel(self.dim, [KernelTerm(t.exponent, t.coeffs @ x) for t in self.terms])

    def left_multiply(self, x: Any) -> "ExpPolyKernel":
        """每个系数左乘 X"""
        x = self._check_square(x)
        return ExpPolyKernel(self.dim, [KernelTerm(t.exponent, x @ t.coeffs) for t in self.terms])

    def transpose(self) -> "ExpPolyKernel":
        return ExpPolyKernel(
            self.dim, [KernelTerm(t.exponent, np.swapaxes(t.coeffs, 1, 2)) for t in self.terms]
        )

    def scale(self, factor: float) -> "ExpPolyKernel":
        return ExpPolyKernel(self.dim, [KernelTerm(t.exponent, factor * t.coeffs) for t in self.terms])

    def add(self, other: "ExpPolyKernel") -> "ExpPolyKernel":
        """相加，指数在容差内相同的项逐系数合并"""
        if other.dim != self.dim:
            raise DimensionMismatchError(
                f"cannot add kernels of dimension {self.dim} and {other.dim}"
            )
        return ExpPolyKernel(self.dim, [*self.terms, *other.terms])

    def __add__(self, other: "ExpPolyKernel") -> "ExpPolyKernel":
        return self.add(other)

    def derivative_at_zero(self, order: int) -> np.ndarray:
        """精确计算 M^{(order)}(0)"""
        kernel = self
        for _ in range(order):
            kernel = kernel.differentiate()
        return kernel.eval(0.0)

    def canonical(self) -> "ExpPolyKernel":
        return ExpPolyKernel(self.dim, self.terms)

    # ------------------------------------------------------------------
    # 查询
    # ------------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        """只含指数为 0、次数为 0 的项（或为零核）"""
        return all(t.degree == 0 and t.exponent == 0.0 for t in self.terms)

    def coefficient_count(self) -> int:
        """系数矩阵总数 Σ_j (K_j + 1)"""
        return sum(t.degree + 1 for t in self.terms)

    def equals(self, other: "ExpPolyKernel", tol: float = 1e-12) -> bool:
        """规范项列表逐元素在容差内相等"""
        if self.dim != other.dim or len(self.terms) != len(other.terms):
            return False
        for mine, theirs in zip(self.terms, other.terms):
            if not exponents_match(mine.exponent, theirs.exponent):
                return False
            if mine.coeffs.shape != theirs.coeffs.shape:
                return False
            if not np.allclose(mine.coeffs, theirs.coeffs, rtol=tol, atol=tol):
                return False
        return True

    def _check_square(self, x: Any) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape != (self.dim, self.dim):
            raise DimensionMismatchError(
                f"expected a {self.dim}x{self.dim} matrix, got {x.shape}"
            )
        return x

    def __repr__(self) -> str:
        parts = ", ".join(f"(a={t.exponent:g}, K={t.degree})" for t in self.terms)
        return f"ExpPolyKernel(dim={self.dim}, terms=[{parts}])"


def solve_g(kernel: ExpPolyKernel, index: int, tol: float = DEFAULT_G_TOL) -> np.ndarray:
    """
    求解条件 (ii) 中的 G_i：M̃(0) G_i = M̃^{(i)}(0)

    取最小范数最小二乘解；残差超过 tol·(1+|M̃^{(i)}(0)|) 时判定条件不适用。

    Args:
        kernel: 记忆核 M̃
        index: 导数阶数 i (≥ 1)
        tol: 相对残差容差

    Returns:
        n×n 矩阵 G_i

    Raises:
        ConditionInapplicableError: 方程不可解（M̃^{(i)}(0) 的列不在 M̃(0) 的列空间内）
    """
    if index < 1:
        raise ValueError(f"derivative index must be at least 1, got {index}")
    base = kernel.eval(0.0)
    target = kernel.derivative_at_zero(index)
    g, *_ = linalg.lstsq(base, target)
    residual = np.linalg.norm(base @ g - target)
    if residual > tol * (1.0 + np.linalg.norm(target)):
        raise ConditionInapplicableError(
            f"d^{index}M̃/dt^{index}(0) is not of the form M̃(0)G (residual {residual:.3e})",
            index=index,
        )
    return g


__all__ = [
    "MERGE_RTOL",
    "ZERO_ATOL",
    "DEFAULT_G_TOL",
    "KernelTerm",
    "ExpPolyKernel",
    "exponents_match",
    "solve_g",
]
