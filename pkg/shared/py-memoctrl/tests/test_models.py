"""
memoctrl - 结果模型测试

对 RankReport、SynthesisResult、CoverageReport 等模型的校验与 JSON 输出进行测试。
"""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from memoctrl import (
    CoverageReport,
    ExpPolyKernel,
    KernelTermLiteral,
    RankReport,
    SimulationSummary,
    SynthesisResult,
    TimeGrid,
    Trajectory,
    WindowComparison,
)


class TestKernelTermLiteral:
    """KernelTermLiteral 模型测试"""

    def test_scalar_shorthand(self):
        """测试标量简写"""
        term = KernelTermLiteral(a=2.0, coeffs=[1.0, 3.0])

        assert term.a == 2.0
        assert term.coeffs == [1.0, 3.0]

    def test_exponent_defaults_to_zero(self):
        """测试指数缺省为 0"""
        assert KernelTermLiteral(coeffs=[1.0]).a == 0.0

    def test_matrix_coefficients(self):
        """测试矩阵系数可以交给 ExpPolyKernel.from_literal"""
        term = KernelTermLiteral(a=-1.0, coeffs=[[[1.0, 0.0], [0.0, 2.0]]])
        kernel = ExpPolyKernel.from_literal([term.model_dump()])

        assert kernel.dim == 2
        np.testing.assert_allclose(kernel.eval(0.0), [[1.0, 0.0], [0.0, 2.0]])

    def test_non_square_rejected(self):
        """测试非方阵系数被拒绝"""
        with pytest.raises(ValidationError):
            KernelTermLiteral(coeffs=[[[1.0, 2.0], [3.0]]])

    def test_missing_coeffs_rejected(self):
        """测试缺少 coeffs 时抛出验证错误"""
        with pytest.raises(ValidationError):
            KernelTermLiteral(a=1.0)  # type: ignore[call-arg]


class TestRankReport:
    """RankReport 模型测试"""

    def make(self, **overrides) -> RankReport:
        fields = dict(
            condition="iii",
            verdict="holds",
            rank=2,
            target=2,
            blocks_used=4,
            stop_reason="fixed 2n+2 block columns",
            matrix=np.eye(2),
        )
        fields.update(overrides)
        return RankReport(**fields)

    def test_holds(self):
        """测试满秩报告"""
        report = self.make()

        assert report.holds
        assert report.necessary_too is None

    def test_verdict_must_match_rank(self):
        """测试 holds 与 rank == target 不一致时报错"""
        with pytest.raises(ValidationError):
            self.make(rank=1)
        with pytest.raises(ValidationError):
            self.make(verdict="fails")

    def test_condition_iii_never_inconclusive(self):
        """测试条件 (iii) 不允许 inconclusive"""
        with pytest.raises(ValidationError):
            self.make(verdict="inconclusive", rank=1)

    def test_inconclusive_allowed_for_condition_i(self):
        """测试条件 (i) 可以是 inconclusive"""
        report = self.make(condition="i", verdict="inconclusive", rank=1)

        assert not report.holds

    def test_unknown_condition_rejected(self):
        """测试未知判据编号被拒绝"""
        with pytest.raises(ValidationError):
            self.make(condition="iv")

    def test_matrix_excluded_from_json(self):
        """测试拼接矩阵不进入 JSON"""
        data = json.loads(self.make().model_dump_json())

        assert "matrix" not in data
        assert data["verdict"] == "holds"
        assert data["rank"] == 2


class TestSynthesisResult:
    """SynthesisResult 模型测试"""

    def make(self, **overrides) -> SynthesisResult:
        fields = dict(
            terminal_state_norm=1e-9,
            memory_norm=2e-9,
            cost=4.0,
            iterations=3,
            epsilon=1e-10,
            cg_tol=1e-10,
            converged=True,
            residual_history=[1e-2, 1e-6, 1e-11],
        )
        fields.update(overrides)
        return SynthesisResult(**fields)

    def test_converged_history(self):
        """测试收敛结果"""
        result = self.make()

        assert result.residuals_below(1e-8)
        assert not result.residuals_below(1.5e-9)

    def test_converged_requires_small_final_residual(self):
        """测试 converged 时最后一次残差必须不超过 cg_tol"""
        with pytest.raises(ValidationError):
            self.make(residual_history=[1e-2, 1e-6])

    def test_not_converged_accepts_any_history(self):
        """测试未收敛时残差历史不受限制"""
        assert not self.make(converged=False, residual_history=[1e-2]).converged

    @pytest.mark.parametrize("field", ["cost", "terminal_state_norm", "memory_norm"])
    def test_norms_are_non_negative(self, field):
        """测试范数与代价非负"""
        with pytest.raises(ValidationError):
            self.make(**{field: -1.0})

    def test_epsilon_must_be_positive(self):
        """测试正则化参数必须为正"""
        with pytest.raises(ValidationError):
            self.make(epsilon=0.0)

    def test_control_excluded_from_json(self):
        """测试控制轨迹不进入 JSON"""
        control = Trajectory.zeros(TimeGrid(1.0, 4), 1)
        data = json.loads(self.make(control=control).model_dump_json())

        assert "control" not in data
        assert data["cost"] == 4.0
        assert data["residual_history"] == [1e-2, 1e-6, 1e-11]


class TestSimulationSummary:
    """SimulationSummary 模型测试"""

    def test_from_solution(self):
        """测试由轨迹与记忆泛函构造摘要"""
        y = Trajectory(TimeGrid(1.0, 2), [[1.0, 0.0], [0.5, 0.5], [3.0, 4.0]])
        summary = SimulationSummary.from_solution(y, np.array([0.0, 2.0]))

        assert summary.terminal_value == [3.0, 4.0]
        assert summary.terminal_state_norm == 5.0
        assert summary.memory_norm == 2.0
        assert summary.steps == 2


class TestCoverageReport:
    """CoverageReport 模型测试"""

    def test_covered_without_gaps(self):
        """测试覆盖时没有未覆盖区间"""
        report = CoverageReport(covered=True, swept=(-0.1, 1.1))

        assert report.uncovered == []

    def test_flag_must_match_gaps(self):
        """测试 covered 与未覆盖区间不一致时报错"""
        with pytest.raises(ValidationError):
            CoverageReport(covered=True, swept=(0.05, 0.95), uncovered=[(0.0, 0.05)])
        with pytest.raises(ValidationError):
            CoverageReport(covered=False, swept=(-0.1, 1.1))


class TestWindowComparison:
    """WindowComparison 模型测试"""

    def test_residual_ratio(self):
        """测试残差比取两个残差中较大者之比"""
        comparison = WindowComparison(
            moving_terminal_norm=1e-4,
            moving_memory_norm=2e-4,
            fixed_terminal_norm=5e-3,
            fixed_memory_norm=1e-3,
            fixed_center=0.5,
        )

        assert comparison.residual_ratio == pytest.approx(25.0)
        assert json.loads(comparison.model_dump_json())["residual_ratio"] == pytest.approx(25.0)

    def test_exact_moving_control(self):
        """测试移动窗口残差为零时比值为 ∞"""
        comparison = WindowComparison(
            moving_terminal_norm=0.0,
            moving_memory_norm=0.0,
            fixed_terminal_norm=1e-3,
            fixed_memory_norm=1e-3,
            fixed_center=0.5,
        )

        assert comparison.residual_ratio == float("inf")
