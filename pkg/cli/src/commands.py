"""
memoctrl-cli 命令行前端 - 工作流

每个命令只做计算并返回 Outcome，文件在全部计算成功后才由 Outcome.write 写出，
失败的运行不会留下任何结果文件。
"""

from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable

import numpy as np
import structlog
from pydantic import BaseModel, Field, TypeAdapter

from memoctrl import (
    AdjointSummary,
    ParabolicSummary,
    RankReport,
    SimulationSummary,
    Trajectory,
    assemble_system,
    check_all,
    check_augmented_kalman,
    check_condition_i,
    check_condition_ii,
    check_condition_iii,
    coverage_check,
    dual_march,
    estimate_observability_constant,
    fixed_window_comparison,
    memory_functional,
    memory_inertia,
    sine_profile,
    solve_adjoint,
    solve_forward,
    synthesize,
)
from memoctrl.parabolic import smallest_eigenvalue

from cli.src.config import (
    AdjointConfig,
    AppSettings,
    CheckRankConfig,
    ParabolicConfig,
    RunConfig,
    SimulateConfig,
    SynthesizeConfig,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4

rank_reports_adapter = TypeAdapter(dict[str, RankReport])


class ErrorReport(BaseModel):
    """失败运行在标准输出上的 JSON"""

    error: str = Field(..., description="异常类名")
    detail: str = Field(..., description="异常信息")


class RunRecord(BaseModel):
    """run.json 运行元数据，与结果文件分开存放"""

    command: str
    config_path: str
    version: str
    started_at: datetime
    finished_at: datetime
    exit_code: int
    outputs: list[str] = Field(default_factory=list)


class ObservabilityReport(BaseModel):
    """随机采样得到的可观测常数下界"""

    lower_bound: float
    samples: int
    seed: int
    worst_w_T: list[float]
    worst_z_T: list[float]


@dataclass
class Outcome:
    """
    一次运行的结果

    Attributes:
        documents: 文件名 -> JSON 文本
        tables: 文件名 -> 写成 CSV 的轨迹
        exit_code: 0 或 4（秩判据无结论）
    """

    documents: dict[str, str] = field(default_factory=dict)
    tables: dict[str, Trajectory] = field(default_factory=dict)
    exit_code: int = EXIT_OK

    @property
    def outputs(self) -> list[str]:
        return sorted([*self.documents, *self.tables])

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.documents.items():
            (out_dir / name).write_text(text + "\n", encoding="utf-8")
        for name, trajectory in self.tables.items():
            trajectory.to_csv(out_dir / name)


def _dump(model: BaseModel) -> str:
    return model.model_dump_json(indent=2)


def run_simulate(config: SimulateConfig, settings: AppSettings, base: Path) -> Outcome:
    sys = config.system.to_system(config.grid.T)
    y = solve_forward(sys, config.y0, None, config.grid.to_grid())
    summary = SimulationSummary.from_solution(y, memory_functional(sys.M_tilde, y))
    structlog.get_logger().info(f"simulated n={sys.n}: |y(T)|={summary.terminal_state_norm:.6g}")
    return Outcome(documents={"summary.json": _dump(summary)}, tables={"trajectory.csv": y})


def run_adjoint(config: AdjointConfig, settings: AppSettings, base: Path) -> Outcome:
    sys = config.system.to_system(config.grid.T)
    grid = config.grid.to_grid()
    if config.discrete:
        adjoint = dual_march(sys, config.w_T, config.z_T, grid)
        w, initial = adjoint.w, adjoint.initial
    else:
        w = solve_adjoint(sys, config.w_T, config.z_T, grid)
        initial = w.values[0]
    summary = AdjointSummary(
        T=grid.T,
        steps=grid.steps,
        initial_value=initial.tolist(),
        initial_norm=float(np.linalg.norm(initial)),
    )
    return Outcome(documents={"summary.json": _dump(summary)}, tables={"adjoint.csv": w})


def run_check_rank(config: CheckRankConfig, settings: AppSettings, base: Path) -> Outcome:
    sys = config.system.to_system(config.T)
    tol = config.tol if config.tol is not None else settings.RANK_TOL
    match config.condition:
        case "all":
            reports = check_all(sys, tol)
        case "i":
            reports = {"i": check_condition_i(sys, tol, config.max_blocks)}
        case "ii":
            reports = {"ii": check_condition_ii(sys, tol, config.max_blocks)}
        case "iii":
            reports = {"iii": check_condition_iii(sys, tol)}
        case "augmented":
            reports = {"augmented": check_augmented_kalman(sys, tol)}

    logger = structlog.get_logger()
    for name, report in reports.items():
        logger.info(f"condition {name}: {report.verdict} (rank {report.rank}/{report.target})")
    if config.condition == "all":
        text = rank_reports_adapter.dump_json(reports, indent=2).decode()
    else:
        text = _dump(reports[config.condition])
    inconclusive = any(report.verdict == "inconclusive" for report in reports.values())
    return Outcome(
        documents={"rank.json": text},
        exit_code=EXIT_INCONCLUSIVE if inconclusive else EXIT_OK,
    )


def _replay(config: SynthesizeConfig, base: Path) -> Outcome:
    sys = config.system.to_system(config.grid.T)
    path = Path(config.control_csv)
    if not path.is_absolute():
        path = base / path
    u = Trajectory.from_csv(path, dim=sys.m)
    y = solve_forward(sys, config.y0, u, config.grid.to_grid())
    summary = SimulationSummary.from_solution(y, memory_functional(sys.M_tilde, y))
    structlog.get_logger().info(f"replayed {path.name}: |y(T)|={summary.terminal_state_norm:.3e}")
    return Outcome(documents={"summary.json": _dump(summary)}, tables={"trajectory.csv": y})


def run_synthesize(config: SynthesizeConfig, settings: AppSettings, base: Path) -> Outcome:
    if config.control_csv is not None:
        return _replay(config, base)

    sys = config.system.to_system(config.grid.T)
    grid = config.grid.to_grid()
    cg_tol = config.cg_tol if config.cg_tol is not None else settings.CG_TOL
    result = synthesize(sys, config.y0, grid, config.epsilon, cg_tol, config.cg_max)
    outcome = Outcome(
        documents={"synthesis.json": _dump(result)},
        tables={"control.csv": result.control},
    )

    if config.inertia_extra_steps is not None:
        report = memory_inertia(
            sys, config.y0, grid, config.inertia_extra_steps, config.epsilon, cg_tol, config.cg_max
        )
        outcome.documents["inertia.json"] = _dump(report)

    if config.observability_samples is not None:
        estimate = estimate_observability_constant(sys, grid, config.observability_samples)
        outcome.documents["observability.json"] = _dump(
            ObservabilityReport(
                lower_bound=estimate.lower_bound,
                samples=estimate.samples,
                seed=0,
                worst_w_T=estimate.worst.w_T.tolist(),
                worst_z_T=estimate.worst.z_T.tolist(),
            )
        )
    return outcome


def run_parabolic(config: ParabolicConfig, settings: AppSettings, base: Path) -> Outcome:
    block = config.parabolic
    mesh = block.mesh()
    window = block.moving_window()
    kernel, kernel_tilde = block.kernels()
    grid = config.grid.to_grid()
    cg_tol = config.cg_tol if config.cg_tol is not None else settings.CG_TOL

    sys = assemble_system(mesh, window, kernel, block.variant, block.T, kernel_tilde)
    y0 = np.asarray(config.y0, dtype=float) if config.y0 is not None else sine_profile(mesh, config.mode)
    coverage = coverage_check(window, mesh, block.T)
    summary = ParabolicSummary(
        L=mesh.length,
        N=mesh.interior_nodes,
        h=mesh.h,
        T=block.T,
        steps=grid.steps,
        variant=block.variant,
        smallest_eigenvalue=smallest_eigenvalue(mesh),
        initial_norm=float(np.linalg.norm(y0)),
        coverage=coverage,
    )
    result = synthesize(sys, y0, grid, config.epsilon, cg_tol, config.cg_max)
    outcome = Outcome(
        documents={
            "system.json": _dump(summary),
            "coverage.json": _dump(coverage),
            "synthesis.json": _dump(result),
        },
        tables={"control.csv": result.control},
    )

    if config.compare_fixed:
        comparison = fixed_window_comparison(
            mesh, window, kernel, block.variant, block.T, y0, grid,
            config.epsilon, cg_tol, config.cg_max, kernel_tilde,
        )
        outcome.documents["comparison.json"] = _dump(comparison)
    return outcome


COMMANDS: dict[str, Callable[[RunConfig, AppSettings, Path], Outcome]] = {
    "simulate": run_simulate,
    "adjoint": run_adjoint,
    "check-rank": run_check_rank,
    "synthesize": run_synthesize,
    "parabolic": run_parabolic,
}


__all__ = [
    "EXIT_OK",
    "EXIT_INVALID",
    "EXIT_NUMERICAL",
    "EXIT_INCONCLUSIVE",
    "ErrorReport",
    "RunRecord",
    "ObservabilityReport",
    "Outcome",
    "run_simulate",
    "run_adjoint",
    "run_check_rank",
    "run_synthesize",
    "run_parabolic",
    "COMMANDS",
]
