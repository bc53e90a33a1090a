"""
memoctrl-cli - 命令行入口测试
"""

import json
import math
from pathlib import Path

import pytest
from pydantic import ValidationError

from memoctrl.logger import reset_logger
from cli.src.config import AppSettings, get_app_settings, load_run_config
from cli.src.logger_setup import custom_processor_merge_callsite
from cli.src.main import main

SCALAR_ONE = [{"a": 0.0, "coeffs": [1.0]}]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv("MEMOCTRL_LOG", raising=False)
    get_app_settings.cache_clear()
    yield
    get_app_settings.cache_clear()
    reset_logger()


def write_config(directory: Path, payload: dict, name: str = "config.json") -> Path:
    path = directory / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def run(command: str, config: Path, out_dir: Path) -> int:
    return main([command, "--config", str(config), "--out-dir", str(out_dir)])


def last_json_line(text: str) -> dict:
    return json.loads(text.strip().splitlines()[-1])


def scalar_system(A=0.0, M=None, M_tilde=None, B=1.0) -> dict:
    return {"A": [[A]], "M": M or [], "M_tilde": M_tilde or [], "B": [[B]]}


@pytest.fixture
def cosh_config(tmp_path) -> Path:
    """y' = ∫y，y(0) = 1，解为 cosh t"""
    return write_config(
        tmp_path,
        {
            "command": "simulate",
            "system": scalar_system(M=SCALAR_ONE, B=0.0),
            "grid": {"T": 1.0, "steps": 1000},
            "y0": [1.0],
        },
    )


@pytest.fixture
def control_config(tmp_path) -> dict:
    """A = M = 0，M̃ = 1，精确控制为 u = 6t - 4"""
    return {
        "command": "synthesize",
        "system": scalar_system(M_tilde=SCALAR_ONE),
        "grid": {"T": 1.0, "steps": 1000},
        "y0": [1.0],
        "epsilon": 1e-10,
    }


class TestSimulate:
    """simulate 命令测试"""

    def test_cosh_terminal_value(self, cosh_config, tmp_path):
        """测试 cosh 解析解的终值"""
        out = tmp_path / "out"

        assert run("simulate", cosh_config, out) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["terminal_value"][0] == pytest.approx(math.cosh(1.0), abs=1e-5)
        assert summary["steps"] == 1000

    def test_trajectory_csv(self, cosh_config, tmp_path):
        """测试轨迹 CSV 的表头与行数"""
        out = tmp_path / "out"
        run("simulate", cosh_config, out)
        lines = (out / "trajectory.csv").read_text().splitlines()

        assert lines[0] == "t,v0"
        assert len(lines) == 1002

    def test_run_record(self, cosh_config, tmp_path):
        """测试 run.json 记录命令、版本和输出文件"""
        out = tmp_path / "out"
        run("simulate", cosh_config, out)
        record = json.loads((out / "run.json").read_text())

        assert record["command"] == "simulate"
        assert record["version"] == "0.1.0"
        assert record["exit_code"] == 0
        assert record["outputs"] == ["summary.json", "trajectory.csv"]

    def test_outputs_are_deterministic(self, cosh_config, tmp_path):
        """测试相同配置两次运行的结果文件逐字节一致"""
        first, second = tmp_path / "first", tmp_path / "second"
        run("simulate", cosh_config, first)
        run("simulate", cosh_config, second)

        for name in ("summary.json", "trajectory.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()


class TestErrors:
    """错误处理与退出码测试"""

    def test_mismatched_B(self, tmp_path, capsys):
        """测试 B 行数不符时退出码 2 且不写任何文件"""
        config = write_config(
            tmp_path,
            {
                "command": "simulate",
                "system": {"A": [[0.0]], "B": [[1.0], [0.0]]},
                "grid": {"T": 1.0, "steps": 10},
                "y0": [1.0],
            },
        )
        out = tmp_path / "out"

        assert run("simulate", config, out) == 2
        assert not out.exists()
        error = last_json_line(capsys.readouterr().out)
        assert error["error"] == "ValidationError"
        assert "B must have 1 rows" in error["detail"]

    def test_kernel_dimension_mismatch(self, tmp_path, capsys):
        """测试核函数矩阵阶数与 A 不符时退出码 2"""
        config = write_config(
            tmp_path,
            {
                "command": "simulate",
                "system": {"A": [[0.0]], "M": [{"coeffs": [[[1.0, 0.0], [0.0, 1.0]]]}], "B": [[1.0]]},
                "grid": {"T": 1.0, "steps": 10},
                "y0": [1.0],
            },
        )

        assert run("simulate", config, tmp_path / "out") == 2

    def test_unknown_command_field(self, tmp_path, capsys):
        """测试未知 command 被拒绝"""
        config = write_config(tmp_path, {"command": "plot"})

        assert run("simulate", config, tmp_path / "out") == 2
        assert last_json_line(capsys.readouterr().out)["error"] == "ValidationError"

    def test_command_mismatch(self, cosh_config, tmp_path, capsys):
        """测试配置中的 command 与调用的子命令不一致"""
        assert run("synthesize", cosh_config, tmp_path / "out") == 2
        assert last_json_line(capsys.readouterr().out)["error"] == "ConfigurationError"

    def test_missing_config(self, tmp_path, capsys):
        """测试配置文件不存在"""
        assert run("simulate", tmp_path / "absent.json", tmp_path / "out") == 2
        assert last_json_line(capsys.readouterr().out)["error"] == "FileNotFoundError"

    def test_singular_step_exits_3(self, tmp_path, capsys):
        """测试单步矩阵奇异时退出码 3 且不写文件"""
        config = write_config(
            tmp_path,
            {
                "command": "simulate",
                "system": scalar_system(A=20.0),
                "grid": {"T": 1.0, "steps": 10},
                "y0": [1.0],
            },
        )
        out = tmp_path / "out"

        assert run("simulate", config, out) == 3
        assert not out.exists()
        assert last_json_line(capsys.readouterr().out)["error"] == "SingularStepError"

    def test_missing_config_option(self):
        """测试缺少 --config 时 argparse 以 2 退出"""
        with pytest.raises(SystemExit) as info:
            main(["simulate"])
        assert info.value.code == 2


class TestAdjoint:
    """adjoint 命令测试"""

    @pytest.mark.parametrize("discrete", [False, True])
    def test_exponential_backward(self, tmp_path, discrete):
        """测试 -w' = w，w(1) = 1 时 w(0) ≈ e"""
        config = write_config(
            tmp_path,
            {
                "command": "adjoint",
                "system": scalar_system(A=1.0),
                "grid": {"T": 1.0, "steps": 1000},
                "w_T": [1.0],
                "z_T": [0.0],
                "discrete": discrete,
            },
        )
        out = tmp_path / "out"

        assert run("adjoint", config, out) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["initial_value"][0] == pytest.approx(math.e, rel=1e-5)
        assert (out / "adjoint.csv").exists()


class TestCheckRank:
    """check-rank 命令测试"""

    def test_fibonacci_condition_iii(self, tmp_path):
        """测试 A = M = M̃ = B = 1 时条件 iii 成立且秩为 2"""
        config = write_config(
            tmp_path,
            {
                "command": "check-rank",
                "system": scalar_system(A=1.0, M=SCALAR_ONE, M_tilde=SCALAR_ONE),
                "condition": "iii",
            },
        )
        out = tmp_path / "out"

        assert run("check-rank", config, out) == 0
        report = json.loads((out / "rank.json").read_text())
        assert report["verdict"] == "holds"
        assert report["rank"] == 2
        assert "matrix" not in report

    def test_fails_exits_0(self, tmp_path):
        """测试 B = 0 时所有判据不成立，但退出码仍为 0"""
        config = write_config(
            tmp_path,
            {
                "command": "check-rank",
                "system": scalar_system(A=1.0, M=SCALAR_ONE, M_tilde=SCALAR_ONE, B=0.0),
            },
        )
        out = tmp_path / "out"

        assert run("check-rank", config, out) == 0
        reports = json.loads((out / "rank.json").read_text())
        assert set(reports) == {"i", "ii", "iii", "augmented"}
        assert all(report["verdict"] == "fails" for report in reports.values())

    def test_inconclusive_exits_4(self, tmp_path):
        """测试块数上限先于封闭触发时退出码 4，报告照常写出"""
        config = write_config(
            tmp_path,
            {
                "command": "check-rank",
                "system": {
                    "A": [[0.5, 0.0], [0.0, -0.3]],
                    "M": [{"coeffs": [[[0.2, 0.0], [0.0, 0.4]]]}],
                    "M_tilde": [{"coeffs": [[[1.5, 0.0], [0.0, 1.2]]]}],
                    "B": [[1.0], [0.0]],
                },
                "condition": "i",
                "max_blocks": 2,
            },
        )
        out = tmp_path / "out"

        assert run("check-rank", config, out) == 4
        report = json.loads((out / "rank.json").read_text())
        assert report["verdict"] == "inconclusive"
        assert json.loads((out / "run.json").read_text())["exit_code"] == 4

    def test_inapplicable_condition_exits_2(self, tmp_path, capsys):
        """测试 M̃'(0) 不在 M̃(0) 值域内、条件 ii 不适用时退出码 2"""
        config = write_config(
            tmp_path,
            {
                "command": "check-rank",
                "system": {
                    "A": [[0.0, 0.0], [0.0, 0.0]],
                    "M_tilde": [{"coeffs": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]}],
                    "B": [[1.0], [1.0]],
                },
                "condition": "ii",
            },
        )

        assert run("check-rank", config, tmp_path / "out") == 2
        assert last_json_line(capsys.readouterr().out)["error"] == "ConditionInapplicableError"


class TestSynthesize:
    """synthesize 命令测试"""

    def test_exact_control(self, tmp_path, control_config):
        """测试合成结果与控制 CSV"""
        out = tmp_path / "out"

        assert run("synthesize", write_config(tmp_path, control_config), out) == 0
        result = json.loads((out / "synthesis.json").read_text())
        assert result["terminal_state_norm"] <= 1e-6
        assert result["memory_norm"] <= 1e-6
        assert result["cost"] == pytest.approx(4.0, rel=1e-2)
        assert "control" not in result
        assert (out / "control.csv").read_text().splitlines()[0] == "t,v0"

    def test_control_replay(self, tmp_path, control_config):
        """测试写出的控制重新读入后得到同样的受控解"""
        out = tmp_path / "out"
        run("synthesize", write_config(tmp_path, control_config), out)
        result = json.loads((out / "synthesis.json").read_text())

        replay = dict(control_config, control_csv=str(out / "control.csv"))
        replay_out = tmp_path / "replay"
        assert run("synthesize", write_config(tmp_path, replay, "replay.json"), replay_out) == 0
        summary = json.loads((replay_out / "summary.json").read_text())
        assert abs(summary["terminal_state_norm"] - result["terminal_state_norm"]) <= 1e-15
        assert abs(summary["memory_norm"] - result["memory_norm"]) <= 1e-15

    def test_replay_relative_to_config(self, tmp_path, control_config):
        """测试相对路径的控制 CSV 相对于配置文件所在目录解析"""
        run("synthesize", write_config(tmp_path, control_config), tmp_path)
        replay = dict(control_config, control_csv="control.csv")

        assert run("synthesize", write_config(tmp_path, replay, "replay.json"), tmp_path / "replay") == 0

    def test_replay_grid_mismatch(self, tmp_path, control_config, capsys):
        """测试控制网格与配置网格不一致时退出码 2"""
        run("synthesize", write_config(tmp_path, control_config), tmp_path)
        replay = dict(control_config, grid={"T": 1.0, "steps": 500}, control_csv="control.csv")

        assert run("synthesize", write_config(tmp_path, replay, "replay.json"), tmp_path / "replay") == 2
        assert last_json_line(capsys.readouterr().out)["error"] == "GridError"

    def test_replay_malformed_csv(self, tmp_path, control_config, capsys):
        """测试控制 CSV 数据行损坏时退出码 2 并输出错误 JSON"""
        (tmp_path / "control.csv").write_text("t,v0\n0,1\n0.5,oops\n1,0\n")
        replay = dict(control_config, control_csv="control.csv")
        out = tmp_path / "replay"

        assert run("synthesize", write_config(tmp_path, replay, "replay.json"), out) == 2
        assert last_json_line(capsys.readouterr().out)["error"] == "ConfigurationError"
        assert not out.exists()

    def test_inertia_report(self, tmp_path, control_config):
        """测试记忆惯性演示：只压状态的控制在 T 之后离开零点"""
        control_config["system"]["M"] = SCALAR_ONE
        control_config["inertia_extra_steps"] = 200
        out = tmp_path / "out"

        assert run("synthesize", write_config(tmp_path, control_config), out) == 0
        report = json.loads((out / "inertia.json").read_text())
        assert report["extra_time"] == pytest.approx(0.2)
        assert report["state_only"]["memory_norm"] >= 0.1
        assert report["state_only"]["extended_state_norm"] >= 0.01
        assert report["memory_type"]["extended_state_norm"] <= 1e-6

    def test_observability_report(self, tmp_path, control_config):
        """测试可观测常数下界报告"""
        control_config["grid"]["steps"] = 100
        control_config["observability_samples"] = 4
        out = tmp_path / "out"

        assert run("synthesize", write_config(tmp_path, control_config), out) == 0
        report = json.loads((out / "observability.json").read_text())
        assert report["samples"] == 4
        assert report["lower_bound"] > 0
        assert len(report["worst_w_T"]) == len(report["worst_z_T"]) == 1

    def test_replay_excludes_inertia(self, tmp_path, control_config):
        """测试重放模式不能与惯性演示同时使用"""
        control_config["control_csv"] = "control.csv"
        control_config["inertia_extra_steps"] = 10

        assert run("synthesize", write_config(tmp_path, control_config), tmp_path / "out") == 2


class TestParabolic:
    """parabolic 命令测试"""

    @pytest.fixture
    def parabolic_config(self) -> dict:
        return {
            "command": "parabolic",
            "parabolic": {
                "L": 1.0,
                "N": 8,
                "T": 0.5,
                "window": {"c0": 0.1, "c1": 0.9, "r": 0.2},
                "kernel": SCALAR_ONE,
                "variant": "state-memory",
            },
            "grid": {"T": 0.5, "steps": 50},
            "epsilon": 1e-6,
            "cg_max": 30,
            "compare_fixed": True,
        }

    def test_outputs(self, tmp_path, parabolic_config):
        """测试系统摘要、覆盖报告、合成结果与固定窗口对比"""
        out = tmp_path / "out"

        assert run("parabolic", write_config(tmp_path, parabolic_config), out) == 0
        summary = json.loads((out / "system.json").read_text())
        assert summary["N"] == 8
        assert summary["h"] == pytest.approx(1.0 / 9.0)
        assert summary["coverage"]["covered"] is True
        assert json.loads((out / "coverage.json").read_text())["covered"] is True
        assert "residual_ratio" in json.loads((out / "comparison.json").read_text())
        header = (out / "control.csv").read_text().splitlines()[0]
        assert header == "t," + ",".join(f"v{i}" for i in range(8))

    def test_horizon_mismatch(self, tmp_path, parabolic_config, capsys):
        """测试 grid.T 与 parabolic.T 不一致时退出码 2"""
        parabolic_config["grid"]["T"] = 1.0

        assert run("parabolic", write_config(tmp_path, parabolic_config), tmp_path / "out") == 2
        assert "differs from parabolic.T" in last_json_line(capsys.readouterr().out)["detail"]

    def test_matrix_kernel_rejected(self, tmp_path, parabolic_config):
        """测试热方程只接受标量核"""
        parabolic_config["parabolic"]["kernel"] = [{"coeffs": [[[1.0, 0.0], [0.0, 1.0]]]}]

        assert run("parabolic", write_config(tmp_path, parabolic_config), tmp_path / "out") == 2

    def test_default_iteration_cap(self, tmp_path, parabolic_config):
        """测试未给出 cg_max 时 CG 上限为 500，与网格规模无关"""
        del parabolic_config["cg_max"]
        config = load_run_config(write_config(tmp_path, parabolic_config))

        assert config.cg_max == 500

    def test_iteration_cap_applied(self, tmp_path, parabolic_config):
        """测试 CG 在达到 cg_max 时停止"""
        parabolic_config.update(cg_max=5, cg_tol=1e-300, compare_fixed=False)
        out = tmp_path / "out"

        assert run("parabolic", write_config(tmp_path, parabolic_config), out) == 0
        synthesis = json.loads((out / "synthesis.json").read_text())
        assert synthesis["iterations"] == 5
        assert synthesis["converged"] is False


class TestSchema:
    """schema 命令测试"""

    def test_schema_lists_commands(self, capsys):
        """测试 schema 的判别字段覆盖全部命令"""
        assert main(["schema"]) == 0
        schema = json.loads(capsys.readouterr().out)

        assert schema["discriminator"]["propertyName"] == "command"
        assert set(schema["discriminator"]["mapping"]) == {
            "simulate",
            "adjoint",
            "check-rank",
            "synthesize",
            "parabolic",
        }

    def test_schema_file(self, tmp_path):
        """测试 --out-dir 时同时写出 schema.json"""
        assert main(["schema", "--out-dir", str(tmp_path)]) == 0
        assert "$defs" in json.loads((tmp_path / "schema.json").read_text())


class TestSettings:
    """AppSettings 测试"""

    def test_defaults(self):
        """测试默认值"""
        settings = AppSettings()

        assert settings.LOG == "info"
        assert settings.RANK_TOL == 1e-12
        assert settings.CG_TOL == 1e-10

    def test_log_level_from_environment(self, monkeypatch):
        """测试 MEMOCTRL_LOG 环境变量"""
        monkeypatch.setenv("MEMOCTRL_LOG", "debug")

        assert AppSettings().LOG == "debug"

    def test_invalid_log_level(self, monkeypatch):
        """测试非法日志级别被拒绝"""
        monkeypatch.setenv("MEMOCTRL_LOG", "verbose")

        with pytest.raises(ValidationError):
            AppSettings()

    def test_invalid_log_level_exits_2(self, monkeypatch, cosh_config, tmp_path, capsys):
        """测试非法日志级别时命令以 2 退出"""
        monkeypatch.setenv("MEMOCTRL_LOG", "verbose")

        assert run("simulate", cosh_config, tmp_path / "out") == 2
        assert last_json_line(capsys.readouterr().out)["error"] == "ValidationError"

    def test_settings_are_cached(self):
        """测试 get_app_settings 返回同一实例"""
        assert get_app_settings() is get_app_settings()


class TestLoggerSetup:
    """日志处理器测试"""

    def test_merge_callsite(self):
        """测试调用位置字段合并为一个字段"""
        event = {"event": "x", "module": "hum", "filename": "hum.py", "func_name": "synthesize", "lineno": 42}
        merged = custom_processor_merge_callsite(None, "info", event)

        assert merged == {"event": "x", "merged_callsite": "hum/hum.py:synthesize:42"}

    def test_partial_callsite_untouched(self):
        """测试字段不全时原样返回"""
        event = {"event": "x", "module": "hum"}

        assert custom_processor_merge_callsite(None, "info", dict(event)) == event
