import json
import textwrap

import pytest

from mabrl.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, final_ranking, main
from mabrl.config import ConfigError, load_config, load_scenario
from mabrl.controllers import ControllerKind


def write(path, text):
    path.write_text(textwrap.dedent(text).lstrip())
    return path


class TestLoadConfig:
    def test_defaults_from_empty(self):
        cfg = load_config(text="")
        assert cfg.controller is ControllerKind.MABRL_DSCIM and cfg.agent.ridge_lambda == 0.01

    def test_nested_sections(self):
        cfg = load_config(text="""
controller: SOTL
seeds: [1, 2]
ft_durations: [20, 10, 20, 10]
scenario: {rows: 2, cols: 4, side_rates: {w: 0.3}}
agent: {gamma: 0.5}
network: {k: 4, enh_activation: sigmoid}
""")
        assert cfg.controller is ControllerKind.SOTL and cfg.seed_list == [1, 2]
        assert cfg.ft_durations == (20, 10, 20, 10)
        assert cfg.scenario.n_intersections == 8 and cfg.scenario.side_rates == {"W": 0.3}
        assert cfg.agent.gamma == 0.5 and cfg.network.k == 4 and cfg.network.enh_activation == "sigmoid"

    def test_scenario_path_relative_to_config(self, tmp_path):
        (tmp_path / "sub").mkdir()
        write(tmp_path / "sub" / "grid.yaml", "rows: 1\ncols: 3\n")
        cfg_path = write(tmp_path / "exp.yaml", "scenario: sub/grid.yaml\n")
        assert load_config(cfg_path).scenario.cols == 3

    def test_overrides(self):
        cfg = load_config(text="agent: {gamma: 0.5}\n", overrides=["agent.gamma=0.25", "scenario.rows=2", "seeds=[4]"])
        assert cfg.agent.gamma == 0.25 and cfg.scenario.rows == 2 and cfg.seed_list == [4]

    def test_int_accepted_for_float(self):
        assert load_config(text="input_scale: 1\n").input_scale == 1.0

    @pytest.mark.parametrize("text, line, fragment", [
        ("episodes: 3\nagent:\n  gama: 0.9\n", 3, "unknown key 'agent.gama'"),
        ("episodes: 3\n\nnetwork:\n  k: 2.5\n", 4, "network.k: expected an integer"),
        ("controller: DQN\n", 1, "expected one of"),
        ("include_phase: yes please\n", 1, "expected true/false"),
        ("scenario:\n  rows: 1\n  turn_ratios: [0.5, 0.5]\n", 3, "expected 3 entries"),
        ("scenario:\n  rows: 0\n", 2, "at least one row"),
        ("agent:\n  gamma: 1.5\n", 2, "gamma"),
        ("episodes: [1\n", 2, "invalid YAML"),
    ])
    def test_errors_carry_line_numbers(self, tmp_path, text, line, fragment):
        path = write(tmp_path / "bad.yaml", text)
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert str(err.value).startswith(f"{path}:{line}:")
        assert fragment in str(err.value)

    def test_override_errors_name_the_flag(self):
        with pytest.raises(ConfigError, match=r"--set agent\.batch_size"):
            load_config(text="", overrides=["agent.batch_size=lots"])

    def test_override_needs_equals(self):
        with pytest.raises(ConfigError):
            load_config(text="", overrides=["agent.gamma"])

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ConfigError):
            load_config(text="- 1\n- 2\n")


class TestScenarioFile:
    def test_explicit_vehicles(self, tmp_path):
        path = write(tmp_path / "s.yaml", """
            rows: 1
            cols: 3
            vehicles:
              - {spawn_time: 0, route: [0, 1, 2], enter_from: W, exit_to: E}
              - {spawn_time: 5, route: [2], enter_from: N, exit_to: S}
        """)
        assert len(load_scenario(path).vehicles) == 2

    def test_bad_vehicle_reports_its_line(self, tmp_path):
        path = write(tmp_path / "s.yaml", """
            rows: 1
            cols: 3
            vehicles:
              - {spawn_time: 0, route: [0, 1, 2], enter_from: W, exit_to: E}
              - {spawn_time: 0, route: [0, 2], enter_from: W, exit_to: E}
        """)
        with pytest.raises(ConfigError, match=rf"^{path}:5: vehicles\.1"):
            load_scenario(path)

    def test_missing_vehicle_field(self, tmp_path):
        path = write(tmp_path / "s.yaml", "vehicles:\n  - {spawn_time: 0, route: [0]}\n")
        with pytest.raises(ConfigError, match="missing"):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_scenario(tmp_path / "nope.yaml")


class TestCLI:
    def config(self, tmp_path):
        return write(tmp_path / "exp.yaml", """
            controller: FT
            episodes: 2
            scenario: {rows: 1, cols: 2, episode_seconds: 100}
            network: {l_m: 2, k: 2, l_e: 3, q: 2}
        """)

    def test_run_and_summarize(self, tmp_path, capsys):
        cfg = self.config(tmp_path)
        assert main(["run", "-c", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"]) == EXIT_OK
        assert "FT" in capsys.readouterr().out
        assert main(["summarize", str(tmp_path / "o"), "--json", "--burn-in", "0"]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert list(summary["runs"]["FT"]) == ["3"]

    def test_compare_ranks_arms(self, tmp_path, capsys):
        cfg = self.config(tmp_path)
        code = main(["compare", "-c", str(cfg), "--arms", "FT,SOTL,MABRL_ORIGINAL", "--out", str(tmp_path / "o"),
                     "--last", "1"])
        assert code == EXIT_OK
        assert "last 1 episodes" in capsys.readouterr().out
        ranking = final_ranking(tmp_path / "o" / "episodes.csv", 1)
        assert set(ranking) == {"FT", "SOTL", "MABRL_ORIGINAL"}

    def test_controller_flag_overrides_config(self, tmp_path, capsys):
        assert main(["run", "-c", str(self.config(tmp_path)), "--controller", "SOTL", "--out", str(tmp_path)]) == 0
        assert "SOTL" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [
        ["run", "--set", "episodes=0"],
        ["run", "--set", "agent.gamma=two"],
        ["run", "-c", "/nonexistent/exp.yaml"],
        ["compare", "--arms", "FT,BOGUS"],
        ["summarize", "/nonexistent/metrics.csv"],
        ["frobnicate"],
    ])
    def test_config_errors_exit_2(self, argv, capsys):
        assert main(argv) == EXIT_CONFIG

    def test_runtime_errors_exit_3(self, tmp_path, capsys):
        bad = tmp_path / "metrics.csv"
        bad.write_text("arm,seed\nFT,notanint\n")
        assert main(["summarize", str(bad)]) == EXIT_RUNTIME
        assert "error" in capsys.readouterr().err


def test_shipped_example_config_matches_acceptance_setup():
    from pathlib import Path

    from test_acceptance import EXPERIMENT

    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "experiment.yaml")
    assert cfg.scenario == EXPERIMENT.scenario
    assert cfg.agent == EXPERIMENT.agent and cfg.network == EXPERIMENT.network
    assert cfg.episodes == EXPERIMENT.episodes and cfg.seed_list == [0, 1, 2, 3, 4]
