import json

import numpy as np
import pytest
import yaml

from resilient_marl.cli import check_graph, main, run_experiment, run_sweep
from resilient_marl.config import (
    ConfigError,
    build_simulation,
    config_from_dict,
    parse_config,
)
from resilient_marl.engine import StepSizeSchedule
from resilient_marl.mdp import generate_random_mdp

MINIMAL = """
n_agents: 3
rounds: 50
mdp:
  n_states: 3
  actions_per_agent: 2
graph:
  topology: ring
"""


def small_config(**overrides):
    doc = yaml.safe_load(MINIMAL)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key].update(value)
        else:
            doc[key] = value
    return config_from_dict(doc)


class TestParseConfig:
    def test_minimal_fills_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.seed == 0
        assert cfg.trim_f == 0
        assert cfg.log_interval == 100
        assert cfg.features.kind == "tabular"
        assert cfg.critic_step == StepSizeSchedule.polynomial(1.0, 0.65)
        assert cfg.actor_step == StepSizeSchedule.polynomial(1.0, 0.85)
        assert cfg.adversaries is None
        assert cfg.record_trims is True
        assert cfg.mdp.reward_range == (0.0, 4.0)

    def test_missing_graph(self):
        doc = yaml.safe_load(MINIMAL)
        del doc["graph"]
        with pytest.raises(ConfigError, match="graph"):
            config_from_dict(doc)

    def test_unknown_strategy_lists_valid(self):
        with pytest.raises(ConfigError, match="wormhole") as err:
            small_config(adversaries={"count": 1, "strategy": "wormhole"})
        assert "constant" in str(err.value)

    def test_unknown_top_level_key(self):
        doc = yaml.safe_load(MINIMAL)
        doc["rounds_limit"] = 3
        with pytest.raises(ConfigError, match="rounds_limit"):
            config_from_dict(doc)

    def test_inconsistent_adversary_ids(self):
        with pytest.raises(ConfigError, match="adversaries.ids"):
            small_config(adversaries={"ids": [7], "strategy": "selfish"})

    def test_error_paths_are_dotted(self):
        with pytest.raises(ConfigError, match=r"mdp\.n_states"):
            small_config(mdp={"n_states": 1})
        with pytest.raises(ConfigError, match=r"graph\.topology"):
            small_config(graph={"topology": "moebius"})
        with pytest.raises(ConfigError, match=r"critic_step"):
            small_config(critic_step={"kind": "constant", "scale": 2.0})

    def test_topology_specific_keys_rejected(self):
        with pytest.raises(ConfigError, match="edges/phases"):
            small_config(graph={"topology": "ring", "edges": [[0, 1]]})
        with pytest.raises(ConfigError, match="p/seed"):
            small_config(graph={"topology": "complete", "p": 0.5})

    def test_round_trip_identity(self):
        cfg = small_config(
            trim_f=1,
            adversaries={"ids": [0], "strategy": "drift",
                         "params": {"start": 0.5, "rate": 0.01}, "enforce_f_local": False},
            features={"kind": "projection", "dim": 4, "seed": 9},
            early_stop={"disagreement": 1e-4, "actor_update": 1e-6, "patience": 5},
        )
        again = parse_config(cfg.to_yaml())
        assert again == cfg

    def test_unparseable_document(self):
        with pytest.raises(ConfigError, match="unparseable"):
            parse_config("n_agents: [unclosed")

    def test_joint_action_cap(self):
        with pytest.raises(ConfigError, match="cap"):
            small_config(n_agents=13, mdp={"n_states": 3, "actions_per_agent": 2})


class TestBuildSimulation:
    def test_minimal_builds(self):
        sim = build_simulation(small_config())
        assert sim.mdp.n_agents == 3
        assert sim.graph.n_nodes == 3
        assert sim.features.dim == sim.mdp.n_states * sim.mdp.n_joint_actions

    def test_mdp_seed_defaults_to_master(self):
        a = build_simulation(small_config(seed=5))
        b = build_simulation(small_config(seed=5))
        c = build_simulation(small_config(seed=6))
        assert np.array_equal(a.mdp.transition, b.mdp.transition)
        assert not np.array_equal(a.mdp.transition, c.mdp.transition)

    def _file_config(self, path):
        doc = yaml.safe_load(MINIMAL)
        doc["mdp"] = {"kind": "file", "path": str(path)}
        return config_from_dict(doc)

    def test_mdp_from_file(self, tmp_path):
        mdp = generate_random_mdp(3, 3, 2, (0.0, 1.0), seed=3)
        path = tmp_path / "model.json"
        mdp.save(path)
        sim = build_simulation(self._file_config(path))
        assert np.array_equal(sim.mdp.transition, mdp.transition)

    def test_mdp_file_agent_mismatch(self, tmp_path):
        mdp = generate_random_mdp(2, 3, 2, (0.0, 1.0), seed=3)
        path = tmp_path / "model.json"
        mdp.save(path)
        with pytest.raises(ConfigError, match="agents"):
            build_simulation(self._file_config(path))

    def test_random_placement_is_f_local_and_seeded(self):
        cfg = small_config(
            n_agents=6,
            trim_f=1,
            adversaries={"count": 1, "strategy": "constant", "params": {"value": 2.0}},
        )
        a = build_simulation(cfg).graph.adversary_set
        b = build_simulation(cfg).graph.adversary_set
        assert a == b and len(a) == 1

    def test_non_local_explicit_ids_rejected(self):
        cfg = small_config(
            n_agents=4,
            trim_f=1,
            graph={"topology": "complete"},
            adversaries={"ids": [0, 1], "strategy": "constant", "params": {"value": 1.0}},
        )
        with pytest.raises(ConfigError, match="local"):
            build_simulation(cfg)

    def test_disconnected_graph_rejected(self):
        cfg_doc = yaml.safe_load(MINIMAL)
        cfg_doc["graph"] = {"topology": "edges", "edges": [[0, 1]]}
        with pytest.raises(ConfigError, match="disconnected"):
            build_simulation(config_from_dict(cfg_doc))


class TestRunExperiment:
    def test_artifacts_written_and_parse_back(self, tmp_path):
        cfg = small_config(rounds=40, log_interval=20)
        summary = run_experiment(cfg, tmp_path / "out", quiet=True)
        records = [
            json.loads(line)
            for line in (tmp_path / "out" / "trajectory.jsonl").read_text().splitlines()
        ]
        assert records[0]["kind"] == "meta"
        assert records[0]["config"]["n_agents"] == 3
        back = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert back == summary
        params = json.loads((tmp_path / "out" / "final_params.json").read_text())
        assert len(params["agents"]) == 3
        assert all(p["role"] == "regular" for p in params["agents"])

    def test_rerun_identical_summary(self, tmp_path):
        cfg = small_config(rounds=60)
        run_experiment(cfg, tmp_path / "a", quiet=True)
        run_experiment(cfg, tmp_path / "b", quiet=True)
        for name in ("summary.json", "trajectory.jsonl", "final_params.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestCheckGraph:
    def test_ring_with_adversary(self):
        cfg = small_config(
            n_agents=6,
            trim_f=1,
            adversaries={"ids": [2], "strategy": "selfish"},
        )
        report = check_graph(cfg)
        assert report["f_local"] is True
        assert report["connected"] == [True]
        assert report["adversaries"] == [2]
        assert report["adversary_fraction_max"] == 0.5

    def test_path_graph_robustness(self):
        doc = yaml.safe_load(MINIMAL)
        doc["n_agents"] = 4
        doc["graph"] = {"topology": "edges", "edges": [[0, 1], [1, 2], [2, 3]]}
        report = check_graph(config_from_dict(doc))
        assert report["max_r_robust"] == 1  # 2-robust is false for a path

    def test_disconnected_reported_not_rejected(self):
        doc = yaml.safe_load(MINIMAL)
        doc["graph"] = {"topology": "edges", "edges": [[0, 1]]}
        report = check_graph(config_from_dict(doc))
        assert report["connected"] == [False]


class TestCliMain:
    def write_config(self, tmp_path, **overrides):
        doc = yaml.safe_load(MINIMAL)
        doc.update(overrides)
        path = tmp_path / "experiment.yaml"
        path.write_text(yaml.safe_dump(doc))
        return path

    def test_run_subcommand(self, tmp_path, capsys):
        path = self.write_config(tmp_path, rounds=30)
        out = tmp_path / "out"
        assert main(["run", "--config", str(path), "--out", str(out)]) == 0
        assert (out / "summary.json").exists()
        assert "J=" in capsys.readouterr().out

    def test_seed_override_changes_run(self, tmp_path):
        path = self.write_config(tmp_path, rounds=30)
        main(["run", "--config", str(path), "--out", str(tmp_path / "a"), "--quiet"])
        main(["run", "--config", str(path), "--seed", "99", "--out", str(tmp_path / "b"), "--quiet"])
        sa = json.loads((tmp_path / "a" / "summary.json").read_text())
        sb = json.loads((tmp_path / "b" / "summary.json").read_text())
        assert sa["seed"] == 0 and sb["seed"] == 99
        assert sa["final_j_oracle"] != sb["final_j_oracle"]

    def test_impossible_placement_exit_code(self, tmp_path, capsys):
        path = self.write_config(
            tmp_path,
            n_agents=4,
            trim_f=1,
            graph={"topology": "complete"},
            adversaries={"count": 2, "strategy": "constant", "params": {"value": 1.0}},
        )
        code = main(["run", "--config", str(path), "--out", str(tmp_path / "x"), "--quiet"])
        assert code == 2
        assert "local placement" in capsys.readouterr().err

    def test_bad_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / "broken.yaml"
        path.write_text("rounds: 5\n")
        assert main(["run", "--config", str(path), "--quiet", "--out", str(tmp_path / "y")]) == 2
        assert "n_agents" in capsys.readouterr().err

    def test_check_graph_subcommand(self, tmp_path, capsys):
        path = self.write_config(tmp_path)
        assert main(["check-graph", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "connected[phase 0]: True" in out
        assert "r-robustness" in out

    def test_env_var_out_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RESILIENT_MARL_OUT", str(tmp_path / "root"))
        path = self.write_config(tmp_path, rounds=20)
        assert main(["run", "--config", str(path), "--quiet"]) == 0
        assert (tmp_path / "root" / "experiment.seed0" / "summary.json").exists()


class TestSweep:
    def test_sweep_runs_with_derived_seeds(self, tmp_path):
        base = yaml.safe_load(MINIMAL)
        base["rounds"] = 30
        base["seed"] = 10
        sweep_doc = {
            "base": base,
            "runs": [
                {"name": "plain", "overrides": {}},
                {"name": "trimmed", "overrides": {"trim_f": 1}},
                {"overrides": {"seed": 77}},
            ],
        }
        results = run_sweep(sweep_doc, tmp_path / "sweep", jobs=2, quiet=True)
        assert [r["seed"] for r in results] == [10, 11, 77]
        assert (tmp_path / "sweep" / "plain" / "summary.json").exists()
        assert (tmp_path / "sweep" / "trimmed" / "summary.json").exists()
        assert (tmp_path / "sweep" / "run_002" / "summary.json").exists()
        index = json.loads((tmp_path / "sweep" / "sweep_summary.json").read_text())
        assert len(index) == 3

    def test_sweep_validates_before_running(self, tmp_path):
        base = yaml.safe_load(MINIMAL)
        sweep_doc = {"base": base, "runs": [{"overrides": {"trim_f": -1}}]}
        with pytest.raises(ConfigError, match="trim_f"):
            run_sweep(sweep_doc, tmp_path / "s", quiet=True)

    def test_sweep_subcommand(self, tmp_path):
        base = yaml.safe_load(MINIMAL)
        base["rounds"] = 20
        path = tmp_path / "sweep.yaml"
        path.write_text(yaml.safe_dump({"base": base, "runs": [{"overrides": {}}]}))
        assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o"),
                     "--jobs", "1", "--quiet"]) == 0
        assert (tmp_path / "o" / "sweep_summary.json").exists()
