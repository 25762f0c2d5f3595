import csv
import json

import numpy as np
import pytest

from tempsteer import cli, experiments, steering
from tempsteer.experiments import ConfigError, ExperimentConfig


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestConfig:
    def test_defaults_resolve(self):
        cfg = ExperimentConfig(model="radical-pair").resolved()
        assert cfg.unit == "us" and cfg.stop == 100.0
        assert ExperimentConfig().resolved().unit == "1/gamma"

    @pytest.mark.parametrize(
        "changes,field",
        [
            ({"points": 1}, "points"),
            ({"settings": ((1, 6),)}, "settings"),
            ({"settings": ((2, 2),)}, "settings"),
            ({"unit": "us"}, "unit"),
            ({"gamma": (0.0,)}, "gamma"),
            ({"model": "other"}, "model"),
        ],
    )
    def test_invalid(self, changes, field):
        with pytest.raises(ConfigError, match=f"'{field}'"):
            ExperimentConfig(**changes).resolved()

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            experiments.config_from_mapping({"gama": [1]})

    def test_json_syntax_error_has_line(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{\n "model": "coupled-qubits",\n "points": ,\n}\n')
        with pytest.raises(ConfigError, match="line 3"):
            experiments.load_config(path)

    def test_overrides_replace_file_values(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"model": "coupled-qubits", "points": 7, "gamma": [2]}))
        cfg = experiments.load_config(path, {"points": "5", "settings": ["1,2,3"]})
        assert cfg.points == 5 and cfg.gamma == (2.0,) and cfg.settings == ((1, 2, 3),)

    def test_round_trip_through_manifest_dict(self):
        cfg = ExperimentConfig(model="radical-pair", tensor=("a", "b")).resolved()
        assert experiments.config_from_mapping(cfg.to_dict()) == cfg


class TestVanishTime:
    def test_bracket(self):
        vt = experiments.vanish_time([0, 1, 2, 3], [0.3, 0.1, 5e-7, 0])
        assert vt == {"time": 2.0, "bracket": [1.0, 2.0]}

    def test_never(self):
        assert experiments.vanish_time([0, 1], [0.3, 0.1])["time"] is None


class TestRun:
    def test_coupled_outputs(self, tmp_path):
        cfg = ExperimentConfig(gamma=(1.0, 4.0), points=6, stop=5.0, workers=1, output=str(tmp_path))
        res = experiments.run_experiment(cfg)
        assert res.failures == 0
        rows = list(csv.reader(open(tmp_path / "tsr.csv", newline="")))
        assert rows[0] == ["time [1/gamma]", "gamma=1 n=12", "gamma=4 n=12"]
        assert len(rows) == 7
        assert abs(float(rows[1][1]) - 1 / 3) < 1e-6
        probs = list(csv.reader(open(tmp_path / "probabilities.csv", newline="")))
        assert len(probs) == 1 + 2 * 6 * 2 * 4
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config"]["points"] == 6
        assert manifest["curves"][0]["vanish_time"]["unit"] == "1/gamma"
        assert "numpy" in manifest["versions"]

    def test_manifest_reproduces(self, tmp_path):
        cfg = ExperimentConfig(points=4, stop=3.0, workers=1, output=str(tmp_path / "a"))
        experiments.run_experiment(cfg)
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        again = experiments.config_from_mapping(dict(manifest["config"], output=str(tmp_path / "b")))
        experiments.run_experiment(again)
        assert (tmp_path / "a" / "tsr.csv").read_bytes() == (tmp_path / "b" / "tsr.csv").read_bytes()

    def test_worker_count_does_not_change_output(self, tmp_path):
        base = dict(model="simplified-rp", weight=(0.25, 0.5), points=5, stop=20.0)
        experiments.run_experiment(ExperimentConfig(**base, workers=1, output=str(tmp_path / "one")))
        experiments.run_experiment(ExperimentConfig(**base, workers=2, output=str(tmp_path / "two")))
        for name in ("tsr.csv", "negativity.csv", "probabilities.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_radical_pair_small(self, tmp_path):
        cfg = ExperimentConfig(
            model="radical-pair", theta=(0.0,), points=3, stop=10.0, workers=1, output=str(tmp_path)
        )
        res = experiments.run_experiment(cfg)
        curve = res.curves[0]
        assert abs(curve.tsr[0] - 1 / 3) < 1e-6
        assert curve.negativity[0] < 1e-12  # electrons start maximally mixed

    def test_failures_are_recorded(self, tmp_path):
        cfg = ExperimentConfig(points=3, stop=2.0, max_iters=1, workers=1, output=str(tmp_path))
        res = experiments.run_experiment(cfg)
        assert res.failures == 3
        assert np.isnan(res.curves[0].tsr).all()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert len(manifest["curves"][0]["failures"]) == 3


class TestCommands:
    def test_mub_check(self, capsys):
        code, out, _ = run(["mub-check"], capsys)
        assert code == 0 and "PASS" in out
        code, out, _ = run(["mub-check", "--verbatim"], capsys)
        assert code == 1 and "FAIL" in out

    def test_self_test(self, capsys):
        code, out, _ = run(["self-test"], capsys)
        assert code == 0 and out.strip().endswith("self-test: PASS")

    def test_self_test_corrupt_mub(self, capsys):
        code, out, _ = run(["self-test", "--corrupt-mub"], capsys)
        assert code == 1
        assert "FAIL at verify_mub" in out

    def test_self_test_iteration_cap(self, capsys):
        code, out, _ = run(["self-test", "--max-iters", "1"], capsys)
        assert code == 2
        assert "FAIL at duality-gap" in out

    def test_tsr_from_file(self, tmp_path, capsys):
        path = tmp_path / "asm.json"
        steering.save_assemblage(
            steering.initial_assemblage(np.eye(2) / 2, steering.pauli_xz()), path
        )
        code, out, _ = run(["tsr-from-file", str(path)], capsys)
        record = json.loads(out)
        assert code == 0
        assert abs(record["tsr"] - (3 - 2 * 2**0.5)) < 1e-7
        assert record["certificate_passed"]
        code, _, _ = run(["tsr-from-file", str(path), "--max-iters", "1"], capsys)
        assert code == 2

    def test_tsr_from_bad_file(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something"}')
        code, _, err = run(["tsr-from-file", str(path)], capsys)
        assert code == 1 and "invalid" in err
        code, _, _ = run(["tsr-from-file", str(tmp_path / "missing.json")], capsys)
        assert code == 1

    def test_experiment_flags(self, tmp_path, capsys):
        argv = ["coupled-qubits", "--gamma", "2", "--points", "4", "--stop", "2",
                "--workers", "1", "--output", str(tmp_path)]
        code, out, _ = run(argv, capsys)
        assert code == 0 and "gamma=2 n=12" in out
        assert (tmp_path / "manifest.json").exists()

    def test_experiment_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "simplified-rp", "weight": [1.0], "points": 3,
                                   "workers": 1, "output": str(tmp_path / "out")}))
        code, out, _ = run(["simplified-rp", "--config", str(cfg)], capsys)
        assert code == 0
        code, _, err = run(["coupled-qubits", "--config", str(cfg)], capsys)
        assert code == 1 and "model" in err

    def test_validation_exit_code(self, capsys):
        code, _, err = run(["coupled-qubits", "--settings", "1,7"], capsys)
        assert code == 1 and "settings" in err
