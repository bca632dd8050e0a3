import csv
import json
import math
from dataclasses import replace
from pathlib import Path

import pytest

from ladpfl.bench import (
    METRICS_COLUMNS,
    MetricsRow,
    compare_strategies,
    config_from_dict,
    desk_default,
    dumps_config,
    load_config,
    loads_config,
    read_metrics,
    run_experiment,
    write_csv_labeled,
    generate_synthetic,
)
from ladpfl.bench.cli import main
from ladpfl.dp_mechanism import Strategy
from ladpfl.errors import ParseError, ValidationError


def tiny(tmp_path, **overrides):
    raw = {
        "seed": 3,
        "num_clients": 4,
        "activation_rate": 0.5,
        "rounds": 3,
        "batch_size": 5,
        "model": {"hidden_sizes": [6]},
        "dp": {"epsilon": 0.5, "delta": 0.02, "kl_bound": 1e-6, "p_floor": 1e-12, "clip_bound": 0.5},
        "dataset": {"synthetic": {"classes": 3, "samples_per_class": 20, "input_dim": 4, "separation": 4.0}},
        "output_path": str(tmp_path / "out"),
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            raw[key] = {**raw.get(key, {}), **value}
        else:
            raw[key] = value
    return raw


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


class TestLoadConfig:
    def test_minimal_defaults_delta_from_batch(self):
        cfg = config_from_dict({"batch_size": 50})
        assert cfg.dp.delta is None
        assert cfg.delta == 0.02
        assert cfg.dp_config().delta == 0.02

    def test_empty_document(self):
        cfg = loads_config("{}")
        assert cfg.num_clients == 20 and cfg.rounds == 50
        assert cfg.decay_rate == pytest.approx(math.log(10) / 50)

    def test_activation_rate_out_of_range(self):
        with pytest.raises(ValidationError) as info:
            config_from_dict({"activation_rate": 1.5})
        assert info.value.field == "activation_rate"

    @pytest.mark.parametrize(
        "raw,field",
        [
            ({"bogus": 1}, "bogus"),
            ({"dp": {"epsilon": 0.2, "sigma": 3}}, "dp.sigma"),
            ({"dp": {"epsilon": -1}}, "dp.epsilon"),
            ({"dp": {"strategy": "magic"}}, "dp.strategy"),
            ({"dp": {"p_floor": 2.0}}, "dp.p_floor"),
            ({"dp": {"delta": 1.0}}, "dp.delta"),
            ({"rounds": "ten"}, "rounds"),
            ({"rounds": 2.5}, "rounds"),
            ({"seed": True}, "seed"),
            ({"model": {"hidden_sizes": [4, 0]}}, "model.hidden_sizes"),
            ({"partition": {"mode": "iid"}}, "partition.mode"),
            ({"partition": {"hbc_client": 20}}, "partition.hbc_client"),
            ({"partition": {"private_label": 3}}, "partition.private_label"),
            ({"dataset": {"synthetic": {"classes": 1}}}, "dataset.synthetic.classes"),
            ({"dataset": {"file": {"path": "/nonexistent.csv"}}}, "dataset.file.path"),
            ({"dataset": {"file": {}}}, "dataset.file.path"),
            ({"dataset": {"synthetic": {}, "file": {"path": "x"}}}, "dataset"),
            ({"dp": []}, "dp"),
        ],
    )
    def test_field_paths(self, raw, field):
        with pytest.raises(ValidationError) as info:
            config_from_dict(raw)
        assert info.value.field == field
        assert field in str(info.value)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_config(tmp_path / "absent.json")

    def test_roundtrip(self, tmp_path):
        for cfg in (config_from_dict(tiny(tmp_path)), desk_default(), config_from_dict({})):
            again = loads_config(dumps_config(cfg))
            assert again == cfg
            assert dumps_config(again) == dumps_config(cfg)

    def test_file_source_relative_path(self, tmp_path):
        write_csv_labeled(generate_synthetic(3, 5, 2, 1.0, 0), tmp_path / "data.csv")
        path = write_json(tmp_path / "c.json", {"dataset": {"file": {"path": "data.csv"}}})
        cfg = load_config(path)
        assert cfg.dataset.synthetic is None
        assert cfg.dataset.file.path == str((tmp_path / "data.csv").resolve())
        assert loads_config(dumps_config(cfg)) == cfg

    def test_with_run(self):
        cfg = desk_default().with_run(seed=5, strategy="full_dp", epsilon=0.5)
        assert (cfg.seed, cfg.dp.strategy, cfg.dp.epsilon) == (5, "full_dp", 0.5)
        assert cfg.dp_config().strategy is Strategy.FULL_DP
        with pytest.raises(ValueError):
            desk_default().with_run(strategy="bogus")

    def test_desk_default_values(self):
        cfg = desk_default()
        assert cfg.num_clients == 20 and cfg.rounds == 50
        assert cfg.model.hidden_sizes == (64, 32)
        assert cfg.dataset.synthetic.classes == 3 and cfg.dataset.synthetic.samples_per_class == 200
        assert cfg.delta == 0.02

    def test_shipped_config_matches_preset(self):
        path = Path(__file__).parents[1] / "configs" / "desk_default.json"
        assert load_config(path) == desk_default()


class TestMetricsRow:
    def test_csv_roundtrip(self):
        row = MetricsRow("ladp", 0.2, 7, 3, 0.1 + 0.2, 1 / 3, (0, 4, 9), 2, 1, 1e-300, math.pi, 0.7407407407407407)
        assert MetricsRow.from_csv(row.to_csv()) == row
        empty = replace(row, active_clients=())
        assert MetricsRow.from_csv(empty.to_csv()) == empty

    def test_columns_fixed(self):
        assert METRICS_COLUMNS[:4] == ("strategy", "epsilon", "seed", "round")
        with pytest.raises(ValueError):
            MetricsRow.from_csv(["x"])


class TestRunExperiment:
    def test_outputs(self, tmp_path):
        cfg = config_from_dict(tiny(tmp_path))
        result = run_experiment(cfg)
        rows = read_metrics(result.output_dir / "metrics.csv")
        assert rows == result.rows
        assert [r.round for r in rows] == [0, 1, 2]
        summary = json.loads((result.output_dir / "summary.json").read_text())
        assert summary["final_accuracy"] == rows[-1].test_accuracy
        assert summary["final_cumulative_epsilon"] == rows[-1].cumulative_epsilon
        assert summary["total_noise_l2"] == pytest.approx(sum(r.noise_l2_concat for r in rows))
        assert summary["wall_time_s"] >= 0
        freq = summary["layer_selection_frequency"]
        assert len(freq) == 2 and all(0 <= f <= 1 for f in freq) and any(f > 0 for f in freq)

    def test_none_vs_full_dp_noise(self, tmp_path):
        none = run_experiment(config_from_dict(tiny(tmp_path, dp={"strategy": "none"})), output_dir=tmp_path / "a")
        full = run_experiment(config_from_dict(tiny(tmp_path, dp={"strategy": "full_dp"})), output_dir=tmp_path / "b")
        assert none.summary["total_noise_l2"] == 0
        assert full.summary["total_noise_l2"] > 0

    def test_byte_identical(self, tmp_path):
        cfg = config_from_dict(tiny(tmp_path))
        a = run_experiment(cfg, output_dir=tmp_path / "a")
        b = run_experiment(cfg, output_dir=tmp_path / "b", workers=1, execution_order=lambda ids: ids[::-1])
        assert (a.output_dir / "metrics.csv").read_bytes() == (b.output_dir / "metrics.csv").read_bytes()

    def test_file_dataset(self, tmp_path):
        write_csv_labeled(generate_synthetic(3, 20, 4, 4.0, 0), tmp_path / "data.csv")
        raw = tiny(tmp_path)
        raw["dataset"] = {"file": {"path": "data.csv", "format": "csv_labeled"}}
        cfg = load_config(write_json(tmp_path / "c.json", raw))
        assert len(run_experiment(cfg).rows) == 3

    def test_partial_csv_flushed_per_round(self, tmp_path):
        cfg = config_from_dict(tiny(tmp_path))
        seen = []
        from ladpfl.bench import experiment

        original = experiment.run_training

        def spy(*args, on_round, **kwargs):
            def hook(record):
                on_round(record)
                with open(tmp_path / "out" / "metrics.csv") as fh:
                    seen.append(len(fh.read().splitlines()))

            return original(*args, on_round=hook, **kwargs)

        experiment.run_training = spy
        try:
            run_experiment(cfg)
        finally:
            experiment.run_training = original
        assert seen == [2, 3, 4]


class TestCompareStrategies:
    def test_sweep_shape(self, tmp_path):
        cfg = config_from_dict(tiny(tmp_path, rounds=2))
        cells = compare_strategies(cfg, ["ladp", "full_dp"], [0.2, 0.5], [0, 1, 2])
        assert len(cells) == 4
        assert len(list((tmp_path / "out").glob("*/metrics.csv"))) == 12
        for c in cells:
            assert c.seeds == (0, 1, 2)
            assert c.accuracy_min <= c.accuracy_mean <= c.accuracy_max
        table = list(csv.reader(open(tmp_path / "out" / "comparison.csv")))
        assert len(table) == 5

    @pytest.mark.parametrize("which", ["strategies", "epsilons", "seeds"])
    def test_empty_lists(self, tmp_path, which):
        args = {"strategies": ["ladp"], "epsilons": [0.2], "seeds": [0]}
        args[which] = []
        with pytest.raises(ValidationError):
            compare_strategies(config_from_dict(tiny(tmp_path)), **args)


class TestCLI:
    def test_bound(self, capsys):
        code = main(["bound", "--L", "1", "--mu", "2", "--gc", "20", "--nc", "0.1", "--J", "2",
                     "--eta", "0.01", "--t", "1", "--gap", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "eta window: (0.0, 0.02)" in out
        assert "ratio: 0.7" in out

    def test_bound_out_of_window(self, capsys):
        code = main(["bound", "--L", "1", "--mu", "2", "--gc", "20", "--nc", "0.1", "--J", "2",
                     "--eta", "0.5", "--t", "1", "--gap", "1"])
        assert code == 2
        assert "eta" in capsys.readouterr().err

    def test_gen_data_and_run(self, tmp_path, capsys):
        out_csv = tmp_path / "blobs.csv"
        assert main(["gen-data", "--classes", "3", "--per-class", "20", "--dim", "4", "--separation", "4",
                     "--seed", "1", "--out", str(out_csv)]) == 0
        raw = tiny(tmp_path)
        raw["dataset"] = {"file": {"path": str(out_csv)}}
        config = write_json(tmp_path / "c.json", raw)
        assert main(["run", "--config", str(config), "--output", str(tmp_path / "run"), "--seed", "9"]) == 0
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert summary["seed"] == 9

    def test_sweep(self, tmp_path, capsys):
        config = write_json(tmp_path / "c.json", tiny(tmp_path, rounds=1))
        code = main(["sweep", "--config", str(config), "--strategies", "ladp,none", "--epsilons", "0.5",
                     "--seeds", "0,1"])
        assert code == 0
        assert "ladp" in capsys.readouterr().out

    def test_config_error_exit_code(self, tmp_path, capsys):
        config = write_json(tmp_path / "c.json", {"activation_rate": 1.5})
        assert main(["run", "--config", str(config)]) == 2
        assert "activation_rate" in capsys.readouterr().err
        assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("0,1.0\n1,abc\n")
        raw = tiny(tmp_path)
        raw["dataset"] = {"file": {"path": str(bad)}}
        assert main(["run", "--config", str(write_json(tmp_path / "c.json", raw))]) == 3

    def test_argument_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["run"])
        assert info.value.code == 2
