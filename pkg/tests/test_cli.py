import json
from pathlib import Path

import pytest

from mortar import cli, harness
from mortar.config import Paths, RunConfig, TrainSettings

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))


def small_config(root: Path, **kw) -> RunConfig:
    paths = Paths(
        dataset=str(root / "data.csv"), stats=str(root / "stats.json"),
        model=str(root / "model.json"), metrics=str(root / "metrics.csv"),
        reports=str(root / "reports"),
    )
    base = dict(env="PointReach", detune=0.5, noise_std=1.0, seed=1, seeds=(0, 1),
                episodes=20, horizon=30, eval_episodes=3,
                train=TrainSettings(epochs=2, batch=64, hidden=(8,)), paths=paths)
    base.update(kw)
    return RunConfig(**base)


def write_config(cfg: RunConfig, root: Path) -> str:
    path = root / "cfg.json"
    path.write_text(cfg.to_json())
    return str(path)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg = small_config(root)
    cli.cmd_collect(cfg)
    cli.cmd_train(cfg)
    return cfg, root


class TestConfig:

    @pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
    def test_presets_round_trip(self, path):
        doc = json.loads(path.read_text())
        cfg = RunConfig.from_dict(doc)
        assert cfg.to_dict() == doc
        assert RunConfig.from_dict(json.loads(cfg.to_json())) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            RunConfig.from_dict({"env": "PointReach", "detuning": 1.0})
        with pytest.raises(ValueError, match="unknown keys in 'repair'"):
            RunConfig.from_dict({"repair": {"lambda": 10}})

    def test_invalid_values(self):
        with pytest.raises(ValueError):
            RunConfig(env="Pendulum")
        with pytest.raises(ValueError):
            RunConfig(spec_mode="lenient")

    def test_seed_override(self):
        cfg = RunConfig().with_seed(9)
        assert cfg.seed == 9 and cfg.seeds == (9,)


class TestPipeline:

    def test_collect_outputs(self, trained):
        cfg, _ = trained
        lines = Path(cfg.paths.dataset).read_text().splitlines()
        assert len(lines) == 1 + cfg.episodes * cfg.horizon
        stats = json.loads(Path(cfg.paths.stats).read_text())
        assert stats["psi_max"] >= stats["psi_mean"]

    def test_collect_and_train_are_byte_identical(self, trained, tmp_path):
        cfg, _ = trained
        again = small_config(tmp_path)
        cli.cmd_collect(again)
        cli.cmd_train(again)
        for a, b in [(cfg.paths.dataset, again.paths.dataset), (cfg.paths.stats, again.paths.stats),
                     (cfg.paths.metrics, again.paths.metrics)]:
            assert Path(a).read_bytes() == Path(b).read_bytes()
        # the model records the dataset digest, which is path independent
        assert Path(cfg.paths.model).read_bytes() == Path(again.paths.model).read_bytes()

    def test_metrics_row(self, trained):
        cfg, _ = trained
        header, row = Path(cfg.paths.metrics).read_text().splitlines()
        values = [float(v) for v in row.split(",")[3:]]
        assert len(values) == 4
        acc, f1, mse, auc = values
        assert 0 <= acc <= 1 and 0 <= f1 <= 1 and mse >= 0 and 0 <= auc <= 1

    def test_eval_model_matches_train(self, trained, tmp_path):
        cfg, _ = trained
        out = tmp_path / "m.csv"
        cli.cmd_eval_model(cfg, str(out))
        assert out.read_text() == Path(cfg.paths.metrics).read_text()

    def test_run_report_rows(self, trained, tmp_path):
        cfg, _ = trained
        out = cli.cmd_run(cfg, ("off", "bim"), str(tmp_path / "r.csv"))
        rows = harness.read_report(out)
        assert [(r["repair_mode"], r["seed"]) for r in rows] == [
            ("off", "0"), ("off", "1"), ("off", "mean"),
            ("bim", "0"), ("bim", "1"), ("bim", "mean"),
        ]

    def test_bench_shares_seeds_and_matches_run(self, trained, tmp_path):
        cfg, _ = trained
        bench = harness.read_report(cli.cmd_bench_optimizers(cfg, str(tmp_path / "b.csv")))
        run = harness.read_report(cli.cmd_run(cfg, ("off",), str(tmp_path / "off.csv")))
        seeds = {m: [r["seed"] for r in bench if r["repair_mode"] == m] for m in harness.REPAIR_MODES}
        assert len({tuple(s) for s in seeds.values()}) == 1

        def stable(r):
            return {k: v for k, v in r.items() if k not in harness.VOLATILE_COLUMNS}

        off = [stable(r) for r in bench if r["repair_mode"] == "off"]
        assert off == [stable(r) for r in run]
        overhead = (tmp_path / "b_overhead.csv").read_text().splitlines()
        assert overhead[0] == cli.OVERHEAD_HEADER
        assert [l.split(",")[0] for l in overhead[1:]] == ["bim", "nm3", "nm100"]

    def test_report(self, trained, tmp_path):
        cfg, _ = trained
        path = cli.cmd_run(cfg, ("off", "bim"), str(tmp_path / "r.csv"))
        text = cli.cmd_report(cfg, [str(path)])
        assert text.count("\n") == 4  # header, rule, one row per mode


class TestMain:

    def test_off_runs_without_model(self, tmp_path, capsys):
        cfg = small_config(tmp_path)
        out = tmp_path / "off.csv"
        assert cli.main(["run", "--config", write_config(cfg, tmp_path), "--repair", "off",
                         "--out", str(out)]) == 0
        assert out.exists()

    def test_missing_model_is_an_error(self, tmp_path, capsys):
        cfg = small_config(tmp_path)
        assert cli.main(["run", "--config", write_config(cfg, tmp_path), "--repair", "bim"]) == 1
        assert "missing input file" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        assert cli.main(["collect", "--config", str(tmp_path / "nope.json")]) == 1

    def test_unknown_mode(self, tmp_path, capsys):
        cfg = small_config(tmp_path)
        assert cli.main(["run", "--config", write_config(cfg, tmp_path), "--repair", "cobyla"]) == 1

    def test_bad_config_key(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"env": "PointReach", "colour": 1}')
        assert cli.main(["collect", "--config", str(path)]) == 1

    def test_collect_then_train(self, tmp_path, capsys):
        cfg = write_config(small_config(tmp_path), tmp_path)
        assert cli.main(["collect", "--config", cfg]) == 0
        assert cli.main(["train", "--config", cfg, "--seed", "3"]) == 0
        assert "accuracy" in capsys.readouterr().out

    def test_train_without_dataset(self, tmp_path, capsys):
        cfg = write_config(small_config(tmp_path), tmp_path)
        assert cli.main(["train", "--config", cfg]) == 1

    def test_report_without_inputs(self, tmp_path, capsys):
        cfg = write_config(small_config(tmp_path), tmp_path)
        assert cli.main(["report", "--config", cfg]) == 1
