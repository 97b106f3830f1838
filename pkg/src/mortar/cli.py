"""``mortar`` command line: collect -> train -> eval-model -> run -> bench-optimizers -> report."""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from mortar import datagen, envsim, harness, monitor, neuralnet
from mortar.config import RunConfig, ensure_parent
from mortar.datagen import RepairBounds
from mortar.envsim import EnvConfig
from mortar.monitor import METRICS_HEADER, PredictionModel
from mortar.policy import NoisyPolicy, PdController
from mortar.repair import RepairConfig


class CliError(Exception):
    pass


def _env(cfg: RunConfig) -> EnvConfig:
    return EnvConfig(cfg.kind, horizon=cfg.horizon, seed=cfg.seed)


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"missing input file {p}")
    return p


def _split(cfg: RunConfig, dataset: datagen.TrajectoryDataset):
    return datagen.split(dataset, seed=cfg.seed)


# ---------------------------------------------------------------------------
# commands


def cmd_collect(cfg: RunConfig, out: str | None = None) -> tuple[Path, Path]:
    dataset_path = ensure_parent(out or cfg.paths.dataset)
    stats_path = ensure_parent(cfg.paths.stats)
    policy = NoisyPolicy(PdController(cfg.kind, cfg.detune), cfg.noise_std, cfg.seed)
    spec = envsim.spec(cfg.kind, cfg.spec_mode)
    dataset = datagen.collect(_env(cfg), policy, cfg.episodes, spec, master_seed=cfg.seed)
    datagen.write_csv(dataset, dataset_path)
    train, _, _ = _split(cfg, dataset)
    bounds = datagen.stats(train)
    stats_path.write_text(bounds.to_json())
    scores = dataset.episode_scores()
    balance = float(np.mean(scores >= 0))
    print(f"collected {len(scores)} episodes x {cfg.horizon} steps ({len(dataset)} pairs) "
          f"under '{spec}'")
    print(f"safe/unsafe balance: {balance:.4f} safe, {1 - balance:.4f} unsafe")
    print(f"psi_max={bounds.psi_max:.6g} A_min={list(bounds.A_min)} A_max={list(bounds.A_max)}")
    return dataset_path, stats_path


def _load_model(cfg: RunConfig, path=None) -> PredictionModel:
    mlp = neuralnet.load(_require(path or cfg.paths.model))
    kind = mlp.meta.get("env", cfg.env)
    if kind != cfg.env:
        raise CliError(f"model was trained for {kind}, config asks for {cfg.env}")
    n_state = int(mlp.meta.get("n_state", envsim.feature_dim(cfg.kind)))
    return PredictionModel(mlp, kind, n_state, cfg.repair.psi_thres)


def _metrics_line(cfg: RunConfig, metrics: monitor.ModelMetrics) -> str:
    policy = PdController(cfg.kind, cfg.detune).describe()
    return metrics.csv_row(cfg.env, policy, cfg.seed)


def cmd_train(cfg: RunConfig, out: str | None = None) -> tuple[Path, monitor.ModelMetrics]:
    dataset_path = _require(cfg.paths.dataset)
    digest = hashlib.sha256(dataset_path.read_bytes()).hexdigest()
    dataset = datagen.read_csv(dataset_path)
    train, val, test = _split(cfg, dataset)
    n_in = dataset.inputs.shape[1]
    mlp = neuralnet.init_mlp([n_in, *cfg.train.hidden, 1], seed=cfg.seed)
    tcfg = neuralnet.TrainConfig(
        lr=cfg.train.lr, epochs=cfg.train.epochs, batch=cfg.train.batch,
        seed=cfg.seed, momentum=cfg.train.momentum,
    )
    result = neuralnet.train(mlp, train.inputs, train.score, tcfg,
                             validation=(val.inputs, val.score))
    model = result.model
    model.meta = {
        "env": cfg.env,
        "spec": envsim.spec(cfg.kind, cfg.spec_mode),
        "n_state": int(dataset.states.shape[1]),
        "dataset_sha256": digest,
        "best_epoch": result.best_epoch,
    }
    model_path = ensure_parent(out or cfg.paths.model)
    neuralnet.save(model, model_path)
    pm = PredictionModel(model, cfg.env, model.meta["n_state"], cfg.repair.psi_thres)
    metrics = monitor.evaluate(pm, test.inputs, test.score)
    _write_metrics(cfg, metrics, cfg.paths.metrics)
    print(f"trained {model.layers} for {cfg.train.epochs} epochs; best validation epoch "
          f"{result.best_epoch} (val mse {result.val_history[result.best_epoch]:.6g})")
    print(METRICS_HEADER)
    print(_metrics_line(cfg, metrics))
    return model_path, metrics


def _write_metrics(cfg: RunConfig, metrics, path) -> Path:
    p = ensure_parent(path)
    p.write_text(METRICS_HEADER + "\n" + _metrics_line(cfg, metrics) + "\n")
    return p


def cmd_eval_model(cfg: RunConfig, out: str | None = None) -> monitor.ModelMetrics:
    dataset = datagen.read_csv(_require(cfg.paths.dataset))
    _, _, test = _split(cfg, dataset)
    pm = _load_model(cfg)
    metrics = monitor.evaluate(pm, test.inputs, test.score)
    _write_metrics(cfg, metrics, out or cfg.paths.metrics)
    print(METRICS_HEADER)
    print(_metrics_line(cfg, metrics))
    return metrics


def repair_config(cfg: RunConfig) -> RepairConfig:
    bounds = RepairBounds.from_json(_require(cfg.paths.stats).read_text())
    r = cfg.repair
    optimizer = "bim" if r.optimizer == "bim" else "nelder_mead"
    return RepairConfig(bounds, r.psi_thres, r.alpha, r.eps, r.max_iter, optimizer, r.nm_max_iter)


def _setups(cfg: RunConfig, modes) -> list[harness.ExperimentSetup]:
    env = _env(cfg)
    policy = PdController(cfg.kind, cfg.detune)
    model = base = None
    if any(m != "off" for m in modes):
        model = _load_model(cfg)
        base = repair_config(cfg)
    out = []
    for mode in modes:
        rc = harness.repair_config_for_mode(base, mode) if mode != "off" else None
        out.append(harness.ExperimentSetup(env, cfg.spec_mode, policy, model, rc, mode))
    return out


def _run_modes(cfg: RunConfig, modes) -> list[harness.ExperimentReport]:
    reports = []
    for setup in _setups(cfg, modes):
        report = harness.evaluate(setup, cfg.eval_episodes, cfg.seeds)
        reports.append(report)
        agg = report.aggregate()[0]
        print(f"{setup.repair_mode:>6}: success {agg.success_rate:.4f} over {agg.episodes} episodes, "
              f"step {agg.mean_step_ms:.4f} ms, repairs {agg.repairs_attempted} "
              f"({agg.repairs_safe} reached the target band)")
    return reports


def _write_reports(reports, path) -> Path:
    p = ensure_parent(path)
    text = harness.REPORT_HEADER + "\n"
    text += "".join(r.to_csv(include_header=False) for r in reports)
    p.write_text(text)
    return p


def _parse_modes(text: str) -> list[str]:
    modes = [m.strip() for m in text.split(",") if m.strip()]
    for m in modes:
        if m not in harness.REPAIR_MODES:
            raise CliError(f"unknown repair mode {m!r}; choose from {', '.join(harness.REPAIR_MODES)}")
    if not modes:
        raise CliError("no repair mode given")
    return modes


def cmd_run(cfg: RunConfig, modes=("off", "bim"), out: str | None = None) -> Path:
    reports = _run_modes(cfg, modes)
    name = "run_" + "_".join(modes) + ".csv"
    return _write_reports(reports, out or Path(cfg.paths.reports) / name)


OVERHEAD_HEADER = "mode,step_ms_off,step_ms_on,overhead_ms,engine_ms,model_calls_per_repair,repairs"


def cmd_bench_optimizers(cfg: RunConfig, out: str | None = None) -> Path:
    modes = ("off", "bim", "nm3", "nm100")
    reports = _run_modes(cfg, modes)
    path = _write_reports(reports, out or Path(cfg.paths.reports) / "bench_optimizers.csv")
    lines = [OVERHEAD_HEADER]
    for setup in _setups(cfg, modes[1:]):
        row = harness.measure_overhead(setup, min(cfg.eval_episodes, 20), cfg.seeds)
        lines.append(
            f"{row.mode},{row.step_ms_off:.6f},{row.step_ms_on:.6f},{row.overhead_ms:.6f},"
            f"{row.engine_ms:.6f},{row.model_calls_per_repair:.4f},{row.repairs}"
        )
    overhead_path = path.with_name(path.stem + "_overhead.csv")
    overhead_path.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return path


def cmd_report(cfg: RunConfig, inputs=(), out: str | None = None) -> str:
    files = [Path(p) for p in inputs] or sorted(Path(cfg.paths.reports).glob("*.csv"))
    files = [f for f in files if not f.stem.endswith("_overhead")]
    if not files:
        raise CliError(f"no report files found under {cfg.paths.reports}")
    rows = []
    for f in files:
        rows += [r for r in harness.read_report(_require(f)) if r["seed"] == "mean"]
    header = "| env | spec | policy | repair | episodes | success | step ms | overhead ms |"
    lines = [header, "|" + "---|" * 8]
    for r in rows:
        lines.append(
            f"| {r['env']} | {r['spec_mode']} | {r['policy']} | {r['repair_mode']} | "
            f"{r['episodes']} | {float(r['success_rate']):.3f} | "
            f"{float(r['mean_step_ms']):.3f} | {float(r['overhead_ms']):.3f} |"
        )
    text = "\n".join(lines) + "\n"
    if out:
        ensure_parent(out).write_text(text)
    print(text, end="")
    return text


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mortar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("collect", "train", "eval-model", "run", "bench-optimizers", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the master seed (and evaluation seeds)")
        p.add_argument("--out", help="output path for the command's main artifact")
        if name == "run":
            p.add_argument("--repair", default="off,bim",
                           help="comma-separated subset of off,bim,nm3,nm100")
        if name == "report":
            p.add_argument("inputs", nargs="*", help="report CSVs (default: all in paths.reports)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(_require(args.config))
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "collect":
            cmd_collect(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.out)
        elif args.command == "eval-model":
            cmd_eval_model(cfg, args.out)
        elif args.command == "run":
            cmd_run(cfg, _parse_modes(args.repair), args.out)
        elif args.command == "bench-optimizers":
            cmd_bench_optimizers(cfg, args.out)
        else:
            cmd_report(cfg, args.inputs, args.out)
    except (CliError, OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"mortar {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
