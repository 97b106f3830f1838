"""Run a preset end to end: collect, train, evaluate repair modes, benchmark, summarise.

    python3 scripts/run_pipeline.py configs/ball_balance_strict_desk.json
    python3 scripts/run_pipeline.py configs/point_reach_desk.json --modes off,bim --skip-bench
"""

import argparse
import time
from pathlib import Path

from mortar import cli
from mortar.config import RunConfig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the master and evaluation seeds")
    parser.add_argument("--modes", default="off,bim", help="repair modes for the run step")
    parser.add_argument("--skip-bench", action="store_true", help="skip the optimizer benchmark")
    parser.add_argument("--reuse", action="store_true",
                        help="skip collect/train when the model file already exists")
    args = parser.parse_args()

    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)

    t0 = time.perf_counter()
    if not (args.reuse and Path(cfg.paths.model).exists()):
        cli.cmd_collect(cfg)
        print(f"[{time.perf_counter() - t0:7.1f} s] collect done")
        cli.cmd_train(cfg)
        print(f"[{time.perf_counter() - t0:7.1f} s] train done")
    reports = [cli.cmd_run(cfg, cli._parse_modes(args.modes))]
    print(f"[{time.perf_counter() - t0:7.1f} s] run done")
    if not args.skip_bench:
        reports.append(cli.cmd_bench_optimizers(cfg))
        print(f"[{time.perf_counter() - t0:7.1f} s] bench done")
    cli.cmd_report(cfg, [str(p) for p in reports])


if __name__ == "__main__":
    main()
