"""Closed-loop runs: observe, act, monitor, repair if needed, step. Plus success/timing reports."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from mortar import envsim, stl
from mortar.datagen import derive_seeds, ordered_map
from mortar.envsim import EnvConfig
from mortar.monitor import PredictionModel
from mortar.policy import Policy
from mortar.repair import RepairConfig, RepairOutcome, Status, repair

REPAIR_MODES = ("off", "bim", "nm3", "nm100")

REPORT_HEADER = (
    "env,spec_mode,policy,repair_mode,seed,episodes,success_rate,mean_step_ms,"
    "overhead_ms,repairs_attempted,repairs_safe"
)
# wall-clock columns, excluded from reproducibility comparisons
VOLATILE_COLUMNS = ("mean_step_ms", "overhead_ms")


def repair_config_for_mode(base: RepairConfig, mode: str) -> RepairConfig | None:
    if mode == "off":
        return None
    if mode == "bim":
        return replace(base, optimizer="bim")
    if mode == "nm3":
        return replace(base, optimizer="nelder_mead", nm_max_iter=3)
    if mode == "nm100":
        return replace(base, optimizer="nelder_mead", nm_max_iter=100)
    raise ValueError(f"unknown repair mode {mode!r}; choose from {REPAIR_MODES}")


@dataclass
class StepRecord:
    raw_action: np.ndarray
    executed_action: np.ndarray
    psi: float  # monitor prediction for the raw action; NaN with repair off
    outcome: RepairOutcome | None
    policy_ns: int
    monitor_ns: int
    repair_ns: int
    total_ns: int


@dataclass
class EpisodeResult:
    trace: stl.SignalTrace
    robustness: float
    success: bool
    repairs_attempted: int
    repairs_safe: int
    policy_ms: float
    monitor_ms: float
    repair_ms: float
    step_ms: float
    steps: list[StepRecord] = field(default_factory=list, repr=False)
    states: list[envsim.EnvState] = field(default_factory=list, repr=False)


def run_episode(
    env: EnvConfig,
    policy: Policy,
    formula: stl.Formula,
    model: PredictionModel | None = None,
    repair_cfg: RepairConfig | None = None,
    keep_steps: bool = False,
) -> EpisodeResult:
    """One episode of the monitor-and-repair loop.

    The monitor sees the policy action after clipping to the physical action
    space; a predicted score below ``repair_cfg.psi_thres`` triggers repair.
    """
    if repair_cfg is not None and model is None:
        raise ValueError("repair requires a prediction model")
    clock = time.perf_counter_ns
    dt = env.dt
    state = envsim.reset(env)
    states = [state]
    records = []
    attempted = safe = 0
    tot_policy = tot_monitor = tot_repair = tot_step = 0
    for _ in range(env.horizon):
        t_start = clock()
        action = envsim.clip_action(env.kind, policy.act(state))
        t_policy = clock()
        psi = math.nan
        outcome = None
        executed = action
        if repair_cfg is not None:
            features = state.features(dt)
            psi = model.predict(features, action)
            t_monitor = clock()
            if psi < repair_cfg.psi_thres:
                attempted += 1
                outcome = repair(model, features, action, repair_cfg)
                if outcome.status is Status.REPAIRED_SAFE:
                    safe += 1
                executed = envsim.clip_action(env.kind, outcome.action)
            t_repair = clock()
        else:
            t_monitor = t_repair = t_policy
        state = envsim.step(state, executed, env)
        t_end = clock()
        states.append(state)
        tot_policy += t_policy - t_start
        tot_monitor += t_monitor - t_policy
        tot_repair += t_repair - t_monitor
        tot_step += t_end - t_start
        if keep_steps:
            records.append(
                StepRecord(
                    action, executed, psi, outcome,
                    t_policy - t_start, t_monitor - t_policy, t_repair - t_monitor, t_end - t_start,
                )
            )
    trace = envsim.channels(states, dt)
    rob = stl.robustness(trace, formula)
    n = env.horizon
    return EpisodeResult(
        trace=trace,
        robustness=rob,
        success=stl.satisfied(rob),
        repairs_attempted=attempted,
        repairs_safe=safe,
        policy_ms=tot_policy / n / 1e6,
        monitor_ms=tot_monitor / n / 1e6,
        repair_ms=tot_repair / n / 1e6,
        step_ms=tot_step / n / 1e6,
        steps=records,
        states=states if keep_steps else [],
    )


@dataclass(frozen=True)
class ExperimentSetup:
    """Everything needed to reproduce one evaluation cell."""

    env: EnvConfig
    spec_mode: str
    policy: Policy
    model: PredictionModel | None = None
    repair: RepairConfig | None = None
    repair_mode: str = "off"

    @property
    def formula(self) -> stl.Formula:
        return stl.parse_stl(envsim.spec(self.env.kind, self.spec_mode))


def episode_seed(seed: int, episode: int) -> int:
    return derive_seeds(seed, episode, 1)[0]


def _episode_job(args):
    setup, env_seed, formula, keep = args
    policy = setup.policy
    if hasattr(policy, "clone"):
        policy = policy.clone(derive_seeds(env_seed, 1, 1)[0])
    return run_episode(
        setup.env.with_seed(env_seed), policy, formula, setup.model, setup.repair, keep
    )


def run_seed(
    setup: ExperimentSetup, seed: int, n_episodes: int, keep_steps: bool = False,
    parallel: bool = True,
) -> list[EpisodeResult]:
    """Episodes for one seed; episode ``e`` depends only on (seed, e)."""
    formula = setup.formula
    jobs = [(setup, episode_seed(seed, e), formula, keep_steps) for e in range(n_episodes)]
    if parallel:
        return ordered_map(_episode_job, jobs)
    return [_episode_job(j) for j in jobs]


@dataclass(frozen=True)
class ReportRow:
    env: str
    spec_mode: str
    policy: str
    repair_mode: str
    seed: str
    episodes: int
    success_rate: float
    mean_step_ms: float
    overhead_ms: float
    repairs_attempted: int
    repairs_safe: int

    def csv_fields(self) -> list[str]:
        return [
            self.env, self.spec_mode, self.policy, self.repair_mode, self.seed,
            str(self.episodes), repr(self.success_rate), f"{self.mean_step_ms:.6f}",
            f"{self.overhead_ms:.6f}", str(self.repairs_attempted), str(self.repairs_safe),
        ]


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    episodes: dict[str, list[EpisodeResult]] = field(default_factory=dict, repr=False)

    def to_csv(self, include_header: bool = True) -> str:
        buf = io.StringIO()
        if include_header:
            buf.write(REPORT_HEADER + "\n")
        for row in self.rows:
            buf.write(",".join(row.csv_fields()) + "\n")
        return buf.getvalue()

    def aggregate(self, repair_mode: str | None = None) -> list[ReportRow]:
        return [
            r for r in self.rows
            if r.seed == "mean" and (repair_mode is None or r.repair_mode == repair_mode)
        ]


def _row(setup: ExperimentSetup, seed: str, results: Sequence[EpisodeResult]) -> ReportRow:
    return ReportRow(
        env=setup.env.kind.value,
        spec_mode=setup.spec_mode,
        policy=setup.policy.describe(),
        repair_mode=setup.repair_mode,
        seed=seed,
        episodes=len(results),
        success_rate=float(np.mean([r.success for r in results])),
        mean_step_ms=float(np.mean([r.step_ms for r in results])),
        overhead_ms=float(np.mean([r.monitor_ms + r.repair_ms for r in results])),
        repairs_attempted=int(sum(r.repairs_attempted for r in results)),
        repairs_safe=int(sum(r.repairs_safe for r in results)),
    )


def evaluate(
    setup: ExperimentSetup, n_episodes: int, seeds: Iterable[int] = (0, 1, 2),
    keep_steps: bool = False,
) -> ExperimentReport:
    """Per-seed success/timing rows plus one seed-averaged ``mean`` row.

    ``overhead_ms`` is the mean per-step time spent in the monitor and repair
    phases; a paired on/off comparison lives in :func:`measure_overhead`.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    rows, per_seed = [], {}
    for seed in seeds:
        results = run_seed(setup, seed, n_episodes, keep_steps)
        per_seed[str(seed)] = results
        rows.append(_row(setup, str(seed), results))
    mean_row = ReportRow(
        env=rows[0].env,
        spec_mode=rows[0].spec_mode,
        policy=rows[0].policy,
        repair_mode=rows[0].repair_mode,
        seed="mean",
        episodes=sum(r.episodes for r in rows),
        success_rate=float(np.mean([r.success_rate for r in rows])),
        mean_step_ms=float(np.mean([r.mean_step_ms for r in rows])),
        overhead_ms=float(np.mean([r.overhead_ms for r in rows])),
        repairs_attempted=sum(r.repairs_attempted for r in rows),
        repairs_safe=sum(r.repairs_safe for r in rows),
    )
    return ExperimentReport(rows + [mean_row], per_seed)


@dataclass(frozen=True)
class OverheadRow:
    mode: str
    step_ms_off: float
    step_ms_on: float
    overhead_ms: float  # paired difference on identical seeds
    engine_ms: float  # mean wall time per repair call
    model_calls_per_repair: float
    repairs: int


def measure_overhead(
    setup: ExperimentSetup, n_episodes: int, seeds: Iterable[int] = (0,)
) -> OverheadRow:
    """Paired repair-on / repair-off timing; always sequential to avoid contention."""
    off = replace(setup, repair=None, repair_mode="off")
    off_ms, on_ms, engine, calls = [], [], [], []
    for seed in seeds:
        for r_off, r_on in zip(
            run_seed(off, seed, n_episodes, parallel=False),
            run_seed(setup, seed, n_episodes, keep_steps=True, parallel=False),
        ):
            off_ms.append(r_off.step_ms)
            on_ms.append(r_on.step_ms)
            for rec in r_on.steps:
                if rec.outcome is not None:
                    engine.append(rec.outcome.wall_ms)
                    calls.append(rec.outcome.model_calls)
    step_off = float(np.mean(off_ms))
    step_on = float(np.mean(on_ms))
    return OverheadRow(
        mode=setup.repair_mode,
        step_ms_off=step_off,
        step_ms_on=step_on,
        overhead_ms=step_on - step_off,
        engine_ms=float(np.mean(engine)) if engine else 0.0,
        model_calls_per_repair=float(np.mean(calls)) if calls else 0.0,
        repairs=len(engine),
    )


def read_report(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
