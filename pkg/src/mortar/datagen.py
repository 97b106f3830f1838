"""Noised-policy rollouts labelled with their episode STL score, plus repair-bound statistics."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from mortar import envsim, stl
from mortar.envsim import EnvConfig, EnvKind
from mortar.policy import NoisyPolicy


def derive_seeds(master: int, index: int, count: int = 2) -> list[int]:
    """Independent 32-bit seeds for item ``index`` under ``master``."""
    ss = np.random.SeedSequence([int(master), int(index)])
    return [int(s) for s in ss.generate_state(count)]


def worker_count() -> int:
    raw = os.environ.get("MORTAR_THREADS", "0").strip() or "0"
    return max(0, int(raw))


def ordered_map(fn: Callable, items: Sequence) -> list:
    """``map`` that fans out over processes when MORTAR_THREADS > 1; order is kept."""
    workers = worker_count()
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


@dataclass
class TrajectoryDataset:
    """Column-oriented store: one row per (episode, step) pair."""

    episode: np.ndarray  # int
    step: np.ndarray  # int
    states: np.ndarray  # (n, n_state)
    actions: np.ndarray  # (n, n_action)
    score: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.episode)

    @property
    def safe(self) -> np.ndarray:
        return self.score >= 0

    @property
    def inputs(self) -> np.ndarray:
        return np.hstack([self.states, self.actions])

    @property
    def episode_ids(self) -> np.ndarray:
        return np.unique(self.episode)

    def episode_scores(self) -> np.ndarray:
        ids, first = np.unique(self.episode, return_index=True)
        return self.score[first]

    def subset(self, episodes: Iterable[int]) -> "TrajectoryDataset":
        mask = np.isin(self.episode, np.fromiter(episodes, dtype=np.int64))
        return TrajectoryDataset(
            self.episode[mask],
            self.step[mask],
            self.states[mask],
            self.actions[mask],
            self.score[mask],
            dict(self.metadata),
        )


@dataclass(frozen=True)
class _EpisodeJob:
    env: EnvConfig
    policy: NoisyPolicy
    formula: stl.Formula


def _rollout(job: _EpisodeJob) -> tuple[np.ndarray, np.ndarray, float]:
    env, policy = job.env, job.policy
    state = envsim.reset(env)
    trajectory = [state]
    states, actions = [], []
    for _ in range(env.horizon):
        action = policy.act(state)
        states.append(state.features(env.dt))
        actions.append(action)
        state = envsim.step(state, action, env)
        trajectory.append(state)
    score = stl.robustness(envsim.channels(trajectory, env.dt), job.formula)
    return np.array(states), np.array(actions), score


def collect(
    env: EnvConfig,
    policy: NoisyPolicy,
    n_episodes: int,
    spec: str | stl.Formula,
    master_seed: int = 0,
) -> TrajectoryDataset:
    """Roll out ``n_episodes`` noised episodes and stamp each pair with its episode score.

    Episode ``e`` uses seeds derived from (master_seed, e) for both the initial
    state and the action noise, so the result does not depend on execution order.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    formula = stl.parse_stl(spec) if isinstance(spec, str) else spec
    jobs = []
    for e in range(n_episodes):
        env_seed, noise_seed = derive_seeds(master_seed, e)
        jobs.append(_EpisodeJob(env.with_seed(env_seed), policy.clone(noise_seed), formula))
    results = ordered_map(_rollout, jobs)

    T = env.horizon
    episode = np.repeat(np.arange(n_episodes), T)
    step = np.tile(np.arange(T), n_episodes)
    states = np.concatenate([r[0] for r in results])
    actions = np.concatenate([r[1] for r in results])
    score = np.repeat([r[2] for r in results], T)
    metadata = {
        "env": env.kind.value,
        "spec": spec if isinstance(spec, str) else stl.to_text(formula),
        "policy": policy.describe(),
        "detune": policy.inner.detune,
        "noise_std": policy.noise_std,
        "master_seed": master_seed,
        "dt": env.dt,
        "horizon": T,
        "episodes": n_episodes,
    }
    return TrajectoryDataset(episode, step, states, actions, score, metadata)


def split(
    dataset: TrajectoryDataset, seed: int = 0, ratio: tuple[int, int, int] = (7, 1, 2)
) -> tuple[TrajectoryDataset, TrajectoryDataset, TrajectoryDataset]:
    """Partition by episode into train/validation/test.

    Validation and test sizes are rounded to nearest; train takes the rest.
    """
    ids = dataset.episode_ids
    n = len(ids)
    if n < 10:
        raise ValueError(f"need at least 10 episodes to split, got {n}")
    total = sum(ratio)
    n_val = int(round(n * ratio[1] / total))
    n_test = int(round(n * ratio[2] / total))
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(ids)
    train_ids = np.sort(order[:n_train])
    val_ids = np.sort(order[n_train:n_train + n_val])
    test_ids = np.sort(order[n_train + n_val:])
    return dataset.subset(train_ids), dataset.subset(val_ids), dataset.subset(test_ids)


@dataclass(frozen=True)
class RepairBounds:
    psi_mean: float
    psi_std: float
    psi_max: float
    action_mean: tuple[float, ...]
    action_std: tuple[float, ...]
    a_min: tuple[float, ...]
    a_max: tuple[float, ...]
    A_min: tuple[float, ...]
    A_max: tuple[float, ...]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RepairBounds":
        doc = json.loads(text)
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})

    @classmethod
    def from_arrays(cls, scores, actions) -> "RepairBounds":
        scores = np.asarray(scores, dtype=np.float64)
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        psi_mean = float(scores.mean())
        psi_std = float(scores.std())
        a_mean = actions.mean(axis=0)
        a_std = actions.std(axis=0)
        a_min = actions.min(axis=0)
        a_max = actions.max(axis=0)
        lo = np.maximum(a_mean - 2 * a_std, a_min)
        hi = np.minimum(a_mean + 2 * a_std, a_max)

        def tup(a):
            return tuple(float(v) for v in a)

        return cls(
            psi_mean, psi_std, psi_mean + 2 * psi_std,
            tup(a_mean), tup(a_std), tup(a_min), tup(a_max), tup(lo), tup(hi),
        )


def stats(train: TrajectoryDataset) -> RepairBounds:
    """Score statistics over episodes, action statistics over all pairs (population std)."""
    if len(train) == 0:
        raise ValueError("empty training split")
    scores = train.episode_scores()
    if len(scores) < 2:
        raise ValueError("score spread is undefined for a single episode")
    return RepairBounds.from_arrays(scores, train.actions)


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def to_csv(dataset: TrajectoryDataset) -> str:
    n_s = dataset.states.shape[1]
    n_a = dataset.actions.shape[1]
    buf = io.StringIO()
    header = ["episode", "step"] + [f"s{i}" for i in range(n_s)]
    header += [f"a{i}" for i in range(n_a)] + ["score", "safe"]
    buf.write(",".join(header) + "\n")
    for i in range(len(dataset)):
        row = [str(int(dataset.episode[i])), str(int(dataset.step[i]))]
        row += [_fmt(v) for v in dataset.states[i]]
        row += [_fmt(v) for v in dataset.actions[i]]
        row += [_fmt(dataset.score[i]), "1" if dataset.score[i] >= 0 else "0"]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_csv(dataset: TrajectoryDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(dataset))


def read_csv(path) -> TrajectoryDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
    s_cols = [i for i, h in enumerate(header) if h.startswith("s") and h[1:].isdigit()]
    a_cols = [i for i, h in enumerate(header) if h.startswith("a") and h[1:].isdigit()]
    if header[:2] != ["episode", "step"] or header[-2:] != ["score", "safe"] or not a_cols:
        raise ValueError(f"{path}: unexpected dataset header {header}")
    if rows.size == 0:
        raise ValueError(f"{path}: dataset has no rows")
    return TrajectoryDataset(
        rows[:, 0].astype(np.int64),
        rows[:, 1].astype(np.int64),
        rows[:, s_cols],
        rows[:, a_cols],
        rows[:, -2],
    )


def env_kind_of(dataset: TrajectoryDataset) -> EnvKind:
    return EnvKind(dataset.metadata["env"])
