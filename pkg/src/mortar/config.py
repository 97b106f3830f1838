"""Run configuration: JSON file with nested ``train``, ``repair`` and ``paths`` sections."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from mortar.envsim import EnvKind


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 20
    lr: float = 0.01
    batch: int = 256
    hidden: tuple[int, ...] = (64, 64)
    momentum: float = 0.9


@dataclass(frozen=True)
class RepairSettings:
    optimizer: str = "bim"
    alpha: float = 1.0
    eps: float = 0.1
    max_iter: int = 3
    nm_max_iter: int = 100
    psi_thres: float = 0.0


@dataclass(frozen=True)
class Paths:
    dataset: str = "runs/dataset.csv"
    stats: str = "runs/stats.json"
    model: str = "runs/model.json"
    metrics: str = "runs/metrics.csv"
    reports: str = "runs/reports"


@dataclass(frozen=True)
class RunConfig:
    env: str = "PointReach"
    spec_mode: str = "standard"
    policy: str = "pd"
    detune: float = 1.0
    noise_std: float = 0.3
    seed: int = 0  # master seed for collection, splitting and training
    seeds: tuple[int, ...] = (0, 1, 2)  # evaluation seeds
    episodes: int = 2000
    horizon: int = 120
    eval_episodes: int = 100
    train: TrainSettings = field(default_factory=TrainSettings)
    repair: RepairSettings = field(default_factory=RepairSettings)
    paths: Paths = field(default_factory=Paths)

    def __post_init__(self):
        EnvKind(self.env)
        if self.spec_mode not in ("standard", "strict"):
            raise ValueError(f"spec_mode must be 'standard' or 'strict', got {self.spec_mode!r}")
        if self.policy != "pd":
            raise ValueError(f"only the 'pd' policy is available, got {self.policy!r}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.episodes < 1 or self.eval_episodes < 1 or self.horizon < 1:
            raise ValueError("episodes, eval_episodes and horizon must be positive")

    @property
    def kind(self) -> EnvKind:
        return EnvKind(self.env)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["train"]["hidden"] = list(self.train.hidden)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunConfig":
        doc = dict(doc)
        sections = {"train": TrainSettings, "repair": RepairSettings, "paths": Paths}
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, section in sections.items():
            sub = dict(doc.get(key, {}))
            sub_known = {f.name for f in fields(section)}
            bad = set(sub) - sub_known
            if bad:
                raise ValueError(f"unknown keys in '{key}': {sorted(bad)}")
            if "hidden" in sub:
                sub["hidden"] = tuple(int(h) for h in sub["hidden"])
            doc[key] = section(**sub)
        if "seeds" in doc:
            doc["seeds"] = tuple(int(s) for s in doc["seeds"])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed), seeds=(int(seed),))

    def with_paths(self, **kw) -> "RunConfig":
        return replace(self, paths=replace(self.paths, **kw))


def ensure_parent(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p
