"""Analytic desk-scale control tasks.

Three plants with bounded actions and a single ``dist`` channel that the task
specifications are written over:

* ``PointReach``: planar double integrator driven toward a fixed target.
* ``BallBalance``: ball on a tilting beam, small-angle model.
* ``TargetCatch``: velocity-commanded agent intercepting a target moving in
  a straight line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from mortar.stl import SignalTrace

GRAVITY = 9.81
MAX_SPEED = 2.0  # PointReach velocity clamp


class EnvKind(str, Enum):
    POINT_REACH = "PointReach"
    BALL_BALANCE = "BallBalance"
    TARGET_CATCH = "TargetCatch"


# per-component physical action bounds
ACTION_BOUNDS = {
    EnvKind.POINT_REACH: (np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
    EnvKind.BALL_BALANCE: (np.array([-0.1]), np.array([0.1])),
    EnvKind.TARGET_CATCH: (np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
}

# layout of EnvState.values
STATE_NAMES = {
    EnvKind.POINT_REACH: ("px", "py", "vx", "vy", "qx", "qy"),
    EnvKind.BALL_BALANCE: ("x", "xdot"),
    EnvKind.TARGET_CATCH: ("px", "py", "tx", "ty", "tvx", "tvy"),
}

SPECS = {
    (EnvKind.POINT_REACH, "standard"): "F(dist <= 0.24)",
    (EnvKind.POINT_REACH, "strict"): "F(dist <= 0.06)",
    (EnvKind.BALL_BALANCE, "standard"): "G[1,5](dist <= 0.25)",
    (EnvKind.BALL_BALANCE, "strict"): "G[1,5](dist <= 0.1)",
    (EnvKind.TARGET_CATCH, "standard"): "F(dist <= 0.1)",
}


class EpisodeFinished(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    kind: EnvKind
    dt: float = 1.0 / 60.0
    horizon: int = 300
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", EnvKind(self.kind))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")

    def with_seed(self, seed: int) -> "EnvConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class EnvState:
    kind: EnvKind
    values: np.ndarray = field(repr=False)
    t: int = 0

    def features(self, dt: float) -> np.ndarray:
        """State vector fed to the prediction model: plant values plus elapsed time."""
        return np.append(self.values, self.t * dt)


def action_dim(kind: EnvKind) -> int:
    return len(ACTION_BOUNDS[EnvKind(kind)][0])


def feature_dim(kind: EnvKind) -> int:
    return len(STATE_NAMES[EnvKind(kind)]) + 1


def clip_action(kind: EnvKind, action) -> np.ndarray:
    lo, hi = ACTION_BOUNDS[EnvKind(kind)]
    return np.clip(np.asarray(action, dtype=np.float64), lo, hi)


def reset(config: EnvConfig) -> EnvState:
    rng = np.random.default_rng(config.seed)
    kind = config.kind
    if kind is EnvKind.POINT_REACH:
        p = rng.uniform(-1.0, 1.0, 2)
        q = rng.uniform(-1.0, 1.0, 2)
        while np.linalg.norm(p - q) < 0.5:
            q = rng.uniform(-1.0, 1.0, 2)
        values = np.concatenate([p, np.zeros(2), q])
    elif kind is EnvKind.BALL_BALANCE:
        values = np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.1, 0.1)])
    else:
        angle = rng.uniform(0.0, 2 * np.pi)
        speed = rng.uniform(0.2, 0.5)
        direction = np.array([np.cos(angle), np.sin(angle)])
        values = np.concatenate([np.zeros(2), direction, -speed * direction])
    return EnvState(kind, values, 0)


def step(state: EnvState, action, config: EnvConfig) -> EnvState:
    if state.t >= config.horizon:
        raise EpisodeFinished(f"episode already ran {config.horizon} steps")
    if state.kind is not config.kind:
        raise ValueError(f"state kind {state.kind} does not match config {config.kind}")
    a = np.asarray(action, dtype=np.float64)
    v = state.values
    dt = config.dt
    if state.kind is EnvKind.POINT_REACH:
        p, vel, q = v[0:2], v[2:4], v[4:6]
        p_next = p + vel * dt
        vel_next = vel + a * dt
        speed = np.hypot(vel_next[0], vel_next[1])
        if speed > MAX_SPEED:
            vel_next = vel_next * (MAX_SPEED / speed)
        values = np.concatenate([p_next, vel_next, q])
    elif state.kind is EnvKind.BALL_BALANCE:
        x, xdot = v
        values = np.array([x + xdot * dt, xdot + GRAVITY * a[0] * dt])
    else:
        p, tgt, tvel = v[0:2], v[2:4], v[4:6]
        values = np.concatenate([p + a * dt, tgt + tvel * dt, tvel])
    return EnvState(state.kind, values, state.t + 1)


def distance(state: EnvState) -> float:
    v = state.values
    if state.kind is EnvKind.POINT_REACH:
        return float(np.hypot(v[0] - v[4], v[1] - v[5]))
    if state.kind is EnvKind.BALL_BALANCE:
        return float(abs(v[0]))
    return float(np.hypot(v[0] - v[2], v[1] - v[3]))


def channels(states: Sequence[EnvState], dt: float) -> SignalTrace:
    if not states:
        raise ValueError("need at least one state")
    kind = states[0].kind
    if any(s.kind is not kind for s in states):
        raise ValueError("trace mixes environment kinds")
    return SignalTrace(dt, {"dist": np.array([distance(s) for s in states])})


def spec(kind: EnvKind, mode: str = "standard") -> str:
    kind = EnvKind(kind)
    try:
        return SPECS[(kind, mode)]
    except KeyError:
        if mode not in ("standard", "strict"):
            raise ValueError(f"unknown spec mode {mode!r}") from None
        raise ValueError(f"{mode} specification is not applicable to {kind.value}") from None
