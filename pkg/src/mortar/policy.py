"""Scripted black-box controllers and the action-noise wrapper used for data collection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mortar.envsim import EnvKind, EnvState, clip_action

PR_KP, PR_KD = 4.0, 3.0
BB_K1, BB_K2 = 0.8, 0.6
TC_GAIN = 2.0

DEFAULT_NOISE = {
    EnvKind.POINT_REACH: 0.3,
    EnvKind.BALL_BALANCE: 0.03,
    EnvKind.TARGET_CATCH: 0.3,
}


@dataclass(frozen=True)
class PdController:
    kind: EnvKind
    detune: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EnvKind(self.kind))
        if not 0 < self.detune <= 1:
            raise ValueError(f"detune must lie in (0, 1], got {self.detune}")

    def act(self, state: EnvState) -> np.ndarray:
        if state.kind is not self.kind:
            raise ValueError(f"{self.kind.value} controller given a {state.kind.value} state")
        d = self.detune
        v = state.values
        if self.kind is EnvKind.POINT_REACH:
            cmd = d * (PR_KP * (v[4:6] - v[0:2]) - PR_KD * v[2:4])
        elif self.kind is EnvKind.BALL_BALANCE:
            cmd = np.array([d * (-BB_K1 * v[0] - BB_K2 * v[1])])
        else:
            cmd = d * TC_GAIN * (v[2:4] - v[0:2])
        return clip_action(self.kind, cmd)

    def describe(self) -> str:
        return f"pd(d={self.detune:g})"


@dataclass
class NoisyPolicy:
    """Gaussian action noise around an inner policy, added before clipping."""

    inner: PdController
    noise_std: float
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        self.rng = np.random.default_rng(self.seed)

    @property
    def kind(self) -> EnvKind:
        return self.inner.kind

    def act(self, state: EnvState) -> np.ndarray:
        a = self.inner.act(state)
        if self.noise_std == 0:
            return a
        return clip_action(self.kind, a + self.rng.normal(0.0, self.noise_std, a.shape))

    def clone(self, seed: int) -> "NoisyPolicy":
        return NoisyPolicy(self.inner, self.noise_std, seed)

    def describe(self) -> str:
        return f"{self.inner.describe()}+noise({self.noise_std:g})"


Policy = PdController | NoisyPolicy


def act(policy: Policy, state: EnvState) -> np.ndarray:
    return policy.act(state)


def noisy_act(policy: NoisyPolicy, state: EnvState) -> np.ndarray:
    return policy.act(state)
