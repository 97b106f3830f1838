"""Action repair: targeted sign-gradient search (BIM) and a Nelder-Mead baseline.

Both engines look for a patch p such that the executed action
``clip(a + p, A_min, A_max)`` is predicted to land in [psi_thres, psi_max].
They only see the state features and the proposed action, never the policy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from mortar.datagen import RepairBounds
from mortar.monitor import PredictionModel

NM_PENALTY = 10.0
NM_INITIAL_STEP = 0.1


class Status(str, Enum):
    PASS_THROUGH = "pass_through"
    REPAIRED_SAFE = "repaired_safe"
    BEST_EFFORT = "best_effort"


@dataclass(frozen=True)
class RepairConfig:
    bounds: RepairBounds
    psi_thres: float = 0.0
    alpha: float = 1.0
    eps: float = 0.1
    max_iter: int = 3
    optimizer: str = "bim"
    nm_max_iter: int = 100

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.max_iter < 1 or self.nm_max_iter < 1:
            raise ValueError("iteration budgets must be at least 1")
        if self.optimizer not in ("bim", "nelder_mead"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.psi_thres < self.bounds.psi_max:
            raise ValueError(
                f"repair needs psi_thres ({self.psi_thres}) < psi_max ({self.bounds.psi_max})"
            )

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.bounds.A_min)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.bounds.A_max)


@dataclass(frozen=True)
class RepairOutcome:
    action: np.ndarray  # executed (repaired) action, clip(a_t + patch)
    patch: np.ndarray
    psi: float  # predicted score of ``action``
    iterations: int
    status: Status
    model_calls: int
    wall_ms: float
    message: str = ""


def _in_target(psi: float, cfg: RepairConfig) -> bool:
    return cfg.psi_thres <= psi <= cfg.bounds.psi_max


def _finish(best_action, best_psi, patch, iterations, calls, t0, cfg, message=""):
    status = Status.REPAIRED_SAFE if _in_target(best_psi, cfg) else Status.BEST_EFFORT
    return RepairOutcome(
        action=best_action,
        patch=patch,
        psi=best_psi,
        iterations=iterations,
        status=status,
        model_calls=calls,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        message=message,
    )


def _better(psi: float, best_psi: float, cfg: RepairConfig) -> bool:
    # in-target candidates beat everything else; otherwise higher psi wins
    return (_in_target(psi, cfg), psi) > (_in_target(best_psi, cfg), best_psi)


def bim_repair(model: PredictionModel, state, action, cfg: RepairConfig) -> RepairOutcome:
    """Targeted basic iterative method on the action block of the model input.

    Iterate x_k = x_{k-1} + eps * sign(grad_x psi) from x_0 = a_t, and after each
    step check the action that would actually execute,
    ``clip(a_t + alpha * (x_k - a_t), A_min, A_max)``. Stop as soon as its
    prediction falls in [psi_thres, psi_max]; otherwise return the best
    candidate seen, the (clipped) original included.
    """
    t0 = time.perf_counter()
    a_t = np.asarray(action, dtype=np.float64)
    lo, hi = cfg.lo, cfg.hi
    original = np.clip(a_t, lo, hi)
    original_psi = model.predict(state, original)
    calls = 1
    zero = np.zeros_like(a_t)
    if _in_target(original_psi, cfg):
        return _finish(original, original_psi, zero, 0, calls, t0, cfg)

    best_action, best_psi, best_patch = original, original_psi, zero
    x = a_t.copy()
    for k in range(1, cfg.max_iter + 1):
        _, grad = model.value_and_grad_action(state, x)
        calls += 1
        if not np.all(np.isfinite(grad)):
            return _finish(
                original, original_psi, zero, k, calls, t0, cfg,
                message="non-finite gradient; action left unchanged",
            )
        x = x + cfg.eps * np.sign(grad)
        patch = cfg.alpha * (x - a_t)
        candidate = np.clip(a_t + patch, lo, hi)
        psi = model.predict(state, candidate)
        calls += 1
        if _in_target(psi, cfg):
            return _finish(candidate, psi, patch, k, calls, t0, cfg)
        if psi > best_psi:
            best_action, best_psi, best_patch = candidate, psi, patch
    return _finish(best_action, best_psi, best_patch, cfg.max_iter, calls, t0, cfg)


def nelder_mead_repair(model: PredictionModel, state, action, cfg: RepairConfig) -> RepairOutcome:
    """Penalised least-squares version of the repair problem, solved by Nelder-Mead.

    J(p) = (psi - psi_max)^2 + 10 * max(0, psi_thres - psi)^2 with
    psi = M(s, clip(a_t + p)). The budget counts simplex update rounds.
    """
    t0 = time.perf_counter()
    a_t = np.asarray(action, dtype=np.float64)
    lo, hi = cfg.lo, cfg.hi
    psi_max = cfg.bounds.psi_max
    evaluated = []  # (in_target, -J, order, patch, action, psi)

    def objective(patch: np.ndarray) -> float:
        candidate = np.clip(a_t + patch, lo, hi)
        psi = model.predict(state, candidate)
        j = (psi - psi_max) ** 2 + NM_PENALTY * max(0.0, cfg.psi_thres - psi) ** 2
        evaluated.append((_in_target(psi, cfg), -j, -len(evaluated), patch.copy(), candidate, psi))
        return j

    n = a_t.size
    simplex = np.vstack([np.zeros(n), NM_INITIAL_STEP * np.eye(n)])
    res = minimize(
        objective,
        np.zeros(n),
        method="Nelder-Mead",
        options={"maxiter": cfg.nm_max_iter, "initial_simplex": simplex, "adaptive": False},
    )
    # The unconstrained optimum sits on psi_max and is often approached from
    # just above it, so in-band vertices are preferred over a lower objective.
    _, _, _, patch, best_action, best_psi = max(evaluated, key=lambda e: e[:3])
    if not _in_target(best_psi, cfg):
        patch = res.x
        best_action = np.clip(a_t + patch, lo, hi)
        best_psi = next(e[5] for e in evaluated if np.array_equal(e[4], best_action))
        _, _, _, p0, a0, psi0 = evaluated[0]  # the unpatched action
        if _better(psi0, best_psi, cfg):
            patch, best_action, best_psi = p0, a0, psi0
    return _finish(best_action, best_psi, patch, int(res.nit), len(evaluated), t0, cfg)


def repair(model: PredictionModel, state, action, cfg: RepairConfig) -> RepairOutcome:
    if cfg.optimizer == "bim":
        return bim_repair(model, state, action, cfg)
    return nelder_mead_repair(model, state, action, cfg)


def pass_through(action) -> RepairOutcome:
    a = np.asarray(action, dtype=np.float64)
    return RepairOutcome(a, np.zeros_like(a), math.nan, 0, Status.PASS_THROUGH, 0, 0.0)
