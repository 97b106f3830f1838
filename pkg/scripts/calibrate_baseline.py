"""Sweep PD detune and action noise to find a baseline success rate in a target band.

The repair experiments need a policy that fails often but not always. This grid
search evaluates the noiseless detuned controller (what ``mortar run`` executes)
and the noisy data-collection policy for each setting, and prints a CSV.

    python3 scripts/calibrate_baseline.py BallBalance --spec strict --horizon 300 \
        --detune 0.02,0.04,0.08 --noise 0.01,0.03
"""

import argparse

import numpy as np

from mortar import envsim, stl
from mortar.envsim import EnvConfig
from mortar.harness import episode_seed, run_episode
from mortar.policy import NoisyPolicy, PdController


def floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def success_rate(env, policy, formula, episodes, seed) -> float:
    hits = []
    for e in range(episodes):
        pol = policy.clone(e) if hasattr(policy, "clone") else policy
        hits.append(run_episode(env.with_seed(episode_seed(seed, e)), pol, formula).success)
    return float(np.mean(hits))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("env", choices=[k.value for k in envsim.EnvKind])
    parser.add_argument("--spec", default="standard", choices=("standard", "strict"))
    parser.add_argument("--horizon", type=int, default=120)
    parser.add_argument("--detune", type=floats, default=floats("0.25,0.5,1.0"))
    parser.add_argument("--noise", type=floats, default=floats("0.1,0.3,1.0"))
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--band", type=floats, default=floats("0.2,0.6"),
                        help="target range for the noiseless success rate")
    args = parser.parse_args()

    env = EnvConfig(args.env, horizon=args.horizon)
    formula = stl.parse_stl(envsim.spec(env.kind, args.spec))
    lo, hi = args.band
    print("detune,noise_std,success_pd,success_noisy,in_band")
    for d in args.detune:
        pd = PdController(env.kind, d)
        base = success_rate(env, pd, formula, args.episodes, args.seed)
        for s in args.noise:
            noisy = success_rate(env, NoisyPolicy(pd, s, args.seed), formula, args.episodes, args.seed)
            print(f"{d},{s},{base:.4f},{noisy:.4f},{int(lo <= base <= hi)}")


if __name__ == "__main__":
    main()
