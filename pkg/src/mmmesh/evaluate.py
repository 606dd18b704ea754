"""Episode runners and goodput metrics for scheduler evaluation.

Goodput follows the drop-based definition, 100 * (1 - dropped/injected).
For episodes cut off at the slot limit that formula ignores packets still
stranded in buffers, so the strict variant 100 * delivered/injected is
also reported; comparisons use the strict one (a scheduler that never
drains anything should score 0, not 100).

The learned scheduler is a stochastic policy; its per-slot action draw is
part of the policy, not eval noise, so the default evaluation samples
(with a seeded generator for reproducibility). Deterministic mean-action
evaluation is available but measures a different, usually weaker policy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .greedy import greedy_schedule
from .simulation import StepOutcome


@dataclass
class EpisodeMetrics:
    injected: int
    delivered: int
    dropped: int
    stranded: int
    slots: int
    completed: bool            # drained (not cut off at max_slots)
    total_reward: float
    mean_decision_ms: float
    outcomes: list = field(default_factory=list, repr=False)

    @property
    def goodput(self) -> float:
        """100 minus the percentage of dropped traffic."""
        return 100.0 * (1.0 - self.dropped / self.injected) if self.injected else 100.0

    @property
    def goodput_strict(self) -> float:
        """Delivered percentage; stranded packets count as lost."""
        return 100.0 * self.delivered / self.injected if self.injected else 100.0


def run_episode(env, action_fn, reset_seed=None, keep_outcomes=False) -> EpisodeMetrics:
    """Run one episode to completion or truncation.

    action_fn(env, obs) -> raw action vector. Decision wall time is
    measured around action_fn only.
    """
    obs = env.reset(seed=reset_seed)
    total_reward = 0.0
    times = []
    outcomes = []
    while not env.done:
        t0 = time.perf_counter()
        raw = action_fn(env, obs)
        times.append(time.perf_counter() - t0)
        obs, r, done, info = env.step(raw)
        total_reward += r
        if keep_outcomes:
            outcomes.append(info["outcome"])
    ep = env.episode
    return EpisodeMetrics(
        injected=ep.injected, delivered=ep.delivered, dropped=ep.dropped_total,
        stranded=ep.in_system, slots=ep.slot, completed=(ep.in_system == 0),
        total_reward=total_reward,
        mean_decision_ms=float(np.mean(times)) * 1e3 if times else 0.0,
        outcomes=outcomes)


def policy_actor(policy, deterministic=False, rng=None):
    """Actor closure over a GaussianPolicy. Stochastic (the default) draws
    from the given generator, falling back to a fixed seed 0 stream."""
    if not deterministic and rng is None:
        rng = np.random.default_rng(0)

    def act(env, obs):
        return policy.act(obs, deterministic=deterministic, rng=rng)
    return act


def greedy_actor(power_levels=11, exact_loss=False):
    """Greedy decisions; the per-slot random link order comes from the
    episode's own RNG, so a given reset seed reproduces exactly."""
    def act(env, obs):
        return greedy_schedule(env.episode.occupancies(), env.budget, env.interference,
                               power_levels=power_levels, rng=env.episode.rng,
                               exact_loss=exact_loss)
    return act


def evaluate_actor(env, action_fn, seeds, keep_outcomes=False):
    return [run_episode(env, action_fn, reset_seed=s, keep_outcomes=keep_outcomes)
            for s in seeds]


@dataclass
class EvalSummary:
    episodes: int
    mean_goodput: float          # strict: stranded counts as lost
    mean_goodput_dropbased: float
    mean_dropped: float
    mean_delivered: float
    mean_slots: float
    mean_reward: float
    mean_decision_ms: float
    all_completed: bool


def summarize(metrics) -> EvalSummary:
    ms = list(metrics)
    return EvalSummary(
        episodes=len(ms),
        mean_goodput=float(np.mean([m.goodput_strict for m in ms])),
        mean_goodput_dropbased=float(np.mean([m.goodput for m in ms])),
        mean_dropped=float(np.mean([m.dropped for m in ms])),
        mean_delivered=float(np.mean([m.delivered for m in ms])),
        mean_slots=float(np.mean([m.slots for m in ms])),
        mean_reward=float(np.mean([m.total_reward for m in ms])),
        mean_decision_ms=float(np.mean([m.mean_decision_ms for m in ms])),
        all_completed=all(m.completed for m in ms))
