"""PPO trainer over the scheduling environment, from scratch in numpy.

Single-environment rollouts, GAE, and the clipped surrogate objective with
hand-derived gradients (no autograd). Defaults mirror the common
Stable-Baselines-style settings: two-sided clip 0.2, gamma 0.99, lambda
0.95, 10 epochs over 2048-step rollouts, Adam 3e-4 with eps 1e-5, value
coefficient 0.5, entropy coefficient 0.01, gradient-norm clip 0.5.

A checkpoint plus a reward-curve row is written every `checkpoint_every`
environment steps. Training can stop early once the curve plateaus over
three consecutive checkpoints AND a deterministic held-out evaluation
drops no more packets than paired greedy runs AND every evaluation
episode actually drains (without the last condition a policy that never
moves anything would "match" greedy whenever greedy has zero drops).
"""

from __future__ import annotations

import csv
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, TrainingError
from .evaluate import evaluate_actor, greedy_actor, policy_actor, summarize
from .nets import GaussianPolicy, ValueNetwork, gaussian_log_prob, sigmoid


@dataclass
class TrainConfig:
    total_steps: int = 1_200_000
    rollout_length: int = 2048
    minibatch_size: int = 256
    epochs: int = 10
    learning_rate: float = 3e-4
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: tuple = (256, 256)
    log_std_init: float = -0.5
    seed: int = 0
    checkpoint_every: int = 50_000
    eval_episodes: int = 10
    early_stop: bool = True
    plateau_tol: float = 0.05
    one_sided_clip: bool = False
    adam_eps: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError(f"clip_eps must be in (0,1), got {self.clip_eps}")
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ConfigError("gamma and gae_lambda must be in (0,1]")
        for name in ("rollout_length", "minibatch_size", "epochs", "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be non-negative")
        if self.rollout_length % self.minibatch_size != 0:
            raise ConfigError(
                f"rollout_length {self.rollout_length} must be a multiple of "
                f"minibatch_size {self.minibatch_size}")

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["hidden"] = list(self.hidden)
        return d


class RolloutBuffer:
    """Fixed-size on-policy storage; one add() per environment step."""

    def __init__(self, size: int, state_dim: int, action_dim: int):
        if size <= 0:
            raise ConfigError("rollout size must be positive")
        self.size = size
        self.states = np.zeros((size, state_dim), dtype=np.float32)
        self.actions = np.zeros((size, action_dim), dtype=np.float32)
        self.rewards = np.zeros(size, dtype=np.float64)
        self.values = np.zeros(size, dtype=np.float64)
        self.log_probs = np.zeros(size, dtype=np.float64)
        self.dones = np.zeros(size, dtype=np.float64)
        self.pos = 0

    def reset(self):
        self.pos = 0

    @property
    def full(self) -> bool:
        return self.pos >= self.size

    def add(self, state, action, reward, value, log_prob, done):
        if self.full:
            raise TrainingError("rollout buffer overflow")
        i = self.pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.values[i] = value
        self.log_probs[i] = log_prob
        self.dones[i] = float(done)
        self.pos += 1

    def compute_advantages(self, last_value: float, gamma: float, lam: float):
        return gae_advantages(self.rewards[:self.pos], self.values[:self.pos],
                              self.dones[:self.pos], last_value, gamma, lam)


def gae_advantages(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimation with episode-boundary resets.

    dones[t]=1 means state t+1 started a new episode: no bootstrap across
    it. Returns (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    if n == 0:
        raise TrainingError("empty rollout")
    adv = np.zeros(n)
    carry = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = values[t + 1] if t + 1 < n else last_value
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        carry = delta + gamma * lam * nonterminal * carry
        adv[t] = carry
    return adv, adv + values


def ppo_loss(batch: dict, policy: GaussianPolicy, value_net: ValueNetwork,
             clip_eps: float, value_coef: float = 0.5, entropy_coef: float = 0.01,
             one_sided: bool = False):
    """Clipped-surrogate loss with analytic gradients.

    batch keys: states (B,D), actions (B,A), old_log_probs (B,),
    advantages (B,), returns (B,). Returns (loss, grads, stats) with grads
    aligned to policy.params() + value_net.params().
    """
    states = batch["states"]
    actions = batch["actions"]
    old_logp = np.asarray(batch["old_log_probs"], dtype=np.float64)
    adv = np.asarray(batch["advantages"], dtype=np.float64)
    returns = np.asarray(batch["returns"], dtype=np.float64)
    B = states.shape[0]

    head, cache_p = policy.net.forward(states, want_cache=True)
    m = sigmoid(head)
    std = np.exp(policy.log_std.astype(np.float64))
    diff = (np.asarray(actions, dtype=np.float64) - m) / std
    logp = gaussian_log_prob(m, policy.log_std, actions)

    ratio = np.exp(logp - old_logp)
    if one_sided:
        # objective printed as min{r, 1+eps} * advantage
        obj = np.minimum(ratio, 1.0 + clip_eps) * adv
        dobj_dratio = np.where(ratio <= 1.0 + clip_eps, adv, 0.0)
    else:
        surr1 = ratio * adv
        surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
        obj = np.minimum(surr1, surr2)
        inside = (ratio > 1.0 - clip_eps) & (ratio < 1.0 + clip_eps)
        dobj_dratio = np.where(surr1 <= surr2, adv, adv * inside)
    policy_loss = -obj.mean()

    # chain rule back to the mean-head pre-activation and log_std
    dL_dlogp = -(dobj_dratio * ratio) / B
    g_mean = dL_dlogp[:, None] * (diff / std)      # dlogp/dm = diff/std
    g_head = g_mean * m * (1.0 - m)                # sigmoid
    policy_grads = policy.net.backward(cache_p, g_head.astype(policy.net.dtype))
    g_log_std = (dL_dlogp[:, None] * (diff * diff - 1.0)).sum(axis=0)
    g_log_std -= entropy_coef                      # entropy bonus: dH/dlog_std = 1
    entropy = policy.entropy()

    vout, cache_v = value_net.net.forward(states, want_cache=True)
    v = vout.squeeze(-1).astype(np.float64)
    verr = v - returns
    value_loss = float((verr * verr).mean())
    dL_dv = (2.0 * value_coef / B) * verr
    value_grads = value_net.net.backward(cache_v, dL_dv[:, None].astype(value_net.net.dtype))

    loss = float(policy_loss + value_coef * value_loss - entropy_coef * entropy)
    grads = policy_grads + [g_log_std.astype(policy.net.dtype)] + value_grads
    if not np.isfinite(loss) or any(not np.all(np.isfinite(g)) for g in grads):
        raise TrainingError("non-finite loss or gradient; aborting update")
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": float((old_logp - logp).mean()),
        "clip_fraction": float((np.abs(ratio - 1.0) > clip_eps).mean()),
    }
    return loss, grads, stats


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-5):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise TrainingError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        lr_t = self.lr * np.sqrt(c2) / c1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= lr_t * m / (np.sqrt(v) + self.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale grads in place so their global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for g in grads:
            g *= scale
    return total


def act(policy: GaussianPolicy, state, deterministic: bool = True, rng=None):
    """Raw action for one state; decode_action maps it onto the power grid."""
    return policy.act(state, deterministic=deterministic, rng=rng)


@dataclass
class TrainResult:
    steps: int
    checkpoints: list
    best_checkpoint: Path
    curve_path: Path
    stopped_early: bool
    curve: list = field(default_factory=list)
    final_eval: dict | None = None


def _policy_sample(policy, state, rng):
    """One stochastic action plus its log-density (single forward pass)."""
    m = policy.mean(state)
    std = np.exp(policy.log_std.astype(np.float64))
    action = (m + std * rng.standard_normal(m.shape)).astype(policy.net.dtype)
    return action, float(gaussian_log_prob(m, policy.log_std, action))


def _plateaued(rewards, tol: float) -> bool:
    if len(rewards) < 3:
        return False
    tail = rewards[-3:]
    scale = max(1.0, abs(tail[-1]))
    return (max(tail) - min(tail)) <= tol * scale


def train(env, cfg: TrainConfig, out_dir, eval_env=None, log=None) -> TrainResult:
    """Run PPO on a SchedulingEnv and leave a checkpoint trail in out_dir.

    eval_env: separate instance of the same configuration used for the
    held-out evaluations (deterministic policy vs paired greedy); built
    lazily from env.cfg when omitted. Returns the TrainResult with the
    best checkpoint chosen by held-out strict goodput.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    say = log if log is not None else (lambda msg: None)

    init_rng = np.random.default_rng([cfg.seed, 0])
    act_rng = np.random.default_rng([cfg.seed, 1])
    perm_rng = np.random.default_rng([cfg.seed, 2])
    sizes_p = [env.state_dim, *cfg.hidden, env.action_dim]
    sizes_v = [env.state_dim, *cfg.hidden, 1]
    policy = GaussianPolicy(sizes_p, rng=init_rng, log_std_init=cfg.log_std_init)
    value_net = ValueNetwork(sizes_v, rng=init_rng)
    opt = Adam(policy.params() + value_net.params(), lr=cfg.learning_rate, eps=cfg.adam_eps)
    buffer = RolloutBuffer(cfg.rollout_length, env.state_dim, env.action_dim)
    env_cfg_dict = env.cfg.as_dict() if hasattr(env, "cfg") else {}

    def save(steps):
        path = out_dir / f"checkpoint_{steps:010d}.ckpt"
        from .nets import save_checkpoint
        save_checkpoint(path, policy, value_net, steps=steps,
                        train_config=cfg.as_dict(), env_config=env_cfg_dict)
        return path

    curve_path = out_dir / "reward_curve.csv"
    curve = []

    def write_curve():
        with open(curve_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "mean_reward", "mean_episode_len", "drop_rate"])
            w.writerows(curve)

    checkpoints = [save(0)]
    write_curve()
    eval_seeds = [100_000 + i for i in range(cfg.eval_episodes)]
    if eval_env is None and cfg.total_steps > 0:
        from .env import SchedulingEnv
        eval_env = SchedulingEnv(env.cfg, topo=env.topo)
    baseline = None  # paired greedy eval summary, computed once
    best = (-np.inf, checkpoints[0])
    curve_rewards = []
    stopped_early = False
    final_eval = None

    obs = env.reset()
    ep_return = 0.0
    ep_len = 0
    ep_stats = []  # (return, length, drop_rate) since last checkpoint
    steps_done = 0
    next_ckpt = cfg.checkpoint_every

    def run_eval():
        nonlocal baseline, final_eval
        if baseline is None:
            baseline = summarize(evaluate_actor(eval_env, greedy_actor(), eval_seeds))
            say(f"  greedy baseline: goodput {baseline.mean_goodput:.2f}%, "
                f"dropped {baseline.mean_dropped:.1f}, slots {baseline.mean_slots:.0f}")
        eval_rng = np.random.default_rng([cfg.seed, 3])
        pol = summarize(evaluate_actor(eval_env, policy_actor(policy, rng=eval_rng),
                                       eval_seeds))
        final_eval = {"policy": pol, "greedy": baseline}
        return pol

    while steps_done < cfg.total_steps:
        buffer.reset()
        while not buffer.full:
            action, logp = _policy_sample(policy, obs, act_rng)
            value = float(value_net.value(obs))
            next_obs, r, done, info = env.step(action)
            ep_return += r
            ep_len += 1
            if info["truncated"]:
                r += cfg.gamma * float(value_net.value(next_obs))
            buffer.add(obs, action, r, value, logp, done)
            if done:
                ep = env.episode
                drop_rate = ep.dropped_total / ep.injected if ep.injected else 0.0
                ep_stats.append((ep_return, ep_len, drop_rate))
                ep_return, ep_len = 0.0, 0
                obs = env.reset()
            else:
                obs = next_obs
        last_value = 0.0 if buffer.dones[buffer.pos - 1] else float(value_net.value(obs))
        advantages, returns = buffer.compute_advantages(last_value, cfg.gamma, cfg.gae_lambda)
        # ratio baseline recomputed batched so first-epoch ratios are exactly 1
        old_logp = policy.log_prob(buffer.states, buffer.actions)

        for _ in range(cfg.epochs):
            order = perm_rng.permutation(cfg.rollout_length)
            for start in range(0, cfg.rollout_length, cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                mb_adv = advantages[idx]
                mb_adv = (mb_adv - mb_adv.mean()) / (mb_adv.std() + 1e-8)
                batch = {"states": buffer.states[idx], "actions": buffer.actions[idx],
                         "old_log_probs": old_logp[idx], "advantages": mb_adv,
                         "returns": returns[idx]}
                _, grads, _ = ppo_loss(batch, policy, value_net, cfg.clip_eps,
                                       cfg.value_coef, cfg.entropy_coef,
                                       one_sided=cfg.one_sided_clip)
                clip_grad_norm(grads, cfg.max_grad_norm)
                opt.step(grads)

        steps_done += cfg.rollout_length
        if steps_done >= next_ckpt or steps_done >= cfg.total_steps:
            while next_ckpt <= steps_done:
                next_ckpt += cfg.checkpoint_every
            if ep_stats:
                mean_r = float(np.mean([s[0] for s in ep_stats]))
                mean_len = float(np.mean([s[1] for s in ep_stats]))
                drop_rate = float(np.mean([s[2] for s in ep_stats]))
            else:  # no episode ended since the last checkpoint
                mean_r, mean_len, drop_rate = ep_return, float(ep_len), float("nan")
            curve.append([steps_done, mean_r, mean_len, drop_rate])
            curve_rewards.append(mean_r)
            write_curve()
            ep_stats = []
            checkpoints.append(save(steps_done))
            pol_eval = run_eval()
            say(f"step {steps_done}: mean_reward {mean_r:.3f}, eval goodput "
                f"{pol_eval.mean_goodput:.2f}%, dropped {pol_eval.mean_dropped:.1f}, "
                f"completed {pol_eval.all_completed}")
            if pol_eval.mean_goodput > best[0]:
                best = (pol_eval.mean_goodput, checkpoints[-1])
            if (cfg.early_stop and _plateaued(curve_rewards, cfg.plateau_tol)
                    and pol_eval.all_completed
                    and pol_eval.mean_dropped <= baseline.mean_dropped):
                stopped_early = True
                say(f"early stop at {steps_done} steps: reward plateau and eval "
                    f"drops {pol_eval.mean_dropped:.1f} <= greedy {baseline.mean_dropped:.1f}")
                break

    best_path = out_dir / "best.ckpt"
    shutil.copyfile(best[1], best_path)
    write_curve()
    return TrainResult(steps=steps_done, checkpoints=checkpoints, best_checkpoint=best_path,
                       curve_path=curve_path, stopped_early=stopped_early, curve=curve,
                       final_eval=final_eval)
