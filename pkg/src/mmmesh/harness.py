"""Experiment harness behind the CLI: config schema, runs, comparisons,
timing benchmarks, and training orchestration.

Every command takes a RunConfig (YAML file), writes CSVs plus a resolved
config echo into the output directory, prints a short summary, and (unless
plots are disabled) renders matplotlib figures next to the CSVs.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np
import yaml

from . import figures
from .env import EnvConfig, SchedulingEnv
from .errors import ConfigError, MeshError
from .evaluate import evaluate_actor, greedy_actor, policy_actor, run_episode, summarize
from .nets import GaussianPolicy, load_checkpoint
from .ppo import TrainConfig, train
from .simulation import DEFAULT_WORKLOAD_TOTALS, WORKLOAD_KINDS, gen_traffic, save_traffic_csv
from .topology import BUILTIN_SIZES, generate_topology, load_topology, save_topology

EVAL_N0 = 120  # per-link packet budget pinned for evaluation runs


@dataclass
class RunConfig:
    topology: str = "small-10"
    topology_seed: int = 0
    workload: str = "uniform"
    total_packets: int | None = None
    interference_mode: str = "synthetic"
    level: float = 0.2
    levels: list = field(default_factory=list)  # non-empty -> sweep
    scheduler: str = "greedy"                   # "greedy" or "policy"
    checkpoint: str | None = None
    deterministic: bool = False                 # policy: mean action instead of sampling
    episodes: int = 30
    seed: int = 1
    alpha: float = 10.0
    beta: float = 1.0
    lag: bool = False
    continuous_rate: int = 0
    continuous_slots: int = 0
    max_slots: int = 500
    n0_override: int | None = EVAL_N0
    power_levels: int = 11
    exact_greedy_loss: bool = False
    normalize_vs_greedy: bool = False
    plots: bool = True
    out_dir: str = "results"
    train: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)

    def sweep_levels(self):
        return list(self.levels) if self.levels else [self.level]

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}


_BENCH_KEYS = {"topologies", "workloads", "schedulers", "decisions", "warmup",
               "max_decisions", "checkpoints"}


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    # accept a nested interference block as sugar for the two flat keys
    interference = raw.pop("interference", None)
    if interference is not None:
        if not isinstance(interference, dict):
            raise ConfigError("interference block must be a mapping")
        unknown = set(interference) - {"mode", "level", "levels"}
        if unknown:
            raise ConfigError(f"unknown interference keys: {sorted(unknown)}")
        if "mode" in interference:
            raw["interference_mode"] = interference["mode"]
        if "level" in interference:
            raw["level"] = interference["level"]
        if "levels" in interference:
            raw["levels"] = interference["levels"]
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dc_fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**raw)
    validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig):
    if cfg.workload not in WORKLOAD_KINDS:
        raise ConfigError(f"workload must be one of {WORKLOAD_KINDS}, got {cfg.workload!r}")
    if cfg.interference_mode not in ("synthetic", "geometric"):
        raise ConfigError(f"interference_mode must be synthetic or geometric")
    for lv in cfg.sweep_levels():
        if not (isinstance(lv, (int, float)) and 0.0 <= lv <= 1.0):
            raise ConfigError(f"interference level {lv!r} outside [0, 1]")
    if cfg.scheduler not in ("greedy", "policy"):
        raise ConfigError(f"scheduler must be greedy or policy, got {cfg.scheduler!r}")
    if cfg.scheduler == "policy" and not cfg.checkpoint:
        raise ConfigError("scheduler: policy requires a checkpoint path")
    if cfg.checkpoint and not Path(cfg.checkpoint).exists():
        raise ConfigError(f"checkpoint not found: {cfg.checkpoint}")
    if cfg.topology not in BUILTIN_SIZES and not Path(cfg.topology).exists():
        raise ConfigError(f"topology {cfg.topology!r} is neither built-in "
                          f"({sorted(BUILTIN_SIZES)}) nor an existing file")
    if cfg.episodes <= 0:
        raise ConfigError("episodes must be positive")
    if cfg.alpha <= 0 or cfg.beta < 0:
        raise ConfigError("need alpha > 0 and beta >= 0")
    if cfg.continuous_rate < 0 or cfg.continuous_slots < 0:
        raise ConfigError("continuous_rate and continuous_slots must be non-negative")
    if cfg.power_levels < 2:
        raise ConfigError("power_levels must be at least 2")
    if not isinstance(cfg.train, dict) or not isinstance(cfg.bench, dict):
        raise ConfigError("train and bench sections must be mappings")
    unknown = set(cfg.bench) - _BENCH_KEYS
    if unknown:
        raise ConfigError(f"unknown bench keys: {sorted(unknown)}")
    tc_known = set(TrainConfig.__dataclass_fields__)
    unknown = set(cfg.train) - tc_known
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")


def env_config(cfg: RunConfig, level: float | None = None) -> EnvConfig:
    return EnvConfig(
        topology=cfg.topology, topology_seed=cfg.topology_seed, workload=cfg.workload,
        total_packets=cfg.total_packets, interference_mode=cfg.interference_mode,
        level=cfg.level if level is None else level, alpha=cfg.alpha, beta=cfg.beta,
        seed=cfg.seed, lag=cfg.lag, max_slots=cfg.max_slots, n0_override=cfg.n0_override,
        continuous_rate=cfg.continuous_rate, continuous_slots=cfg.continuous_slots)


def _echo_config(cfg: RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config_echo.yaml", "w") as f:
        yaml.safe_dump(cfg.as_dict(), f, sort_keys=False)


def _policy_from_checkpoint(path, expected_state_dim: int, expected_action_dim: int):
    policy, _, header = load_checkpoint(path)
    sizes = policy.sizes
    if sizes[0] != expected_state_dim or sizes[-1] != expected_action_dim:
        raise ConfigError(
            f"checkpoint {path} was trained for state/action dims "
            f"{sizes[0]}/{sizes[-1]}, topology needs {expected_state_dim}/{expected_action_dim}")
    return policy, header


def _actor_for(cfg: RunConfig, env: SchedulingEnv, level_idx: int = 0):
    if cfg.scheduler == "greedy":
        return greedy_actor(power_levels=cfg.power_levels, exact_loss=cfg.exact_greedy_loss)
    policy, _ = _policy_from_checkpoint(cfg.checkpoint, env.state_dim, env.action_dim)
    return policy_actor(policy, deterministic=cfg.deterministic,
                        rng=np.random.default_rng([cfg.seed, 77, level_idx]))


def _episode_seed(cfg_seed: int, level_idx: int, episode: int):
    return [cfg_seed, level_idx, episode]


def _run_one_level(cfg: RunConfig, level_idx: int, level: float):
    """All episodes for one interference level; returns per-episode rows."""
    env = SchedulingEnv(env_config(cfg, level))
    actor = _actor_for(cfg, env, level_idx)
    greedy_env = None
    if cfg.normalize_vs_greedy and cfg.scheduler != "greedy":
        greedy_env = SchedulingEnv(env_config(cfg, level))
    rows = []
    for i in range(cfg.episodes):
        seed = _episode_seed(cfg.seed, level_idx, i)
        m = run_episode(env, actor, reset_seed=seed)
        row = {
            "level": level, "episode": i, "seed": ":".join(map(str, seed)),
            "injected": m.injected, "delivered": m.delivered, "dropped": m.dropped,
            "stranded": m.stranded, "slots": m.slots, "completed": int(m.completed),
            "goodput": m.goodput_strict, "goodput_dropbased": m.goodput,
            "total_reward": m.total_reward, "decision_ms": m.mean_decision_ms,
        }
        if greedy_env is not None:
            g = run_episode(greedy_env, greedy_actor(power_levels=cfg.power_levels),
                            reset_seed=seed)
            row["greedy_goodput"] = g.goodput_strict
        rows.append(row)
    return rows


def _run_level_worker(args):
    cfg_dict, level_idx, level = args
    cfg = RunConfig(**cfg_dict)
    return _run_one_level(cfg, level_idx, level)


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def cmd_run(cfg: RunConfig, out_dir=None, threads: int = 1, say=print) -> Path:
    """Run the configured scheduler over the configured episodes (optionally
    sweeping interference levels); writes episodes.csv and summary.csv."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    _echo_config(cfg, out)
    levels = cfg.sweep_levels()
    tasks = list(enumerate(levels))
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_level = list(pool.map(_run_level_worker,
                                      [(cfg.as_dict(), i, lv) for i, lv in tasks]))
    else:
        per_level = [_run_one_level(cfg, i, lv) for i, lv in tasks]

    ep_rows = [r for level_rows in per_level for r in level_rows]
    fieldnames = list(ep_rows[0].keys())
    _write_csv(out / "episodes.csv", fieldnames, ep_rows)

    sum_rows = []
    for (i, lv), level_rows in zip(tasks, per_level):
        gp = np.array([r["goodput"] for r in level_rows])
        row = {
            "level": lv, "episodes": len(level_rows),
            "goodput_mean": gp.mean(), "goodput_std": gp.std(),
            "goodput_dropbased_mean": float(np.mean([r["goodput_dropbased"] for r in level_rows])),
            "dropped_mean": float(np.mean([r["dropped"] for r in level_rows])),
            "delivered_mean": float(np.mean([r["delivered"] for r in level_rows])),
            "slots_mean": float(np.mean([r["slots"] for r in level_rows])),
            "reward_mean": float(np.mean([r["total_reward"] for r in level_rows])),
            "decision_ms_mean": float(np.mean([r["decision_ms"] for r in level_rows])),
            "all_completed": int(all(r["completed"] for r in level_rows)),
        }
        if "greedy_goodput" in level_rows[0]:
            g = float(np.mean([r["greedy_goodput"] for r in level_rows]))
            row["greedy_goodput_mean"] = g
            row["normalized_goodput"] = 100.0 * row["goodput_mean"] / g if g > 0 else math.nan
        sum_rows.append(row)
    _write_csv(out / "summary.csv", list(sum_rows[0].keys()), sum_rows)

    say(f"{cfg.scheduler} on {cfg.topology} / {cfg.workload}, "
        f"{cfg.episodes} episodes per level")
    for row in sum_rows:
        say(f"  level {row['level']:.2f}: goodput {row['goodput_mean']:.2f}% "
            f"(dropped {row['dropped_mean']:.1f}, slots {row['slots_mean']:.1f})")
    if cfg.plots:
        figures.plot_goodput_levels(
            [(r["level"], r["goodput_mean"], r["goodput_std"]) for r in sum_rows],
            out / "goodput.png",
            title=f"{cfg.scheduler} on {cfg.topology} ({cfg.workload})")
    return out


def cmd_compare(cfg: RunConfig, out_dir=None, threads: int = 1, say=print) -> Path:
    """Paired greedy-vs-policy goodput per interference level."""
    if not cfg.checkpoint:
        raise ConfigError("compare requires a checkpoint path")
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    _echo_config(cfg, out)
    levels = cfg.sweep_levels()
    tasks = [(cfg.as_dict(), i, lv) for i, lv in enumerate(levels)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_compare_level_worker, tasks))
    else:
        results = [_compare_level_worker(t) for t in tasks]

    rows = []
    for lv, greedy_gp, policy_gp in results:
        normalized = 100.0 * policy_gp / greedy_gp if greedy_gp > 0 else math.nan
        rows.append({"level": lv, "greedy_goodput": greedy_gp,
                     "aarl_goodput": policy_gp, "normalized": normalized})
    _write_csv(out / "compare.csv", ["level", "greedy_goodput", "aarl_goodput", "normalized"],
               rows)
    say(f"paired comparison on {cfg.topology} / {cfg.workload}, "
        f"{cfg.episodes} episodes per level")
    for r in rows:
        say(f"  level {r['level']:.2f}: greedy {r['greedy_goodput']:.2f}%, "
            f"policy {r['aarl_goodput']:.2f}%, normalized {r['normalized']:.1f}%")
    if cfg.plots:
        figures.plot_compare(
            [(r["level"], r["greedy_goodput"], r["aarl_goodput"], r["normalized"])
             for r in rows],
            out / "compare.png",
            title=f"{cfg.topology} / {cfg.workload}")
    return out


def _compare_level_worker(args):
    cfg_dict, level_idx, level = args
    cfg = RunConfig(**cfg_dict)
    env = SchedulingEnv(env_config(cfg, level))
    policy, _ = _policy_from_checkpoint(cfg.checkpoint, env.state_dim, env.action_dim)
    policy_act = policy_actor(policy, deterministic=cfg.deterministic,
                              rng=np.random.default_rng([cfg.seed, 77, level_idx]))
    seeds = [_episode_seed(cfg.seed, level_idx, i) for i in range(cfg.episodes)]
    greedy = summarize(evaluate_actor(
        env, greedy_actor(power_levels=cfg.power_levels), seeds))
    policy_sum = summarize(evaluate_actor(env, policy_act, seeds))
    return level, greedy.mean_goodput, policy_sum.mean_goodput


def time_decisions(env: SchedulingEnv, actor, base_seed: int, min_decisions: int = 30,
                   warmup: int = 5, max_decisions: int = 400) -> dict:
    """Wall-clock per-decision stats (ms); chains episodes until enough
    decisions are collected. Only the actor call is timed."""
    times = []
    k = 0
    needed = min_decisions + warmup
    while len(times) < needed and len(times) < max_decisions:
        obs = env.reset(seed=[base_seed, k])
        k += 1
        while not env.done and len(times) < max_decisions:
            t0 = time.perf_counter()
            raw = actor(env, obs)
            times.append(time.perf_counter() - t0)
            obs, _, _, _ = env.step(raw)
    arr = np.array(times[warmup:]) * 1e3
    return {"mean_ms": float(arr.mean()), "p50_ms": float(np.percentile(arr, 50)),
            "p95_ms": float(np.percentile(arr, 95)), "decisions": len(arr)}


def cmd_bench_timing(cfg: RunConfig, out_dir=None, say=print) -> Path:
    """Decision-latency benchmark across topologies, workloads, schedulers."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    _echo_config(cfg, out)
    bench = cfg.bench
    topologies = bench.get("topologies", list(BUILTIN_SIZES))
    workloads = bench.get("workloads", list(WORKLOAD_KINDS))
    schedulers = bench.get("schedulers", ["greedy", "policy"])
    decisions = int(bench.get("decisions", 30))
    warmup = int(bench.get("warmup", 5))
    max_decisions = int(bench.get("max_decisions", max(decisions + warmup, 60)))
    checkpoints = bench.get("checkpoints", {}) or {}

    rows = []
    for topo_kind in topologies:
        for workload in workloads:
            e_cfg = env_config(cfg)
            e_cfg.topology = topo_kind
            e_cfg.workload = workload
            env = SchedulingEnv(e_cfg)
            for sched in schedulers:
                if sched == "greedy":
                    actor = greedy_actor(power_levels=cfg.power_levels)
                else:
                    if topo_kind in checkpoints:
                        policy, _ = _policy_from_checkpoint(
                            checkpoints[topo_kind], env.state_dim, env.action_dim)
                    else:  # latency does not depend on the weights
                        policy = GaussianPolicy(
                            [env.state_dim, 256, 256, env.action_dim]
                            if topo_kind == "small-10" else
                            [env.state_dim, 1024, 1024, env.action_dim]
                            if topo_kind == "medium-48" else
                            [env.state_dim, 4096, 4096, env.action_dim],
                            rng=np.random.default_rng(0))
                    actor = policy_actor(policy, rng=np.random.default_rng(cfg.seed))
                stats = time_decisions(env, actor, base_seed=cfg.seed,
                                       min_decisions=decisions, warmup=warmup,
                                       max_decisions=max_decisions)
                rows.append({"topology": topo_kind, "workload": workload, "scheduler": sched,
                             **stats})
                say(f"  {topo_kind:10s} {workload:12s} {sched:7s} "
                    f"mean {stats['mean_ms']:9.3f} ms  p95 {stats['p95_ms']:9.3f} ms "
                    f"({stats['decisions']} decisions)")
    _write_csv(out / "timing.csv",
               ["topology", "workload", "scheduler", "mean_ms", "p50_ms", "p95_ms", "decisions"],
               rows)
    if cfg.plots:
        figures.plot_timing(
            [(r["topology"], r["workload"], r["scheduler"], r["mean_ms"]) for r in rows],
            out / "timing.png")
    return out


def cmd_train(cfg: RunConfig, out_dir=None, say=print):
    """Greedy statistics pass, then PPO training with checkpoints and the
    reward curve in the output directory."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    _echo_config(cfg, out)
    tc_kwargs = dict(cfg.train)
    tc_kwargs.setdefault("seed", cfg.seed)
    tc = TrainConfig(**tc_kwargs)
    env = SchedulingEnv(env_config(cfg))
    eval_env = SchedulingEnv(env.cfg, topo=env.topo)

    seeds = [100_000 + i for i in range(tc.eval_episodes)]
    greedy_metrics = evaluate_actor(
        eval_env, greedy_actor(power_levels=cfg.power_levels), seeds)
    _write_csv(out / "greedy_stats.csv",
               ["episode", "injected", "delivered", "dropped", "stranded", "slots",
                "completed", "goodput", "decision_ms"],
               [{"episode": i, "injected": m.injected, "delivered": m.delivered,
                 "dropped": m.dropped, "stranded": m.stranded, "slots": m.slots,
                 "completed": int(m.completed), "goodput": m.goodput_strict,
                 "decision_ms": m.mean_decision_ms}
                for i, m in enumerate(greedy_metrics)])
    gsum = summarize(greedy_metrics)
    say(f"greedy reference: goodput {gsum.mean_goodput:.2f}%, "
        f"dropped {gsum.mean_dropped:.1f}, slots {gsum.mean_slots:.1f}")

    result = train(env, tc, out, eval_env=eval_env, log=say)
    say(f"trained {result.steps} steps "
        f"({'early stop' if result.stopped_early else 'full budget'}); "
        f"best checkpoint: {result.best_checkpoint}")
    if result.final_eval is not None:
        pol = result.final_eval["policy"]
        say(f"final eval: goodput {pol.mean_goodput:.2f}%, dropped {pol.mean_dropped:.1f}, "
            f"completed {pol.all_completed}")
    if cfg.plots and result.curve:
        figures.plot_reward_curve(result.curve, out / "reward_curve.png",
                                  title=f"{cfg.topology} / {cfg.workload} "
                                        f"level {cfg.level:g}")
    return result


def cmd_gen_topology(kind: str, seed: int, out_path, buffer_capacity: int = 650, say=print):
    topo = generate_topology(kind, seed, buffer_capacity)
    save_topology(topo, out_path)
    say(f"wrote {kind} ({topo.num_nodes} nodes, {topo.num_links} links) to {out_path}")
    return out_path


def cmd_gen_traffic(topology: str, topology_seed: int, workload: str, total: int | None,
                    seed: int, out_path, say=print):
    if topology in BUILTIN_SIZES:
        topo = generate_topology(topology, topology_seed)
    else:
        topo = load_topology(topology)
    if total is None:
        try:
            total = DEFAULT_WORKLOAD_TOTALS[workload][topology]
        except KeyError:
            raise ConfigError(f"no default total for {workload!r} on {topology!r}; "
                              f"pass --total") from None
    tm = gen_traffic(topo, workload, total, seed)
    save_traffic_csv(tm, out_path)
    say(f"wrote {tm.total} packets ({workload}) to {out_path}")
    return out_path
