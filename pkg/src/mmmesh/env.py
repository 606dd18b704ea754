"""RL wrapper around the simulator: state encoding, action decoding, reward.

One environment step is one slot. The state is a flat vector of three
blocks: per-link buffer load fractions (E), per-link share of all packets
currently in the system (E), and the row-major interference matrix
normalized by the strongest full-power link signal, clamped to [0, 1]
(E^2). Actions are raw per-link reals decoded onto the 0.01 power grid.

Reward per slot (drop-move form): -beta - alpha*D/P + M/P, where P is the
packet count before the slot, D the drops and M the moves during it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, SimulationError
from .radio import episode_radio
from .simulation import (DEFAULT_WORKLOAD_TOTALS, StepOutcome, TrafficSampler, apply_schedule,
                         gen_traffic, init_episode, inject_continuous, is_terminal,
                         predict_occupancies)
from .topology import Link, Topology, compute_routes, generate_topology, load_topology, BUILTIN_SIZES


@dataclass
class RewardParams:
    alpha: float = 10.0  # drop penalty scale: 10 for the DS agent, 1 for DI
    beta: float = 1.0    # per-slot penalty

    def __post_init__(self):
        if self.alpha <= 0 or self.beta < 0:
            raise ConfigError(f"need alpha > 0 and beta >= 0, got {self.alpha}, {self.beta}")


def reward(o: StepOutcome, p: RewardParams) -> float:
    if o.in_system_before <= 0:
        raise SimulationError("reward undefined for an empty system (P = 0)")
    P = o.in_system_before
    return -p.beta - p.alpha * o.dropped / P + o.moved / P


def decode_action(raw) -> np.ndarray:
    """Clamp to [0,1], then round to the nearest 0.01 (ties away from zero)."""
    x = np.clip(np.asarray(raw, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 100.0 + 0.5) / 100.0


def interference_state_block(im_matrix: np.ndarray, p_r: np.ndarray) -> np.ndarray:
    """Row-major interference entries over the strongest link signal, in [0,1]."""
    return np.clip(im_matrix / p_r.max(), 0.0, 1.0).ravel().astype(np.float32)


def encode_state(st, norm_interference: np.ndarray | None = None,
                 occupancies: np.ndarray | None = None) -> np.ndarray:
    occ = st.occupancies() if occupancies is None else occupancies
    b1 = occ / st.topo.buffer_capacity
    total = occ.sum()
    b2 = occ / total if total > 0 else np.zeros_like(b1, dtype=np.float64)
    b3 = (interference_state_block(st.interference.matrix, st.budget.p_r)
          if norm_interference is None else norm_interference)
    return np.concatenate([b1, b2, b3]).astype(np.float32)


@dataclass
class EnvConfig:
    topology: str = "small-10"      # built-in kind or path to a topology file
    topology_seed: int = 0
    workload: str = "uniform"
    total_packets: int | None = None  # None -> per-workload default table
    interference_mode: str = "synthetic"
    level: float = 0.2
    alpha: float = 10.0
    beta: float = 1.0
    seed: int = 0
    lag: bool = False               # one-slot decision lag with predicted demand
    max_slots: int = 500            # truncation guard for never-draining schedules
    reward_kind: str = "drop-move"  # or "delay"
    n0_override: int | None = None  # force every link's packet budget (eval uses 120)
    buffer_capacity: int = 650
    continuous_rate: int = 0        # packets injected per slot (0 = episodic drain)
    continuous_slots: int = 0       # slots with injection; drain afterwards

    def resolved_total(self, topo_kind: str) -> int:
        if self.total_packets is not None:
            return self.total_packets
        try:
            return DEFAULT_WORKLOAD_TOTALS[self.workload][topo_kind]
        except KeyError:
            raise ConfigError(
                f"no default packet total for workload {self.workload!r} on {topo_kind!r}; "
                f"set total_packets explicitly") from None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def build_env_topology(cfg: EnvConfig) -> Topology:
    if cfg.topology in BUILTIN_SIZES:
        topo = generate_topology(cfg.topology, cfg.topology_seed, cfg.buffer_capacity)
    else:
        topo = load_topology(cfg.topology, buffer_capacity=cfg.buffer_capacity)
    if cfg.n0_override is not None:
        links = [replace(l, pkts_per_slot=cfg.n0_override) for l in topo.links]
        topo = Topology(topo.nodes, links, topo.buffer_capacity)
    return topo


class SchedulingEnv:
    """Episodic drain environment: reset injects a fresh traffic matrix and
    draws a fresh interference realization; step applies one schedule.

    In lag mode the submitted action executes one slot later; observations
    are then the one-slot-ahead predicted demand under the schedule that
    is still in flight."""

    def __init__(self, cfg: EnvConfig, topo: Topology | None = None):
        if cfg.reward_kind not in ("drop-move", "delay"):
            raise ConfigError(f"unknown reward kind {cfg.reward_kind!r}")
        self.cfg = cfg
        self.topo = topo if topo is not None else build_env_topology(cfg)
        self.routes = compute_routes(self.topo)
        self.reward_params = RewardParams(cfg.alpha, cfg.beta)
        self.action_dim = self.topo.num_links
        self.state_dim = 2 * self.action_dim + self.action_dim ** 2
        self.total_packets = cfg.resolved_total(cfg.topology)
        self.episode_index = -1
        self.episode = None
        self.done = True
        self._pending = None
        self._norm_interference = None

    def reset(self, seed=None) -> np.ndarray:
        """Start a new episode. Without an explicit seed, episode seeds derive
        from (config seed, episode index) so successive episodes differ but
        the whole sequence replays exactly."""
        self.episode_index += 1
        ep_seed = [self.cfg.seed, self.episode_index] if seed is None else seed
        rng = np.random.default_rng(ep_seed)
        traffic = gen_traffic(self.topo, self.cfg.workload, self.total_packets, rng)
        budget, im = episode_radio(self.topo, self.cfg.interference_mode, self.cfg.level, rng)
        self.episode = init_episode(self.topo, self.routes, traffic, im, rng, budget=budget)
        self._norm_interference = interference_state_block(im.matrix, budget.p_r)
        self._pending = np.zeros(self.action_dim)
        self._sampler = (TrafficSampler(self.topo, self.cfg.workload, rng)
                         if self.cfg.continuous_rate > 0 else None)
        self.done = self._finished()  # zero-demand traffic is born terminal
        return self._observe()

    def _injection_pending(self) -> bool:
        return (self.cfg.continuous_rate > 0
                and self.episode.slot < self.cfg.continuous_slots)

    def _finished(self) -> bool:
        return is_terminal(self.episode) and not self._injection_pending()

    @property
    def budget(self):
        return self.episode.budget

    @property
    def interference(self):
        return self.episode.interference

    def _observe(self) -> np.ndarray:
        if self.cfg.lag and not self.done:
            pred = predict_occupancies(self.episode, self._pending)
            return encode_state(self.episode, self._norm_interference, occupancies=pred)
        return encode_state(self.episode, self._norm_interference)

    def _slot_reward(self, outcome: StepOutcome) -> float:
        if self.cfg.reward_kind == "delay":
            return -self.reward_params.beta - float(outcome.delay_steps)
        return reward(outcome, self.reward_params)

    def step(self, raw_action):
        """Returns (state, reward, done, info); info = {"outcome": StepOutcome,
        "truncated": bool}."""
        if self.done:
            raise SimulationError("step() called on a finished episode; call reset()")
        if self._injection_pending():
            inject_continuous(self.episode, self.cfg.continuous_rate,
                              sampler=self._sampler)
        decoded = decode_action(raw_action)
        if self.cfg.lag:
            exec_powers, self._pending = self._pending, decoded
        else:
            exec_powers = decoded
        outcome = apply_schedule(self.episode, exec_powers)
        r = self._slot_reward(outcome)
        truncated = (not self._finished()) and self.episode.slot >= self.cfg.max_slots
        self.done = self._finished() or truncated
        return self._observe(), r, self.done, {"outcome": outcome, "truncated": truncated}
