"""mmWave mesh backhaul: slot-level simulator, greedy power scheduler, and
a PPO-trained alternative, with an experiment CLI."""

from .errors import (CheckpointError, ConfigError, MeshError, RadioDomainError,
                     SimulationError, TopologyError, TrainingError)
from .topology import (BUILTIN_SIZES, DEFAULT_BUFFER_CAPACITY, Link, LinkBuffer, Node,
                       RoutingTable, Topology, build_topology, compute_routes,
                       generate_topology, load_topology, save_topology)
from .radio import (InterferenceMatrix, LinkBudget, capacity, directivity,
                    effective_power, effective_powers, episode_radio, fspl,
                    gen_interference_geometric, gen_interference_synthetic, link_budget,
                    load_interference_csv, packets_per_slot, packets_per_slot_all,
                    received_power, save_interference_csv)
from .simulation import (DEFAULT_WORKLOAD_TOTALS, WORKLOAD_KINDS, EpisodeState, Packet,
                         StepOutcome, TrafficMatrix, apply_schedule, gen_traffic,
                         init_episode, inject_continuous, load_traffic_csv,
                         predict_demand, save_traffic_csv, write_step_log)
from .greedy import (aggregate_throughput, capacity_gain, capacity_loss,
                     greedy_decision_time, greedy_schedule, power_grid)
from .env import EnvConfig, RewardParams, SchedulingEnv, decode_action, encode_state, reward
from .nets import (GaussianPolicy, MlpNetwork, ValueNetwork, count_parameters,
                   load_checkpoint, save_checkpoint)
from .ppo import Adam, TrainConfig, TrainResult, gae_advantages, ppo_loss, train
from .evaluate import (EpisodeMetrics, EvalSummary, evaluate_actor, greedy_actor,
                       policy_actor, run_episode, summarize)

__version__ = "0.1.0"

__all__ = [
    "MeshError", "TopologyError", "RadioDomainError", "SimulationError", "ConfigError",
    "TrainingError", "CheckpointError",
    "Topology", "Node", "Link", "LinkBuffer", "RoutingTable", "BUILTIN_SIZES",
    "DEFAULT_BUFFER_CAPACITY", "build_topology", "generate_topology", "compute_routes",
    "save_topology", "load_topology",
    "LinkBudget", "InterferenceMatrix", "fspl", "directivity", "received_power",
    "link_budget", "capacity", "effective_power", "effective_powers", "packets_per_slot",
    "packets_per_slot_all", "gen_interference_synthetic", "gen_interference_geometric",
    "episode_radio", "save_interference_csv", "load_interference_csv",
    "Packet", "TrafficMatrix", "EpisodeState", "StepOutcome", "WORKLOAD_KINDS",
    "DEFAULT_WORKLOAD_TOTALS", "gen_traffic", "init_episode", "apply_schedule",
    "inject_continuous", "predict_demand", "save_traffic_csv", "load_traffic_csv",
    "write_step_log",
    "greedy_schedule", "greedy_decision_time", "capacity_gain", "capacity_loss",
    "aggregate_throughput", "power_grid",
    "EnvConfig", "SchedulingEnv", "RewardParams", "reward", "decode_action", "encode_state",
    "MlpNetwork", "GaussianPolicy", "ValueNetwork", "count_parameters", "save_checkpoint",
    "load_checkpoint",
    "TrainConfig", "TrainResult", "Adam", "train", "ppo_loss", "gae_advantages",
    "EpisodeMetrics", "EvalSummary", "run_episode", "evaluate_actor", "policy_actor",
    "greedy_actor", "summarize",
]
