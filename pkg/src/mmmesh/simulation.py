"""Slot-stepped packet simulation over a mesh topology.

An episode starts with a traffic matrix injected into source buffers and
advances one slot per apply_schedule call: departures first (each link
dequeues up to its scheduled packet budget, FIFO), then arrivals in link-id
order. A packet that reaches its destination node is delivered; otherwise
it joins the buffer of its next-hop link, or is dropped if that buffer is
full. Arrivals never move again in the same slot, so every packet advances
at most one hop per slot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import islice

import numpy as np

from .errors import SimulationError
from .radio import InterferenceMatrix, LinkBudget, as_rng, link_budget, packets_per_slot_all
from .topology import RoutingTable, Topology, make_buffers

WORKLOAD_KINDS = ("uniform", "few-to-many", "many-to-few")

# default initial packet totals per (workload, built-in topology)
DEFAULT_WORKLOAD_TOTALS = {
    "uniform": {"small-10": 2304, "medium-48": 10812, "large-96": 45246},
    "few-to-many": {"small-10": 1800, "medium-48": 3088, "large-96": 57600},
    "many-to-few": {"small-10": 1800, "medium-48": 13184, "large-96": 57600},
}


class Packet:
    __slots__ = ("id", "src", "dst", "hops_taken", "created_slot")

    def __init__(self, pid, src, dst, created_slot=0):
        self.id = pid
        self.src = src
        self.dst = dst
        self.hops_taken = 0
        self.created_slot = created_slot

    def __repr__(self):
        return f"Packet({self.id}, {self.src}->{self.dst}, hops={self.hops_taken})"


@dataclass
class TrafficMatrix:
    demand: np.ndarray  # (N, N) packet counts, zero diagonal

    @property
    def total(self) -> int:
        return int(self.demand.sum())


class TrafficSampler:
    """Draws (src, dst) pairs for one workload kind.

    few-to-many restricts sources to a random 10% subset of nodes (at least
    one) and destinations to the complement; many-to-few is the reverse.
    The subset is drawn once at construction, so a persistent sampler keeps
    the node roles stable across a continuous run.
    """

    def __init__(self, topo: Topology, kind: str, rng):
        if kind not in WORKLOAD_KINDS:
            raise SimulationError(f"unknown workload kind {kind!r}, choose from {WORKLOAD_KINDS}")
        n = topo.num_nodes
        if n < 2:
            raise SimulationError("traffic needs at least 2 nodes")
        rng = as_rng(rng)
        self.kind = kind
        self.n = n
        if kind == "uniform":
            self.src_pool = self.dst_pool = np.arange(n)
        else:
            k = math.ceil(0.1 * n)
            few = np.sort(rng.choice(n, size=k, replace=False))
            many = np.setdiff1d(np.arange(n), few)
            if kind == "few-to-many":
                self.src_pool, self.dst_pool = few, many
            else:
                self.src_pool, self.dst_pool = many, few

    def sample(self, count: int, rng):
        """Vector of `count` (src, dst) pairs, src != dst guaranteed."""
        rng = as_rng(rng)
        srcs = self.src_pool[rng.integers(0, len(self.src_pool), size=count)]
        if self.kind == "uniform":
            # draw dst from the n-1 nodes that are not the source
            dsts = rng.integers(0, self.n - 1, size=count)
            dsts = dsts + (dsts >= srcs)
        else:
            dsts = self.dst_pool[rng.integers(0, len(self.dst_pool), size=count)]
        return srcs, dsts


def gen_traffic(topo: Topology, kind: str, total: int, seed) -> TrafficMatrix:
    """Traffic matrix with exactly `total` packets under the given workload."""
    if total < 0:
        raise SimulationError(f"total packets must be non-negative, got {total}")
    rng = as_rng(seed)
    sampler = TrafficSampler(topo, kind, rng)
    n = topo.num_nodes
    demand = np.zeros((n, n), dtype=np.int64)
    if total:
        srcs, dsts = sampler.sample(total, rng)
        np.add.at(demand, (srcs, dsts), 1)
    return TrafficMatrix(demand=demand)


@dataclass
class StepOutcome:
    """Per-slot accounting: P packets in system before the slot, M moved,
    D dropped on arrival, `delivered` reached their destination.
    delay_steps sums, over packets delivered this slot, the slots they
    spent in the system beyond their shortest-path hop count."""

    slot: int
    in_system_before: int
    moved: int
    dropped: int
    delivered: int
    delay_steps: int = 0


class EpisodeState:
    """Mutable per-episode state: buffers, counters, slot clock, RNG."""

    def __init__(self, topo, routes, budget, interference, rng):
        self.topo: Topology = topo
        self.routes: RoutingTable = routes
        self.budget: LinkBudget = budget
        self.interference: InterferenceMatrix = interference
        self.buffers = make_buffers(topo)
        self.rng = rng
        self.slot = 0
        self.injected = 0
        self.delivered = 0
        self.dropped_arrival = 0
        self.dropped_injection = 0
        self.in_system = 0
        self.next_packet_id = 0

    @property
    def dropped_total(self) -> int:
        return self.dropped_arrival + self.dropped_injection

    def occupancies(self) -> np.ndarray:
        return np.array([b.occupancy for b in self.buffers], dtype=np.int64)

    def inject(self, src: int, dst: int) -> bool:
        """Place one new packet in its first-hop buffer; False if it overflowed."""
        pkt = Packet(self.next_packet_id, src, dst, created_slot=self.slot)
        self.next_packet_id += 1
        self.injected += 1
        link_id = self.routes.hop(src, dst)
        if self.buffers[link_id].push(pkt):
            self.in_system += 1
            return True
        self.dropped_injection += 1
        return False

    def check_conservation(self):
        queued = sum(b.occupancy for b in self.buffers)
        if queued != self.in_system:
            raise SimulationError(
                f"slot {self.slot}: queued packets {queued} != tracked in_system {self.in_system}")
        if self.injected != self.delivered + self.dropped_total + self.in_system:
            raise SimulationError(
                f"slot {self.slot}: conservation violated: injected {self.injected} != "
                f"delivered {self.delivered} + dropped {self.dropped_total} + queued {self.in_system}")


def init_episode(topo: Topology, routes: RoutingTable, traffic: TrafficMatrix,
                 interference: InterferenceMatrix, seed,
                 budget: LinkBudget | None = None) -> EpisodeState:
    """Fill source buffers from the traffic matrix; overflow drops are counted.

    If no LinkBudget is given, one is derived from the seed exactly as
    episode_radio would, so the default stays consistent with a synthetic
    interference matrix generated from the same seed.
    """
    rng = as_rng(seed)
    if budget is None:
        budget = link_budget(topo, rng)
    st = EpisodeState(topo, routes, budget, interference, rng)
    n = topo.num_nodes
    for src in range(n):
        for dst in range(n):
            c = int(traffic.demand[src, dst])
            if c == 0:
                continue
            if src == dst:
                raise SimulationError(f"traffic matrix has self-traffic at node {src}")
            for _ in range(c):
                st.inject(src, dst)
    st.check_conservation()
    return st


def apply_schedule(st: EpisodeState, powers) -> StepOutcome:
    """Advance one slot under the given per-link power fractions."""
    powers = np.asarray(powers, dtype=float)
    if powers.shape != (st.topo.num_links,):
        raise SimulationError(
            f"schedule has {powers.shape} entries, topology has {st.topo.num_links} links")
    p_before = st.in_system
    budgets = packets_per_slot_all(powers, st.budget, st.interference)

    # Phase 1: departures, FIFO per link in ascending link id
    departed = []
    for l in st.topo.links:
        q = st.buffers[l.id]
        n = min(int(budgets[l.id]), q.occupancy)
        departed.append([q.pop() for _ in range(n)])

    # Phase 2: arrivals in link-id order; same-slot arrivals never re-depart
    moved = delivered = dropped = delay_steps = 0
    for l in st.topo.links:
        for pkt in departed[l.id]:
            pkt.hops_taken += 1
            moved += 1
            if pkt.dst == l.dst:
                delivered += 1
                delay_steps += max(0, (st.slot - pkt.created_slot + 1)
                                   - st.routes.distance(pkt.src, pkt.dst))
            else:
                nxt = st.routes.hop(l.dst, pkt.dst)
                if not st.buffers[nxt].push(pkt):
                    dropped += 1

    st.delivered += delivered
    st.dropped_arrival += dropped
    st.in_system = p_before - delivered - dropped
    out = StepOutcome(slot=st.slot, in_system_before=p_before, moved=moved,
                      dropped=dropped, delivered=delivered, delay_steps=delay_steps)
    st.slot += 1
    st.check_conservation()
    return out


def demand_vectors(st: EpisodeState) -> dict:
    """Per node: {neighbor: queued packets in the buffer toward it}."""
    return {n.id: {l.dst: st.buffers[l.id].occupancy for l in st.topo.out_links(n.id)}
            for n in st.topo.nodes}


def predict_occupancies(st: EpisodeState, powers) -> np.ndarray:
    """Per-link occupancy expected after one slot under `powers`.

    Scheduled departures leave each queue from the front; each departing
    packet that has not reached its destination lands in its next-hop
    buffer. Clamped to [0, capacity] (arrival overflow is not predicted)."""
    powers = np.asarray(powers, dtype=float)
    occ = st.occupancies()
    dep = np.minimum(occ, packets_per_slot_all(powers, st.budget, st.interference))
    arrivals = np.zeros_like(occ)
    for l in st.topo.links:
        for pkt in islice(st.buffers[l.id].queue, int(dep[l.id])):
            if pkt.dst != l.dst:
                arrivals[st.routes.hop(l.dst, pkt.dst)] += 1
    cap = st.topo.buffer_capacity
    return np.clip(occ - dep + arrivals, 0, cap)


def predict_demand(st: EpisodeState, d_current) -> dict:
    """One-slot-ahead demand vectors under the currently executing schedule."""
    pred = predict_occupancies(st, d_current)
    return {n.id: {l.dst: int(pred[l.id]) for l in st.topo.out_links(n.id)}
            for n in st.topo.nodes}


def is_terminal(st: EpisodeState) -> bool:
    return st.in_system == 0


def inject_continuous(st: EpisodeState, rate: int, kind: str = "uniform",
                      rng=None, sampler: TrafficSampler | None = None) -> int:
    """Add `rate` packets with the workload distribution; returns count injected
    into buffers (overflow counts as injection drops).

    Continuous runs should pass a persistent TrafficSampler so the
    few/many node subsets stay fixed; otherwise they are redrawn per call.
    """
    if rate < 0:
        raise SimulationError(f"injection rate must be non-negative, got {rate}")
    if rate == 0:
        return 0
    rng = st.rng if rng is None else as_rng(rng)
    if sampler is None:
        sampler = TrafficSampler(st.topo, kind, rng)
    srcs, dsts = sampler.sample(rate, rng)
    ok = 0
    for s, d in zip(srcs, dsts):
        if st.inject(int(s), int(d)):
            ok += 1
    st.check_conservation()
    return ok


# ---------------------------------------------------------------------------
# CSV interfaces

def save_traffic_csv(tm: TrafficMatrix, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["src", "dst", "count"])
        for src, dst in zip(*np.nonzero(tm.demand)):
            w.writerow([int(src), int(dst), int(tm.demand[src, dst])])


def load_traffic_csv(path, n_nodes: int) -> TrafficMatrix:
    demand = np.zeros((n_nodes, n_nodes), dtype=np.int64)
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header != ["src", "dst", "count"]:
            raise SimulationError(f"{path}: expected header src,dst,count")
        for row in r:
            if not row:
                continue
            src, dst, count = int(row[0]), int(row[1]), int(row[2])
            if not (0 <= src < n_nodes and 0 <= dst < n_nodes):
                raise SimulationError(f"{path}: node id out of range in row {row}")
            if src == dst or count < 0:
                raise SimulationError(f"{path}: invalid traffic row {row}")
            demand[src, dst] += count
    return TrafficMatrix(demand=demand)


def write_step_log(outcomes, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["slot", "P", "M", "D", "delivered"])
        for o in outcomes:
            w.writerow([o.slot, o.in_system_before, o.moved, o.dropped, o.delivered])
