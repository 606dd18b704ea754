"""Mesh topology: nodes, directed links, per-link FIFO buffers, hop routing.

Every directed link owns the transmit buffer at its source node, so a node
with k outgoing links holds k independent queues. Routing is static
hop-count shortest path computed once per topology.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import TopologyError

DEFAULT_BUFFER_CAPACITY = 650
NOMINAL_PPS_RANGE = (115, 125)
LOADED_PPS_DEFAULT = 120

# built-in generator name -> (node count, link count)
BUILTIN_SIZES = {
    "small-10": (4, 10),
    "medium-48": (19, 48),
    "large-96": (37, 96),
}


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Link:
    """Directed mmWave link with its radio parameters.

    pkts_per_slot is N0: the packet budget the link sustains per slot at
    full power with no interference. Generators sample it uniformly from
    [115, 125]; topologies loaded from file get a fixed default because
    the file schema does not carry it.
    """

    id: int
    src: int
    dst: int
    max_tx_power_dbm: float = 30.0
    freq_hz: float = 60e9
    bandwidth_hz: float = 400e6
    dt_max: float = 1e4
    dr_max: float = 1e4
    pkts_per_slot: int = LOADED_PPS_DEFAULT


class Topology:
    """Validated immutable graph of nodes and directed links."""

    def __init__(self, nodes, links, buffer_capacity=DEFAULT_BUFFER_CAPACITY):
        self.nodes = list(nodes)
        self.links = list(links)
        self.buffer_capacity = int(buffer_capacity)
        self._validate()
        self.link_index = {(l.src, l.dst): l.id for l in self.links}
        self._out = {n.id: [] for n in self.nodes}
        for l in self.links:
            self._out[l.src].append(l)
        self.positions = np.array([[n.x, n.y] for n in self.nodes], dtype=float)

    def _validate(self):
        if self.buffer_capacity <= 0:
            raise TopologyError("buffer_capacity must be positive")
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            raise TopologyError("node ids must be dense 0..N-1 in order")
        for n in self.nodes:
            if not (math.isfinite(n.x) and math.isfinite(n.y)):
                raise TopologyError(f"node {n.id} has non-finite position")
        lids = [l.id for l in self.links]
        if lids != list(range(len(lids))):
            raise TopologyError("link ids must be dense 0..E-1 in order")
        seen = set()
        nnode = len(self.nodes)
        for l in self.links:
            if l.src == l.dst:
                raise TopologyError(f"link {l.id} is a self-loop at node {l.src}")
            if not (0 <= l.src < nnode and 0 <= l.dst < nnode):
                raise TopologyError(f"link {l.id} references unknown node")
            if (l.src, l.dst) in seen:
                raise TopologyError(f"duplicate link {l.src}->{l.dst}")
            seen.add((l.src, l.dst))
            if l.bandwidth_hz <= 0 or l.freq_hz <= 0:
                raise TopologyError(f"link {l.id} has non-positive bandwidth or frequency")
            if l.dt_max <= 0 or l.dr_max <= 0:
                raise TopologyError(f"link {l.id} has non-positive directivity peak")

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_links(self) -> int:
        return len(self.links)

    def out_links(self, node_id: int):
        return self._out[node_id]

    def link_distance(self, link: Link) -> float:
        return float(np.linalg.norm(self.positions[link.src] - self.positions[link.dst]))


@dataclass
class RoutingTable:
    """next_link[(node, dst)] -> outgoing link id; dist[(node, dst)] -> hops."""

    next_link: dict
    dist: dict

    def hop(self, node: int, dst: int) -> int:
        try:
            return self.next_link[(node, dst)]
        except KeyError:
            raise TopologyError(f"no route from node {node} to node {dst}") from None

    def distance(self, node: int, dst: int) -> int:
        try:
            return self.dist[(node, dst)]
        except KeyError:
            raise TopologyError(f"no route from node {node} to node {dst}") from None


def compute_routes(topo: Topology) -> RoutingTable:
    """Hop-count shortest paths for every ordered node pair.

    BFS from each destination over reversed edges gives distances; each
    node then forwards to the out-neighbor one hop closer, lowest node id
    winning ties.
    """
    rev = {n.id: [] for n in topo.nodes}  # dst -> list of src
    for l in topo.links:
        rev[l.dst].append(l.src)
    next_link, dist = {}, {}
    for d in range(topo.num_nodes):
        hops = {d: 0}
        q = deque([d])
        while q:
            v = q.popleft()
            for u in rev[v]:
                if u not in hops:
                    hops[u] = hops[v] + 1
                    q.append(u)
        for n in range(topo.num_nodes):
            if n == d:
                continue
            if n not in hops:
                raise TopologyError(f"node {d} unreachable from node {n}")
            best = None
            for l in topo.out_links(n):
                if hops.get(l.dst, math.inf) == hops[n] - 1:
                    if best is None or l.dst < best.dst:
                        best = l
            next_link[(n, d)] = best.id
            dist[(n, d)] = hops[n]
    return RoutingTable(next_link=next_link, dist=dist)


class LinkBuffer:
    """FIFO packet queue owned by one directed link."""

    __slots__ = ("capacity", "queue")

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.queue = deque()

    @property
    def occupancy(self) -> int:
        return len(self.queue)

    @property
    def free_space(self) -> int:
        return self.capacity - len(self.queue)

    def push(self, pkt) -> bool:
        """Append pkt if there is room; return False (drop) otherwise."""
        if len(self.queue) >= self.capacity:
            return False
        self.queue.append(pkt)
        return True

    def pop(self):
        return self.queue.popleft()


def make_buffers(topo: Topology):
    return [LinkBuffer(topo.buffer_capacity) for _ in topo.links]


def buffer_load_fractions(buffers) -> np.ndarray:
    """Per-link occupancy/capacity in link-id order, each entry in [0, 1]."""
    return np.array([b.occupancy / b.capacity for b in buffers], dtype=np.float64)


# ---------------------------------------------------------------------------
# generators

def _grid_positions(n: int, rng: np.random.Generator, spacing=100.0, jitter=20.0):
    cols = math.ceil(math.sqrt(n))
    pts = []
    for i in range(n):
        r, c = divmod(i, cols)
        pts.append((c * spacing + rng.uniform(-jitter, jitter),
                    r * spacing + rng.uniform(-jitter, jitter)))
    return pts


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def generate_topology(kind: str, seed: int,
                      buffer_capacity=DEFAULT_BUFFER_CAPACITY) -> Topology:
    """Built-in generator: jittered grid, spanning tree plus nearest extras.

    Each selected node pair becomes two directed links (one per direction),
    so the result is strongly connected by construction. Nominal per-slot
    packet budgets are sampled uniformly from [115, 125] per link.
    """
    if kind not in BUILTIN_SIZES:
        raise TopologyError(f"unknown built-in topology {kind!r}; "
                            f"choose one of {sorted(BUILTIN_SIZES)}")
    n_nodes, n_links = BUILTIN_SIZES[kind]
    n_pairs = n_links // 2
    rng = np.random.default_rng(seed)
    pts = _grid_positions(n_nodes, rng)
    cand = []
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            d = math.dist(pts[a], pts[b])
            cand.append((d, a, b))
    cand.sort()
    uf = _UnionFind(n_nodes)
    chosen, extras = [], []
    for d, a, b in cand:
        if uf.union(a, b):
            chosen.append((a, b))
        else:
            extras.append((a, b))
    if len(chosen) > n_pairs:
        raise TopologyError(f"{kind}: {n_nodes} nodes need more than {n_links} links to connect")
    chosen.extend(extras[: n_pairs - len(chosen)])
    chosen.sort()
    nodes = [Node(i, x, y) for i, (x, y) in enumerate(pts)]
    links = []
    for a, b in chosen:
        for src, dst in ((a, b), (b, a)):
            links.append(Link(id=len(links), src=src, dst=dst,
                              pkts_per_slot=int(rng.integers(NOMINAL_PPS_RANGE[0],
                                                             NOMINAL_PPS_RANGE[1] + 1))))
    return Topology(nodes, links, buffer_capacity)


def build_topology(spec: dict) -> Topology:
    """Build from a description dict: either a generator name or explicit lists.

    Generator form: {"generator": "small-10", "seed": 7}.
    Explicit form: {"nodes": [(id, x, y), ...],
                    "links": [{"id":..., "src":..., "dst":..., ...}, ...]}.
    """
    cap = spec.get("buffer_capacity", DEFAULT_BUFFER_CAPACITY)
    if "generator" in spec:
        return generate_topology(spec["generator"], spec.get("seed", 0), cap)
    try:
        nodes = [Node(int(i), float(x), float(y)) for i, x, y in spec["nodes"]]
        links = [Link(**{k: v for k, v in d.items()}) for d in spec["links"]]
    except (KeyError, TypeError, ValueError) as e:
        raise TopologyError(f"bad topology description: {e}") from e
    return Topology(nodes, links, cap)


# ---------------------------------------------------------------------------
# file I/O

TOPOLOGY_HEADER = "mmmesh-topology v1"


def save_topology(topo: Topology, path):
    with open(path, "w") as f:
        f.write(TOPOLOGY_HEADER + "\n")
        f.write(f"# buffer_capacity {topo.buffer_capacity}\n")
        f.write("[nodes]\n")
        for n in topo.nodes:
            f.write(f"{n.id} {n.x:.6f} {n.y:.6f}\n")
        f.write("[links]\n")
        for l in topo.links:
            f.write(f"{l.id} {l.src} {l.dst} {l.max_tx_power_dbm:g} {l.freq_hz:g} "
                    f"{l.bandwidth_hz:g} {l.dt_max:g} {l.dr_max:g}\n")


def load_topology(path, pkts_per_slot=LOADED_PPS_DEFAULT,
                  buffer_capacity=None) -> Topology:
    """Parse the sectioned text format written by save_topology.

    The file schema does not carry per-link packet budgets, so every link
    gets `pkts_per_slot` (default 120).
    """
    nodes, links = [], []
    section = None
    cap = DEFAULT_BUFFER_CAPACITY
    with open(path) as f:
        header = f.readline().strip()
        if header != TOPOLOGY_HEADER:
            raise TopologyError(f"{path}: expected header {TOPOLOGY_HEADER!r}, got {header!r}")
        for lineno, raw in enumerate(f, start=2):
            line = raw.strip()
            if line.startswith("# buffer_capacity"):
                cap = int(line.split()[-1])
                continue
            if not line or line.startswith("#"):
                continue
            if line in ("[nodes]", "[links]"):
                section = line
                continue
            parts = line.split()
            try:
                if section == "[nodes]":
                    nid, x, y = int(parts[0]), float(parts[1]), float(parts[2])
                    nodes.append(Node(nid, x, y))
                elif section == "[links]":
                    if len(parts) != 8:
                        raise ValueError(f"expected 8 link fields, got {len(parts)}")
                    links.append(Link(id=int(parts[0]), src=int(parts[1]), dst=int(parts[2]),
                                      max_tx_power_dbm=float(parts[3]), freq_hz=float(parts[4]),
                                      bandwidth_hz=float(parts[5]), dt_max=float(parts[6]),
                                      dr_max=float(parts[7]), pkts_per_slot=pkts_per_slot))
                else:
                    raise ValueError("data before any section header")
            except (ValueError, IndexError) as e:
                raise TopologyError(f"{path}:{lineno}: {e}") from e
    if buffer_capacity is not None:
        cap = buffer_capacity
    return Topology(nodes, links, cap)
