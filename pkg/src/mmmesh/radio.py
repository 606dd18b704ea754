"""Physical-layer math for directional mmWave links.

Link budgets are computed in dB (transmit power minus free-space path loss
minus a per-episode thermal noise draw) and converted to linear mW once.
Interference is then subtracted linearly from the wanted signal, and the
floored difference is treated as an SNR against a unit noise floor when
converting to capacity. Transmit powers are normalized fractions in [0, 1]
that scale both the wanted signal and every interference contribution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import RadioDomainError
from .topology import Topology

SPEED_OF_LIGHT = 2.998e8
DEFAULT_NOISE_RANGE = (0.0, 2.0)  # per-link thermal noise draw, dB
_FLOOR_EPS = 1e-9  # guards floor() against last-ulp misses on exact ratios


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def fspl(dist: float, freq: float, d_t: float = 1.0, d_r: float = 1.0) -> float:
    """Free-space path loss in dB between directive antennas.

    Positive return values are losses to subtract from the transmit power;
    high antenna gains can make the value negative.
    """
    if dist <= 0 or freq <= 0 or d_t <= 0 or d_r <= 0:
        raise RadioDomainError(
            f"fspl arguments must be positive (dist={dist}, freq={freq}, d_t={d_t}, d_r={d_r})")
    lam_term = SPEED_OF_LIGHT / (4.0 * math.pi * dist * freq)
    return -10.0 * math.log10(d_t * d_r * lam_term * lam_term)


def directivity(theta: float, d_max: float) -> float:
    """Radiation pattern: peak gain scaled by a Gaussian falloff off boresight."""
    if d_max <= 0:
        raise RadioDomainError(f"d_max must be positive, got {d_max}")
    return d_max * math.exp(-4.0 * theta * theta / math.sqrt(2.0))


def received_power(link, tx_power_dbm: float, dist: float,
                   theta_t: float = 0.0, theta_r: float = 0.0,
                   noise_db: float = 0.0) -> float:
    """Received power in linear mW for one transmitter/receiver geometry."""
    loss = fspl(dist, link.freq_hz,
                directivity(theta_t, link.dt_max),
                directivity(theta_r, link.dr_max))
    return dbm_to_mw(tx_power_dbm - loss - noise_db)


@dataclass
class LinkBudget:
    """Per-link full-power figures, in link-id order.

    p_r: received power at full transmit power, no interference (mW).
    c_max: capacity at that power (bits/s).
    n0: nominal packet budget per slot.
    noise_db: the thermal noise draw behind p_r, kept for reproducibility.
    """

    p_r: np.ndarray
    c_max: np.ndarray
    n0: np.ndarray
    bandwidth: np.ndarray
    noise_db: np.ndarray


def link_budget(topo: Topology, rng=None,
                noise_range=DEFAULT_NOISE_RANGE) -> LinkBudget:
    """Full-power link budget with beams aimed along each link (boresight)."""
    rng = as_rng(rng)
    E = topo.num_links
    p_r = np.empty(E)
    c_max = np.empty(E)
    n0 = np.empty(E, dtype=np.int64)
    bw = np.empty(E)
    noise = np.empty(E)
    for l in topo.links:
        eta = rng.uniform(*noise_range)
        d = topo.link_distance(l)
        p_r[l.id] = received_power(l, l.max_tx_power_dbm, d, noise_db=eta)
        c_max[l.id] = capacity(p_r[l.id], l.bandwidth_hz)
        n0[l.id] = l.pkts_per_slot
        bw[l.id] = l.bandwidth_hz
        noise[l.id] = eta
    return LinkBudget(p_r=p_r, c_max=c_max, n0=n0, bandwidth=bw, noise_db=noise)


@dataclass
class InterferenceMatrix:
    """matrix[l, l'] = power (mW) a full-power transmission on l' leaks into l."""

    matrix: np.ndarray
    mode: str = "synthetic"
    level: float | None = None


def gen_interference_synthetic(topo: Topology, level: float, seed,
                               budget: LinkBudget | None = None) -> InterferenceMatrix:
    """Abstract interference: every pair couples at a fixed fraction of the
    victim's own signal power, jittered by u ~ U[1.0, 1.1].

    At level 1.0 a single full-power interferer is enough to zero any link.
    When budget is None it is derived from the same RNG stream, so matrix
    and budget stay mutually consistent for a given seed.
    """
    if not 0.0 <= level <= 1.0:
        raise RadioDomainError(f"interference level must be in [0,1], got {level}")
    rng = as_rng(seed)
    if budget is None:
        budget = link_budget(topo, rng)
    E = topo.num_links
    u = rng.uniform(1.0, 1.1, size=(E, E))
    m = level * budget.p_r[:, None] * u
    np.fill_diagonal(m, 0.0)
    return InterferenceMatrix(matrix=m, mode="synthetic", level=level)


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return math.acos(min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv))))


def gen_interference_geometric(topo: Topology, seed,
                               noise_range=DEFAULT_NOISE_RANGE) -> InterferenceMatrix:
    """Interference from node geometry: each entry is the received power at
    the victim's receiver from the interferer's transmitter, with both
    antennas evaluated off-boresight and a fresh noise draw per entry.

    Distances are floored at 1 m; an interferer transmitting from the
    victim's own receiver node counts as boresight at that floor (the
    no-full-duplex case).
    """
    rng = as_rng(seed)
    E = topo.num_links
    pos = topo.positions
    m = np.zeros((E, E))
    for l in topo.links:  # victim, receiver at l.dst with beam toward l.src
        rx_beam = pos[l.src] - pos[l.dst]
        for lp in topo.links:  # interferer, transmitting l'.src -> l'.dst
            if lp.id == l.id:
                continue
            to_victim = pos[l.dst] - pos[lp.src]
            d = max(float(np.linalg.norm(to_victim)), 1.0)
            theta_t = _angle(pos[lp.dst] - pos[lp.src], to_victim)
            theta_r = _angle(rx_beam, pos[lp.src] - pos[l.dst])
            eta = rng.uniform(*noise_range)
            loss = fspl(d, lp.freq_hz,
                        directivity(theta_t, lp.dt_max),
                        directivity(theta_r, l.dr_max))
            m[l.id, lp.id] = dbm_to_mw(lp.max_tx_power_dbm - loss - eta)
    return InterferenceMatrix(matrix=m, mode="geometric", level=None)


def episode_radio(topo: Topology, mode: str, level: float, seed,
                  noise_range=DEFAULT_NOISE_RANGE):
    """Draw one episode's (LinkBudget, InterferenceMatrix) from a single seed."""
    rng = as_rng(seed)
    budget = link_budget(topo, rng, noise_range)
    if mode == "synthetic":
        im = gen_interference_synthetic(topo, level, rng, budget)
    elif mode == "geometric":
        im = gen_interference_geometric(topo, rng, noise_range)
    else:
        raise RadioDomainError(f"unknown interference mode {mode!r}")
    return budget, im


def _check_powers(powers: np.ndarray):
    if np.any(powers < 0.0) or np.any(powers > 1.0):
        raise RadioDomainError("power fractions must lie in [0, 1]")


def effective_power(l: int, powers, budget: LinkBudget, im: InterferenceMatrix) -> float:
    """Wanted signal minus the power-weighted interference sum, floored at 0."""
    powers = np.asarray(powers, dtype=float)
    _check_powers(powers)
    interf = float(im.matrix[l] @ powers)  # diagonal is 0, so l excludes itself
    return max(0.0, powers[l] * budget.p_r[l] - interf)


def effective_powers(powers, budget: LinkBudget, im: InterferenceMatrix) -> np.ndarray:
    powers = np.asarray(powers, dtype=float)
    _check_powers(powers)
    return np.maximum(0.0, powers * budget.p_r - im.matrix @ powers)


def capacity(p_eff: float, bandwidth: float) -> float:
    """Shannon-style capacity with p_eff as SNR against a unit noise floor."""
    if p_eff < 0:
        raise RadioDomainError(f"effective power must be non-negative, got {p_eff}")
    return bandwidth * math.log1p(p_eff) / math.log(2.0)


def packets_per_slot(l: int, powers, budget: LinkBudget, im: InterferenceMatrix) -> int:
    """Nominal packet budget N0 scaled by the realized-to-ideal capacity ratio."""
    p_eff = effective_power(l, powers, budget, im)
    ratio = math.log1p(p_eff) / math.log1p(budget.p_r[l])
    return int(math.floor(budget.n0[l] * ratio + _FLOOR_EPS))


def packets_per_slot_all(powers, budget: LinkBudget, im: InterferenceMatrix) -> np.ndarray:
    p_eff = effective_powers(powers, budget, im)
    ratio = np.log1p(p_eff) / np.log1p(budget.p_r)
    return np.floor(budget.n0 * ratio + _FLOOR_EPS).astype(np.int64)


# ---------------------------------------------------------------------------
# CSV import/export: row l = interference suffered BY link l, header = link ids

def save_interference_csv(im: InterferenceMatrix, path):
    E = im.matrix.shape[0]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([str(i) for i in range(E)])
        for row in im.matrix:
            w.writerow([f"{v:.10e}" for v in row])


def load_interference_csv(path) -> InterferenceMatrix:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise RadioDomainError(f"{path}: empty interference file")
    E = len(rows[0])
    data = rows[1:]
    if len(data) != E or any(len(r) != E for r in data):
        raise RadioDomainError(f"{path}: expected {E}x{E} matrix after header")
    m = np.array([[float(v) for v in r] for r in data])
    if np.any(m < 0):
        raise RadioDomainError(f"{path}: negative interference entry")
    np.fill_diagonal(m, 0.0)
    return InterferenceMatrix(matrix=m, mode="file", level=None)
