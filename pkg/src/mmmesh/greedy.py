"""Greedy baseline scheduler: randomized single-pass link selection with
residual-profit power assignment.

Links are drawn in uniformly random order. For each link every power on
the grid is scored by residual profit RP = C+ - C-, where C+ is the
deliverable-packet estimate for the candidate under the interference of
the already-selected set, and C- estimates the packets the candidate's
interference takes away from that set. The best positive-RP power is
kept; a link rejected once is never reconsidered.

Everything here is deliberately scalar Python over full interference
sums: the point of the baseline is its cubic-in-links decision cost, not
speed. Do not "optimize" the sums away when touching this file.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .errors import SimulationError
from .radio import InterferenceMatrix, LinkBudget, as_rng

_FLOOR_EPS = 1e-9


def _dense(selection: dict, E: int) -> list:
    powers = [0.0] * E
    for lp, p in selection.items():
        powers[lp] = p
    return powers


def _effective(l: int, powers: list, budget: LinkBudget, im: InterferenceMatrix) -> float:
    """P_eff of link l under a full power assignment: own received power minus
    the interference sum over every other link (zeros included on purpose)."""
    m = im.matrix
    interf = 0.0
    for lp in range(len(powers)):
        if lp != l:
            interf += powers[lp] * m[l, lp]
    return max(0.0, powers[l] * budget.p_r[l] - interf)


def _pps(l: int, p_eff: float, budget: LinkBudget) -> int:
    ratio = math.log1p(p_eff) / math.log1p(budget.p_r[l])
    return int(math.floor(budget.n0[l] * ratio + _FLOOR_EPS))


def capacity_gain(l: int, p: float, selection: dict, queues, budget: LinkBudget,
                  im: InterferenceMatrix) -> int:
    """Packets link l could deliver at power p alongside the current selection:
    its per-slot budget under that interference, capped by its queue."""
    powers = _dense(selection, len(budget.p_r))
    powers[l] = p
    p_eff = _effective(l, powers, budget, im)
    return min(_pps(l, p_eff, budget), int(queues[l]))


def capacity_loss(l: int, p: float, selection: dict, queues, budget: LinkBudget,
                  im: InterferenceMatrix, exact: bool = False) -> float:
    """Estimated packets the selection loses if (l, p) joins it.

    Default is the linear estimate: each victim's effective-power drop
    times its full-power packets-per-mW slope, capped by what the victim
    was actually going to deliver. With exact=True the victims' deliverable
    packets are recomputed instead (slower, no approximation).
    """
    base = _dense(selection, len(budget.p_r))
    cand = list(base)
    if l not in selection:
        cand[l] = p
    loss = 0.0
    for v in selection:
        if v == l:
            continue
        eff_old = _effective(v, base, budget, im)
        eff_new = _effective(v, cand, budget, im)
        current = min(_pps(v, eff_old, budget), int(queues[v]))
        if exact:
            term = current - min(_pps(v, eff_new, budget), int(queues[v]))
        else:
            term = (eff_old - eff_new) * budget.n0[v] / budget.p_r[v]
            term = min(term, current)
        loss += max(0.0, term)
    return loss


def power_grid(power_levels: int):
    if power_levels < 2:
        raise SimulationError(f"need at least 2 power levels, got {power_levels}")
    return [i / (power_levels - 1) for i in range(power_levels)]


def aggregate_throughput(selection: dict, queues, budget: LinkBudget,
                         im: InterferenceMatrix) -> int:
    """Sum of deliverable-packet estimates over the selected set."""
    return sum(capacity_gain(l, p, selection, queues, budget, im)
               for l, p in selection.items())


def greedy_schedule(queues, budget: LinkBudget, im: InterferenceMatrix,
                    power_levels: int = 11, seed=None, rng=None,
                    exact_loss: bool = False, trace: list | None = None) -> np.ndarray:
    """One scheduling decision. Deterministic given the seed (or Generator).

    trace, if given, receives one dict per accepted link: the chosen power,
    its residual profit, the construction's running deliverable estimate
    ("aggregate": previous value plus the accepted profit, so it cannot
    decrease), and a fresh recomputation over the selected set
    ("aggregate_recomputed": the linear loss estimate may land above or
    below this, so it is allowed to dip).
    """
    queues = np.asarray(queues)
    E = len(budget.p_r)
    if queues.shape != (E,):
        raise SimulationError(f"queue vector has shape {queues.shape}, expected ({E},)")
    levels = power_grid(power_levels)
    rng = as_rng(rng if rng is not None else seed)
    remaining = list(range(E))
    selection: dict = {}
    agg_estimate = 0.0
    while remaining:
        l = remaining.pop(int(rng.integers(len(remaining))))
        best_rp, best_p = 0.0, None
        for p in levels:
            rp = (capacity_gain(l, p, selection, queues, budget, im)
                  - capacity_loss(l, p, selection, queues, budget, im, exact=exact_loss))
            if rp > best_rp:  # strict: ties keep the lowest power
                best_rp, best_p = rp, p
        if best_p is not None:
            selection[l] = best_p
            agg_estimate += best_rp
            if trace is not None:
                trace.append({"link": l, "power": best_p, "rp": best_rp,
                              "aggregate": agg_estimate,
                              "aggregate_recomputed": aggregate_throughput(
                                  selection, queues, budget, im)})
    powers = np.zeros(E)
    for l, p in selection.items():
        powers[l] = p
    return powers


def greedy_decision_time(queue_samples, budget: LinkBudget, im: InterferenceMatrix,
                         power_levels: int = 11, seed=0, warmup: int = 3) -> dict:
    """Wall-clock stats (ms) for greedy decisions over the given queue samples.

    Measures only greedy_schedule itself; at least 30 timed calls.
    """
    samples = list(queue_samples)
    if not samples:
        raise SimulationError("need at least one queue sample")
    rng = as_rng(seed)
    n = max(30, len(samples))
    for i in range(warmup):
        greedy_schedule(samples[i % len(samples)], budget, im, power_levels, rng=rng)
    times = []
    for i in range(n):
        q = samples[i % len(samples)]
        t0 = time.perf_counter()
        greedy_schedule(q, budget, im, power_levels, rng=rng)
        times.append((time.perf_counter() - t0) * 1e3)
    arr = np.array(times)
    return {"mean_ms": float(arr.mean()), "p50_ms": float(np.percentile(arr, 50)),
            "p95_ms": float(np.percentile(arr, 95)), "n": n}
